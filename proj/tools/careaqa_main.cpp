// Copyright 2026 The careaqa Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include "CLI11.hpp"

#include "careaqa/digest.hpp"
#include "careaqa/eval/baselines.hpp"
#include "careaqa/eval/evals.hpp"
#include "careaqa/qa_forge.hpp"
#include "careaqa/run_config.hpp"
#include "careaqa/toy_corpus.hpp"

namespace fs = std::filesystem;
using careaqa::config::RunConfig;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct ConfigArgs {
    std::string config_path;
    std::vector<std::string> overrides;  // "key.path=value"
};

void collect_leaves(const ordered_json& node, const std::string& prefix,
                    std::vector<std::string>& out) {
    for (auto it = node.begin(); it != node.end(); ++it) {
        const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (it.value().is_object())
            collect_leaves(it.value(), path, out);
        else
            out.push_back(path);
    }
}

/// Every RunConfig leaf becomes a CLI flag with its dotted path.
void add_config_flags(CLI::App* cmd, ConfigArgs& args,
                      const std::vector<std::string>& skip = {}) {
    cmd->add_option("--config", args.config_path, "Run config JSON file");
    static const std::vector<std::string> leaves = [] {
        std::vector<std::string> out;
        collect_leaves(RunConfig::defaults(), "", out);
        return out;
    }();
    for (const auto& leaf : leaves) {
        if (std::find(skip.begin(), skip.end(), leaf) != skip.end()) continue;
        cmd->add_option_function<std::string>(
            "--" + leaf,
            [&args, leaf](const std::string& value) { args.overrides.push_back(leaf + "=" + value); },
            "Override config key " + leaf);
    }
}

RunConfig load_config(const ConfigArgs& args) {
    return RunConfig::load(args.config_path, args.overrides);
}

/// Creates runs/<command>-<hash8>[-<n>]/ with the resolved config inside.
std::string make_run_dir(const RunConfig& rc, const std::string& command) {
    const std::string base = rc.get<std::string>("paths.run_dir");
    const std::string hash8 = rc.config_hash().substr(0, 8);
    std::string dir = base + "/" + command + "-" + hash8;
    for (int n = 2; fs::exists(dir); ++n) dir = base + "/" + command + "-" + hash8 + "-" + std::to_string(n);
    fs::create_directories(dir);
    std::ofstream(dir + "/resolved_config.json") << rc.doc().dump(2) << "\n";
    std::ofstream(dir + "/config_hash.txt") << rc.config_hash() << "\n";
    return dir;
}

std::shared_ptr<careaqa::gateway::Gateway> make_gateway(const RunConfig& rc,
                                                        const std::string& default_mock_text) {
    using namespace careaqa::gateway;
    const std::string kind = rc.get<std::string>("gateway.kind");
    if (kind == "http") {
        auto transport =
            std::make_shared<HttpTransport>(rc.get<std::string>("gateway.endpoint_url"));
        return std::make_shared<Gateway>(transport);
    }
    std::vector<MockTransport::Outcome> script;
    const std::string script_path = rc.get<std::string>("gateway.mock_script");
    if (!script_path.empty()) {
        std::ifstream in(script_path);
        if (!in) throw std::runtime_error("cannot open mock script: " + script_path);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json j = json::parse(line);
            const std::string status = j.value("status", "ok");
            MockTransport::Outcome o;
            o.text = j.value("text", "");
            if (status == "ok") o.status = TransportResult::Status::ok;
            else if (status == "transient") o.status = TransportResult::Status::transient;
            else if (status == "auth") o.status = TransportResult::Status::auth;
            else o.status = TransportResult::Status::malformed;
            script.push_back(std::move(o));
        }
    }
    if (script.empty()) script.push_back(MockTransport::ok(default_mock_text));
    return make_mock_gateway(std::move(script), rc.get<bool>("gateway.mock_strict"));
}

std::unique_ptr<careaqa::eval::TokenEmbedder> make_embedder(const RunConfig& rc) {
    if (rc.get<std::string>("eval.embedder") == "file")
        return std::make_unique<careaqa::eval::FileEmbedder>(
            rc.get<std::string>("paths.embedder_file"));
    return std::make_unique<careaqa::eval::CharHashEmbedder>();
}

careaqa::manifest::Corpus load_manifest_from(const RunConfig& rc, const std::string& positional) {
    const std::string path =
        !positional.empty() ? positional : rc.get<std::string>("paths.manifest");
    if (path.empty())
        throw careaqa::config::ConfigError(careaqa::config::ConfigError::Kind::bad_value,
                                           "no manifest given (positional or paths.manifest)");
    return careaqa::manifest::load_manifest(path);
}

/// Applies manifest split tags when present, the configured split otherwise.
std::pair<careaqa::manifest::Corpus, careaqa::manifest::Corpus> split_corpus(
    const careaqa::manifest::Corpus& corpus, const RunConfig& rc) {
    using namespace careaqa::manifest;
    bool tagged = !corpus.records.empty();
    for (const auto& r : corpus.records)
        if (r.split == Split::unassigned) tagged = false;
    if (tagged) {
        Corpus train, test;
        std::map<std::string, Split> side;
        for (const auto& r : corpus.records) {
            side[r.record_id] = r.split;
            (r.split == Split::train ? train : test).records.push_back(r);
        }
        for (const auto& q : corpus.qa)
            (side[q.record_id] == Split::train ? train : test).qa.push_back(q);
        return {std::move(train), std::move(test)};
    }
    SplitSpec spec;
    spec.train_fraction = rc.get<double>("split.train_fraction");
    spec.seed = rc.get<uint64_t>("split.seed");
    spec.disjointness = rc.get<std::string>("split.disjointness") == "record"
                            ? SplitSpec::Disjointness::record
                            : SplitSpec::Disjointness::patient;
    auto result = patient_disjoint_split(corpus, spec);
    return {std::move(result.train), std::move(result.test)};
}

careaqa::fusion::Vocab build_vocab(const careaqa::manifest::Corpus& train, size_t cap) {
    std::vector<std::string> texts;
    for (const auto& q : train.qa) {
        texts.push_back(q.question);
        texts.push_back(q.answer);
    }
    return careaqa::fusion::Vocab::build(texts, cap);
}

careaqa::model::DecodingOptions decoding_from(const RunConfig& rc) {
    careaqa::model::DecodingOptions d;
    d.mode = rc.get<std::string>("generate.decoding") == "temperature"
                 ? careaqa::model::DecodingOptions::Mode::temperature
                 : careaqa::model::DecodingOptions::Mode::greedy;
    d.temperature = rc.get<double>("generate.temperature");
    d.max_new_tokens = rc.get<int>("generate.max_new_tokens");
    d.sample_seed = rc.get<uint64_t>("generate.sample_seed");
    return d;
}

careaqa::trainer::LoadedCheckpoint load_model(const RunConfig& rc, bool force) {
    const std::string path = rc.get<std::string>("paths.checkpoint");
    if (path.empty())
        throw careaqa::fusion::FusionError(careaqa::fusion::FusionError::Kind::model_not_loaded,
                                           "paths.checkpoint is not set");
    const std::string expected = careaqa::model::pipeline_config_hash(rc.pipeline_config());
    return careaqa::trainer::load_checkpoint(path, rc.optimizer_config(), expected, force);
}

std::unique_ptr<careaqa::encoder::FileEmbeddingProvider> make_provider_if_external(
    const RunConfig& rc, const careaqa::model::Pipeline& pipeline) {
    if (pipeline.cfg.enc.kind != careaqa::encoder::EncoderConfig::Kind::external) return nullptr;
    return std::make_unique<careaqa::encoder::FileEmbeddingProvider>(
        rc.get<std::string>("paths.embeddings_dir"));
}

careaqa::eval::Answerer pipeline_answerer(
    const careaqa::model::Pipeline& pipeline, const careaqa::trainer::AudioSource& source,
    const careaqa::model::DecodingOptions& decoding,
    const careaqa::encoder::ExternalEmbeddingProvider* provider = nullptr) {
    return [&pipeline, source, decoding, provider](const careaqa::manifest::AudioRecord& record,
                                                   const std::string& question) {
        careaqa::model::PreparedAudio prepared;
        if (pipeline.cfg.enc.kind == careaqa::encoder::EncoderConfig::Kind::external) {
            prepared.record_id = record.record_id;
            prepared.external =
                careaqa::encoder::encode_external(record.record_id, provider).values;
        } else {
            prepared = pipeline.prepare_from_waveform(source(record), record.record_id, 0, false);
        }
        return pipeline.generate(question, prepared, decoding);
    };
}

void print_stats_table(const std::map<std::string, careaqa::manifest::DatasetStats>& stats) {
    printf("%-12s %10s %10s %11s %9s %8s %8s %10s\n", "dataset", "samples", "qa_pairs",
           "questions", "dur_s", "q_len", "a_len", "uniq_ans");
    for (const auto& [id, s] : stats) {
        if (id == "All") continue;
        printf("%-12s %10zu %10zu %11zu %9.2f %8.2f %8.2f %10zu\n", id.c_str(), s.n_samples,
               s.n_qa_pairs, s.n_questions, s.mean_duration_s, s.mean_q_len, s.mean_a_len,
               s.n_unique_answers);
    }
    const auto& s = stats.at("All");
    printf("%-12s %10zu %10zu %11zu %9.2f %8.2f %8.2f %10zu\n", "All", s.n_samples, s.n_qa_pairs,
           s.n_questions, s.mean_duration_s, s.mean_q_len, s.mean_a_len, s.n_unique_answers);
}

json stats_to_json(const std::map<std::string, careaqa::manifest::DatasetStats>& stats) {
    ordered_json out;
    for (const auto& [id, s] : stats) {
        out[id] = {{"n_samples", s.n_samples},
                   {"n_qa_pairs", s.n_qa_pairs},
                   {"n_questions", s.n_questions},
                   {"mean_duration_s", s.mean_duration_s},
                   {"mean_q_len", s.mean_q_len},
                   {"mean_a_len", s.mean_a_len},
                   {"n_unique_answers", s.n_unique_answers}};
    }
    return out;
}

// --- Commands -----------------------------------------------------------------

int cmd_stats(const ConfigArgs& args, const std::string& manifest_path) {
    const RunConfig rc = load_config(args);
    const auto corpus = load_manifest_from(rc, manifest_path);
    const auto stats = careaqa::manifest::compute_stats(corpus);
    print_stats_table(stats);
    const std::string dir = make_run_dir(rc, "stats");
    std::ofstream(dir + "/stats.json") << stats_to_json(stats).dump(2) << "\n";
    std::cerr << "wrote " << dir << "/stats.json\n";
    return 0;
}

int cmd_split(const ConfigArgs& args, const std::string& manifest_path) {
    const RunConfig rc = load_config(args);
    const auto corpus = load_manifest_from(rc, manifest_path);
    careaqa::manifest::SplitSpec spec;
    spec.train_fraction = rc.get<double>("split.train_fraction");
    spec.seed = rc.get<uint64_t>("split.seed");
    spec.disjointness = rc.get<std::string>("split.disjointness") == "record"
                            ? careaqa::manifest::SplitSpec::Disjointness::record
                            : careaqa::manifest::SplitSpec::Disjointness::patient;
    const auto result = careaqa::manifest::patient_disjoint_split(corpus, spec);

    const std::string dir = make_run_dir(rc, "split");
    {
        std::ofstream out(dir + "/splits.jsonl");
        for (const auto& r : result.train.records)
            out << ordered_json{{"record_id", r.record_id}, {"split", "train"}}.dump() << "\n";
        for (const auto& r : result.test.records)
            out << ordered_json{{"record_id", r.record_id}, {"split", "test"}}.dump() << "\n";
    }
    careaqa::manifest::Corpus tagged;
    tagged.records = result.train.records;
    tagged.records.insert(tagged.records.end(), result.test.records.begin(),
                          result.test.records.end());
    tagged.qa = corpus.qa;
    careaqa::manifest::save_manifest(dir + "/split_manifest.jsonl", tagged);

    printf("train: %zu records / %zu qa pairs\n", result.train.records.size(),
           result.train.qa.size());
    printf("test:  %zu records / %zu qa pairs\n", result.test.records.size(),
           result.test.qa.size());
    printf("achieved train fraction: %.6f\n", result.achieved_fraction);
    std::cerr << "wrote " << dir << "/splits.jsonl and split_manifest.jsonl\n";
    return 0;
}

int cmd_train(const ConfigArgs& args) {
    const RunConfig rc = load_config(args);
    const auto corpus = load_manifest_from(rc, "");
    auto [train_corpus, test_corpus] = split_corpus(corpus, rc);

    auto vocab = build_vocab(train_corpus, rc.get<size_t>("decoder.vocab_cap"));
    auto pipeline = careaqa::model::Pipeline::create(rc.pipeline_config(), std::move(vocab));
    careaqa::trainer::TrainState state(rc.optimizer_config());

    const std::string dir = make_run_dir(rc, "train");
    pipeline.vocab.save(dir + "/vocab.txt");

    careaqa::trainer::FitOptions options;
    options.checkpoint_path = dir + "/checkpoint.caqa";
    options.log_path = dir + "/train_log.jsonl";
    options.validate_every_steps = rc.get<int>("train.validate_every_steps");
    std::unique_ptr<careaqa::encoder::FileEmbeddingProvider> provider;
    if (pipeline.cfg.enc.kind == careaqa::encoder::EncoderConfig::Kind::external) {
        provider = std::make_unique<careaqa::encoder::FileEmbeddingProvider>(
            rc.get<std::string>("paths.embeddings_dir"));
        options.provider = provider.get();
    }

    const auto source =
        careaqa::trainer::make_file_audio_source(rc.get<std::string>("paths.audio_root"));
    const auto result = careaqa::trainer::fit(careaqa::trainer::make_examples(train_corpus),
                                              careaqa::trainer::make_examples(test_corpus),
                                              pipeline, state, rc.optimizer_config(), source,
                                              options);
    printf("steps run: %d\n", result.steps_run);
    if (!result.log.empty()) printf("final train loss: %.6f\n", result.log.back().loss);
    printf("best validation loss: %.6f\n", result.best_val_loss);
    printf("checkpoint: %s\n", options.checkpoint_path.c_str());
    return 0;
}

int cmd_eval(const ConfigArgs& args, bool force) {
    const RunConfig rc = load_config(args);
    const auto corpus = load_manifest_from(rc, "");
    auto [train_corpus, test_corpus] = split_corpus(corpus, rc);
    (void)train_corpus;

    const std::string dir = make_run_dir(rc, "eval");
    careaqa::eval::PredictionMap predictions;
    const std::string predictions_path = rc.get<std::string>("paths.predictions");
    std::optional<careaqa::trainer::LoadedCheckpoint> loaded;
    if (!predictions_path.empty()) {
        predictions = careaqa::eval::load_predictions_jsonl(predictions_path);
    } else {
        loaded = load_model(rc, force);
        const auto source =
            careaqa::trainer::make_file_audio_source(rc.get<std::string>("paths.audio_root"));
        const auto provider = make_provider_if_external(rc, loaded->pipeline);
        predictions = careaqa::eval::generate_predictions(
            test_corpus,
            pipeline_answerer(loaded->pipeline, source, decoding_from(rc), provider.get()));
        careaqa::eval::save_predictions_jsonl(dir + "/predictions.jsonl", predictions);
    }

    auto embedder = make_embedder(rc);
    auto gw = make_gateway(rc, "{\"answer\": \"Yes\"}");
    careaqa::eval::OpenEndedSettings settings;
    settings.judge.parse_retries = rc.get<int>("eval.judge_retries");
    settings.judge.temperature = rc.get<double>("gateway.judge_temperature");
    settings.judge.model_tag = rc.get<std::string>("gateway.model_tag");
    settings.judge.transport_policy = rc.retry_policy();
    settings.meteor.use_stemmer = rc.get<bool>("eval.meteor_stemmer");

    const auto report =
        careaqa::eval::open_ended_eval(test_corpus, predictions, *embedder, *gw, settings);
    const auto report_json = careaqa::eval::metric_report_to_json(report);
    careaqa::eval::validate_metric_report(report_json);
    std::ofstream(dir + "/report.json") << report_json.dump(2) << "\n";

    printf("%-12s %12s %8s %10s %6s\n", "dataset", "semantic_f1", "meteor", "judge_acc", "n");
    for (const auto& [id, e] : report.per_dataset)
        printf("%-12s %12.4f %8.4f %10.4f %6zu\n", id.c_str(), e.semantic_f1, e.meteor,
               e.judge_accuracy, e.n);
    printf("%-12s %12.4f %8.4f %10.4f %6zu\n", "All", report.pooled.semantic_f1,
           report.pooled.meteor, report.pooled.judge_accuracy, report.pooled.n);
    std::cerr << "wrote " << dir << "/report.json\n";
    return 0;
}

int cmd_classify(const ConfigArgs& args, bool force) {
    const RunConfig rc = load_config(args);
    const auto corpus = load_manifest_from(rc, "");

    std::ifstream task_file(rc.get<std::string>("paths.class_task"));
    if (!task_file)
        throw careaqa::config::ConfigError(careaqa::config::ConfigError::Kind::missing_file,
                                           "cannot open paths.class_task");
    json task_json;
    task_file >> task_json;
    const auto task = careaqa::eval::class_task_from_json(task_json);

    std::vector<careaqa::manifest::AudioRecord> records;
    for (const auto& r : corpus.records)
        if (r.dataset_id == task.dataset_id &&
            (r.split != careaqa::manifest::Split::train))
            records.push_back(r);
    if (records.empty())
        throw careaqa::eval::EvalError(careaqa::eval::EvalError::Kind::bad_task,
                                       "no records for dataset " + task.dataset_id);

    auto loaded = load_model(rc, force);
    const auto source =
        careaqa::trainer::make_file_audio_source(rc.get<std::string>("paths.audio_root"));
    const auto provider = make_provider_if_external(rc, loaded.pipeline);
    auto embedder = make_embedder(rc);
    const auto report = careaqa::eval::closed_ended_eval(
        records, task,
        pipeline_answerer(loaded.pipeline, source, decoding_from(rc), provider.get()),
        *embedder);

    const std::string dir = make_run_dir(rc, "classify");
    std::ofstream(dir + "/confusion.csv") << careaqa::eval::confusion_csv(report);
    ordered_json rj = {{"dataset_id", task.dataset_id},
                       {"accuracy", report.accuracy},
                       {"n", report.n},
                       {"unmappable", report.unmappable}};
    std::ofstream(dir + "/classify_report.json") << rj.dump(2) << "\n";
    printf("closed-ended accuracy on %s: %.4f (%zu records)\n", task.dataset_id.c_str(),
           report.accuracy, report.n);
    std::cerr << "wrote " << dir << "/confusion.csv\n";
    return 0;
}

int cmd_genqa(const ConfigArgs& args, const std::string& manifest_path) {
    const RunConfig rc = load_config(args);
    const auto corpus = load_manifest_from(rc, manifest_path);

    std::vector<careaqa::qa_forge::MetadataCard> cards;
    for (const auto& r : corpus.records) {
        careaqa::qa_forge::MetadataCard card;
        card.record_id = r.record_id;
        card.attributes.emplace_back("dataset", r.dataset_id);
        card.attributes.emplace_back("sound type", careaqa::manifest::to_string(r.sound_type));
        card.attributes.emplace_back("duration seconds", std::to_string(r.duration_s));
        std::string labels;
        for (const auto& l : r.labels) labels += labels.empty() ? l : ", " + l;
        card.attributes.emplace_back("annotations", labels.empty() ? "none" : labels);
        cards.push_back(std::move(card));
    }

    const char* default_qas =
        "{\"QAs\": ["
        "{\"question\": \"What sounds were identified during auscultation?\", \"answer\": "
        "\"The annotated sounds were reproduced from the metadata.\"},"
        "{\"question\": \"Is the recording consistent with normal findings?\", \"answer\": "
        "\"See the annotations for this recording.\"},"
        "{\"question\": \"What was the recording duration?\", \"answer\": \"As listed in the "
        "metadata.\"}]}";
    auto gw = make_gateway(rc, default_qas);

    careaqa::qa_forge::GenerationSettings settings;
    settings.retries = rc.get<int>("genqa.retries");
    settings.fanout = rc.get<int>("genqa.fanout");
    settings.per_card_target = rc.get<int>("genqa.per_card_target");
    settings.temperature = rc.get<double>("gateway.generation_temperature");
    settings.max_tokens = rc.get<int>("gateway.max_tokens");
    settings.model_tag = rc.get<std::string>("gateway.model_tag");
    settings.transport_policy = rc.retry_policy();

    auto result = careaqa::qa_forge::generate_qa_corpus(cards, *gw, settings);
    const auto deduped = careaqa::qa_forge::dedupe_and_filter(result.pairs);

    const std::string dir = make_run_dir(rc, "genqa");
    careaqa::qa_forge::write_generation_log(dir + "/genqa_log.jsonl", result.log);
    {
        std::ofstream out(dir + "/genqa_pairs.jsonl");
        for (const auto& p : deduped) {
            ordered_json j;
            j["kind"] = "qa";
            j["qa_id"] = p.qa_id;
            j["record_id"] = p.record_id;
            j["question"] = p.question;
            j["answer"] = p.answer;
            out << j.dump() << "\n";
        }
    }
    printf("generated %zu pairs (%zu after dedup) for %zu records\n", result.pairs.size(),
           deduped.size(), cards.size());
    std::cerr << "wrote " << dir << "/genqa_pairs.jsonl\n";
    return 0;
}

int cmd_gradcheck(const ConfigArgs& args) {
    const RunConfig rc = load_config(args);
    double overall = 0.0;
    printf("%-22s %s\n", "component", "max_rel_err");
    ordered_json components = ordered_json::object();
    for (const auto& entry : careaqa::trainer::run_grad_suite()) {
        overall = std::max(overall, entry.max_rel_err);
        printf("%-22s %.3e\n", entry.component.c_str(), entry.max_rel_err);
        components[entry.component] = entry.max_rel_err;
    }
    printf("max relative error: %.3e\n", overall);
    const std::string dir = make_run_dir(rc, "gradcheck");
    std::ofstream(dir + "/gradcheck.json")
        << ordered_json{{"components", components}, {"max_rel_err", overall}}.dump(2) << "\n";
    return overall <= 1e-4 ? 0 : 1;
}

int cmd_ablate(const ConfigArgs& args) {
    const RunConfig rc = load_config(args);
    const auto corpus = load_manifest_from(rc, "");
    auto [train_corpus, test_corpus] = split_corpus(corpus, rc);

    careaqa::eval::AblationAxes axes;
    for (const auto& r : rc.get<std::vector<int>>("ablate.lora_ranks")) axes.lora_rank.push_back(r);
    for (const auto& k : rc.get<std::vector<std::string>>("ablate.peft_kinds"))
        axes.peft_kind.push_back(careaqa::fusion::adapter_kind_from_string(k));
    for (const auto& k : rc.get<std::vector<std::string>>("ablate.mapper_kinds"))
        axes.mapper_kind.push_back(careaqa::mapper::mapper_kind_from_string(k));
    for (const auto& t : rc.get<std::vector<bool>>("ablate.encoder_trainable"))
        axes.encoder_trainable.push_back(t);
    for (const auto& k : rc.get<std::vector<std::string>>("ablate.encoder_kinds"))
        axes.encoder_kind.push_back(k == "external"
                                        ? careaqa::encoder::EncoderConfig::Kind::external
                                        : careaqa::encoder::EncoderConfig::Kind::toy_transformer);

    const auto source =
        careaqa::trainer::make_file_audio_source(rc.get<std::string>("paths.audio_root"));
    auto embedder = make_embedder(rc);
    auto gw = make_gateway(rc, "{\"answer\": \"Yes\"}");
    careaqa::eval::OpenEndedSettings settings;
    settings.judge.transport_policy = rc.retry_policy();
    settings.meteor.use_stemmer = rc.get<bool>("eval.meteor_stemmer");

    auto fit_and_eval = [&](const careaqa::model::PipelineConfig& cell) {
        auto vocab = build_vocab(train_corpus, rc.get<size_t>("decoder.vocab_cap"));
        auto pipeline = careaqa::model::Pipeline::create(cell, std::move(vocab));
        careaqa::trainer::TrainState state(rc.optimizer_config());
        const auto provider = make_provider_if_external(rc, pipeline);
        careaqa::trainer::FitOptions options;
        options.provider = provider.get();
        careaqa::trainer::fit(careaqa::trainer::make_examples(train_corpus),
                              careaqa::trainer::make_examples(test_corpus), pipeline, state,
                              rc.optimizer_config(), source, options);
        const auto predictions = careaqa::eval::generate_predictions(
            test_corpus, pipeline_answerer(pipeline, source, decoding_from(rc), provider.get()));
        return careaqa::eval::open_ended_eval(test_corpus, predictions, *embedder, *gw, settings);
    };

    const auto runs = careaqa::eval::run_ablation(rc.pipeline_config(), axes, fit_and_eval);
    const std::string dir = make_run_dir(rc, "ablate");
    ordered_json out = ordered_json::array();
    printf("%-40s %12s %8s %10s\n", "cell", "semantic_f1", "meteor", "judge_acc");
    for (const auto& run : runs) {
        const std::string label =
            std::string(to_string(run.cfg.ada.kind)) + "/r" + std::to_string(run.cfg.ada.rank) +
            "/" + careaqa::mapper::to_string(run.cfg.map.kind) + "/" +
            (run.cfg.enc.trainable ? "enc-ft" : "enc-frozen");
        printf("%-40s %12.4f %8.4f %10.4f\n", label.c_str(), run.report.pooled.semantic_f1,
               run.report.pooled.meteor, run.report.pooled.judge_accuracy);
        out.push_back({{"config", careaqa::model::pipeline_config_to_json(run.cfg)},
                       {"report", careaqa::eval::metric_report_to_json(run.report)}});
    }
    std::ofstream(dir + "/ablation.json") << out.dump(2) << "\n";
    std::cerr << "wrote " << dir << "/ablation.json (" << runs.size() << " cells)\n";
    return 0;
}

int cmd_ask(const ConfigArgs& args, const std::string& audio_path, bool force) {
    const RunConfig rc = load_config(args);
    auto loaded = load_model(rc, force);
    const auto wave = careaqa::audio::load_wav(audio_path);
    const auto prepared = loaded.pipeline.prepare_from_waveform(wave, audio_path, 0, false);
    const auto decoding = decoding_from(rc);

    std::cerr << "loaded checkpoint at step " << loaded.meta.step
              << "; one question per line, ctrl-d to exit\n";
    std::string question;
    while (std::getline(std::cin, question)) {
        if (question.empty()) continue;
        std::cout << loaded.pipeline.generate(question, prepared, decoding) << "\n";
    }
    return 0;
}

int cmd_toydata(const std::string& dir, int patients, int records_per_patient, uint64_t seed) {
    careaqa::toy::ToyOptions options;
    options.dir = dir;
    options.n_patients = patients;
    options.records_per_patient = records_per_patient;
    options.seed = seed;
    const auto toy = careaqa::toy::write_toy_corpus(options);
    printf("manifest:   %s\n", toy.manifest_path.c_str());
    printf("class task: %s\n", toy.class_task_path.c_str());
    printf("config:     %s\n", toy.config_path.c_str());
    printf("records: %zu, qa pairs: %zu\n", toy.corpus.records.size(), toy.corpus.qa.size());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"careaqa: audio question answering over auscultation recordings"};
    app.require_subcommand(1);

    ConfigArgs stats_args, split_args, train_args, eval_args, classify_args, genqa_args,
        gradcheck_args, ablate_args, ask_args;
    std::string stats_manifest, split_manifest, genqa_manifest, ask_audio;
    std::string toy_dir = "toy_data";
    int toy_patients = 8, toy_records = 2;
    uint64_t toy_seed = 0;
    bool eval_force = false, classify_force = false, ask_force = false;
    double split_fraction = -1.0;
    int64_t split_seed = -1;

    auto* stats = app.add_subcommand("stats", "Print dataset statistics for a manifest");
    stats->add_option("manifest", stats_manifest, "Manifest JSONL path");
    add_config_flags(stats, stats_args);

    auto* split = app.add_subcommand("split", "Write a patient-disjoint train/test split");
    split->add_option("manifest", split_manifest, "Manifest JSONL path");
    split->add_option("--fraction", split_fraction, "Train fraction (alias for split.train_fraction)");
    split->add_option("--seed", split_seed, "Split seed (alias for split.seed)");
    add_config_flags(split, split_args, {"seed"});

    auto* train = app.add_subcommand("train", "Fit the model on a manifest");
    add_config_flags(train, train_args);

    auto* eval_cmd = app.add_subcommand("eval", "Open-ended evaluation (three metrics)");
    eval_cmd->add_flag("--force", eval_force, "Ignore checkpoint config hash mismatch");
    std::string eval_predictions;
    eval_cmd->add_option("--predictions", eval_predictions,
                         "Score canned predictions (alias for paths.predictions)");
    add_config_flags(eval_cmd, eval_args);

    auto* classify = app.add_subcommand("classify", "Closed-ended classification accuracy");
    classify->add_flag("--force", classify_force, "Ignore checkpoint config hash mismatch");
    add_config_flags(classify, classify_args);

    auto* genqa = app.add_subcommand("genqa", "Generate QA pairs from record metadata");
    genqa->add_option("manifest", genqa_manifest, "Manifest JSONL path");
    add_config_flags(genqa, genqa_args);

    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient check suite");
    add_config_flags(gradcheck, gradcheck_args);

    auto* ablate = app.add_subcommand("ablate", "Run the configured ablation grid");
    add_config_flags(ablate, ablate_args);

    auto* ask = app.add_subcommand("ask", "Interactive questions against one audio file");
    ask->add_option("audio", ask_audio, "WAV file")->required();
    ask->add_flag("--force", ask_force, "Ignore checkpoint config hash mismatch");
    add_config_flags(ask, ask_args);

    auto* toydata = app.add_subcommand("toydata", "Write the bundled synthetic corpus");
    toydata->add_option("--dir", toy_dir, "Output directory");
    toydata->add_option("--patients", toy_patients, "Number of synthetic patients");
    toydata->add_option("--records-per-patient", toy_records, "Recordings per patient");
    toydata->add_option("--seed", toy_seed, "Synthesis seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*stats) return cmd_stats(stats_args, stats_manifest);
        if (*split) {
            if (split_fraction > 0.0)
                split_args.overrides.push_back("split.train_fraction=" +
                                               std::to_string(split_fraction));
            if (split_seed >= 0)
                split_args.overrides.push_back("split.seed=" + std::to_string(split_seed));
            return cmd_split(split_args, split_manifest);
        }
        if (*train) return cmd_train(train_args);
        if (*eval_cmd) {
            if (!eval_predictions.empty())
                eval_args.overrides.push_back("paths.predictions=" + eval_predictions);
            return cmd_eval(eval_args, eval_force);
        }
        if (*classify) return cmd_classify(classify_args, classify_force);
        if (*genqa) return cmd_genqa(genqa_args, genqa_manifest);
        if (*gradcheck) return cmd_gradcheck(gradcheck_args);
        if (*ablate) return cmd_ablate(ablate_args);
        if (*ask) return cmd_ask(ask_args, ask_audio, ask_force);
        if (*toydata) return cmd_toydata(toy_dir, toy_patients, toy_records, toy_seed);
    } catch (const careaqa::manifest::ManifestError& e) {
        std::cerr << "manifest error: " << e.what() << "\n";
        return 2;
    } catch (const careaqa::config::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const careaqa::eval::EvalError& e) {
        std::cerr << "eval error: " << e.what() << "\n";
        return 2;
    } catch (const careaqa::audio::AudioError& e) {
        std::cerr << "audio error: " << e.what() << "\n";
        return 2;
    } catch (const careaqa::trainer::TrainerError& e) {
        std::cerr << "trainer error: " << e.what() << "\n";
        return 2;
    } catch (const careaqa::fusion::FusionError& e) {
        std::cerr << "model error: " << e.what() << "\n";
        return 2;
    } catch (const careaqa::gateway::GatewayError& e) {
        std::cerr << "gateway error: " << e.what() << "\n";
        return 2;
    } catch (const careaqa::qa_forge::QaForgeError& e) {
        std::cerr << "qa generation error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

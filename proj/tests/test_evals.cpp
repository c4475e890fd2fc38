#include "doctest.h"

#include <filesystem>

#include "careaqa/eval/baselines.hpp"
#include "careaqa/eval/evals.hpp"
#include "helpers.hpp"

using namespace careaqa;
using namespace careaqa::eval;

namespace {

manifest::Corpus two_dataset_corpus(size_t n_a, size_t n_b) {
    manifest::Corpus c;
    for (size_t i = 0; i < n_a; ++i) {
        auto r = testutil::record("a" + std::to_string(i), "ds_a", "pa" + std::to_string(i));
        c.qa.push_back(testutil::qa("qa_a" + std::to_string(i), r.record_id,
                                    "question a" + std::to_string(i), "answer alpha"));
        c.records.push_back(std::move(r));
    }
    for (size_t i = 0; i < n_b; ++i) {
        auto r = testutil::record("b" + std::to_string(i), "ds_b", "pb" + std::to_string(i));
        c.qa.push_back(testutil::qa("qa_b" + std::to_string(i), r.record_id,
                                    "question b" + std::to_string(i), "answer beta"));
        c.records.push_back(std::move(r));
    }
    return c;
}

OpenEndedSettings fast_settings() {
    OpenEndedSettings s;
    s.judge.transport_policy.max_attempts = 1;
    s.judge.transport_policy.rate_limit_rps = 1e6;
    return s;
}

}  // namespace

TEST_CASE("open-ended eval: predictions identical to references score perfectly") {
    const auto corpus = two_dataset_corpus(3, 2);
    PredictionMap predictions;
    for (const auto& qa : corpus.qa) predictions[qa.qa_id] = qa.answer;
    auto gw = gateway::make_mock_gateway({gateway::MockTransport::ok(R"({"answer": "Yes"})")});
    const CharHashEmbedder embedder;
    const auto report = open_ended_eval(corpus, predictions, embedder, *gw, fast_settings());
    CHECK(report.pooled.semantic_f1 == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(report.pooled.judge_accuracy == 1.0);
    CHECK(report.pooled.n == 5);
    CHECK(report.per_dataset.at("ds_a").n == 3);
    CHECK(report.per_dataset.at("ds_b").n == 2);
}

TEST_CASE("pooled metrics are example-weighted: {1.0 over 1} and {0.0 over 9} pool to 0.10") {
    const auto corpus = two_dataset_corpus(1, 9);
    PredictionMap predictions;
    for (const auto& qa : corpus.qa) predictions[qa.qa_id] = qa.answer;
    // Honest-yes for the single ds_a pair, no for the nine ds_b pairs.
    std::vector<gateway::MockTransport::Outcome> script;
    script.push_back(gateway::MockTransport::ok(R"({"answer": "Yes"})"));
    for (int i = 0; i < 9; ++i)
        script.push_back(gateway::MockTransport::ok(R"({"answer": "No"})"));
    auto gw = gateway::make_mock_gateway(script);
    const CharHashEmbedder embedder;
    const auto report = open_ended_eval(corpus, predictions, embedder, *gw, fast_settings());
    CHECK(report.per_dataset.at("ds_a").judge_accuracy == 1.0);
    CHECK(report.per_dataset.at("ds_b").judge_accuracy == 0.0);
    CHECK(report.pooled.judge_accuracy == doctest::Approx(0.10).epsilon(1e-9));

    // Micro, never macro: the macro average would be 0.50.
    const double macro = (1.0 + 0.0) / 2.0;
    CHECK(report.pooled.judge_accuracy != doctest::Approx(macro));
}

TEST_CASE("missing predictions are a typed error") {
    const auto corpus = two_dataset_corpus(1, 0);
    auto gw = gateway::make_mock_gateway({gateway::MockTransport::ok(R"({"answer": "Yes"})")});
    const CharHashEmbedder embedder;
    CHECK_THROWS_AS(open_ended_eval(corpus, {}, embedder, *gw, fast_settings()), EvalError);
}

TEST_CASE("metric report JSON validates against the published schema") {
    const auto corpus = two_dataset_corpus(2, 2);
    PredictionMap predictions;
    for (const auto& qa : corpus.qa) predictions[qa.qa_id] = qa.answer;
    auto gw = gateway::make_mock_gateway({gateway::MockTransport::ok(R"({"answer": "Yes"})")});
    const CharHashEmbedder embedder;
    const auto report = open_ended_eval(corpus, predictions, embedder, *gw, fast_settings());
    const auto j = metric_report_to_json(report);
    CHECK_NOTHROW(validate_metric_report(j));
    CHECK(metric_report_schema().contains("properties"));

    // Round-trip through JSON.
    const auto back = metric_report_from_json(j);
    CHECK(back.pooled.n == report.pooled.n);
    CHECK(back.per_dataset.size() == report.per_dataset.size());

    SUBCASE("violations are rejected") {
        auto bad = j;
        bad["pooled"]["semantic_f1"] = 1.5;
        CHECK_THROWS_AS(validate_metric_report(bad), EvalError);
        bad = j;
        bad["pooled"]["n"] = 999;
        CHECK_THROWS_AS(validate_metric_report(bad), EvalError);
        bad = j;
        bad.erase("per_dataset");
        CHECK_THROWS_AS(validate_metric_report(bad), EvalError);
    }
}

TEST_CASE("prediction files round-trip") {
    const std::string dir = testutil::scratch_dir("pred");
    PredictionMap predictions{{"qa0", "crackles heard"}, {"qa1", "all clear"}};
    save_predictions_jsonl(dir + "/p.jsonl", predictions);
    const auto loaded = load_predictions_jsonl(dir + "/p.jsonl");
    CHECK(loaded == predictions);
    std::filesystem::remove_all(dir);
}

TEST_CASE("closed-ended mapping: aliases first, similarity fallback, never dropped") {
    ClassTaskSpec task;
    task.dataset_id = "TR";
    task.classes = {"COPD", "not COPD"};
    task.question_template = "Does the patient have COPD";
    task.label_aliases = {{"COPD", {"copd"}}, {"not COPD", {"healthy", "no copd"}}};
    validate_class_task(task);
    const CharHashEmbedder embedder;

    bool by_alias = false;
    CHECK(map_answer_to_class("copd.", task, embedder, &by_alias) == 0);
    CHECK(by_alias);
    CHECK(map_answer_to_class("Healthy", task, embedder, &by_alias) == 1);
    CHECK(by_alias);
    // Similarity fallback for free-form text mentioning the label.
    CHECK(map_answer_to_class("the patient shows copd findings", task, embedder, &by_alias) == 0);
    CHECK_FALSE(by_alias);

    SUBCASE("ambiguous aliases are rejected") {
        task.label_aliases["COPD"].push_back("healthy");
        CHECK_THROWS_AS(validate_class_task(task), EvalError);
    }
    SUBCASE("fewer than two classes is invalid") {
        task.classes = {"COPD"};
        task.label_aliases.clear();
        CHECK_THROWS_AS(validate_class_task(task), EvalError);
    }
}

TEST_CASE("closed-ended eval with an oracle answerer is perfect and diagonal") {
    ClassTaskSpec task;
    task.dataset_id = "toy4";
    task.classes = {"alpha", "beta", "gamma", "delta"};
    task.question_template = "Which class is present";
    std::vector<manifest::AudioRecord> records;
    for (int i = 0; i < 12; ++i) {
        auto r = testutil::record("r" + std::to_string(i), "toy4", "p" + std::to_string(i));
        r.labels = {task.classes[i % 4]};
        records.push_back(std::move(r));
    }
    const CharHashEmbedder embedder;
    const auto oracle = [&](const manifest::AudioRecord& r, const std::string&) {
        return r.labels[0];
    };
    const auto report = closed_ended_eval(records, task, oracle, embedder);
    CHECK(report.accuracy == 1.0);
    CHECK(report.n == 12);
    for (size_t i = 0; i < 4; ++i)
        for (size_t j = 0; j < 4; ++j)
            CHECK(report.confusion[i][j] == (i == j ? 3u : 0u));

    const std::string csv = confusion_csv(report);
    CHECK(csv.find("alpha") != std::string::npos);
    CHECK(csv.find("3") != std::string::npos);
}

TEST_CASE("majority-answer baseline picks per-dataset modal answers") {
    SUBCASE("single-word modal answer") {
        manifest::Corpus train;
        auto r = testutil::record("k0", "KAUH", "p0");
        train.records.push_back(r);
        for (int i = 0; i < 5; ++i)
            train.qa.push_back(
                testutil::qa("q" + std::to_string(i), "k0", "status", i < 4 ? "Normal" : "Asthma"));
        const auto modal = majority_answers(train);
        CHECK(modal.at("KAUH") == "Normal");
    }
    SUBCASE("sentence-length modal answer") {
        manifest::Corpus train;
        auto r = testutil::record("c0", "CIRCOR", "p0");
        train.records.push_back(r);
        const std::string sentence = "No, no murmurs were detected during the cardiac assessment";
        for (int i = 0; i < 3; ++i)
            train.qa.push_back(testutil::qa("q" + std::to_string(i), "c0", "murmurs", sentence));
        train.qa.push_back(testutil::qa("q9", "c0", "murmurs", "Murmur present"));
        CHECK(majority_answers(train).at("CIRCOR") == sentence);
    }
    SUBCASE("ties break lexicographically") {
        manifest::Corpus train;
        train.records.push_back(testutil::record("t0", "ds", "p0"));
        for (int i = 0; i < 5; ++i) {
            train.qa.push_back(testutil::qa("a" + std::to_string(i), "t0", "q", "zebra"));
            train.qa.push_back(testutil::qa("b" + std::to_string(i), "t0", "q", "apple"));
        }
        CHECK(majority_answers(train).at("ds") == "apple");
    }
    SUBCASE("test datasets without training answers raise EmptyTrain") {
        manifest::Corpus train;
        train.records.push_back(testutil::record("t0", "ds_a", "p0"));
        train.qa.push_back(testutil::qa("q0", "t0", "q", "a"));
        manifest::Corpus test;
        test.records.push_back(testutil::record("x0", "ds_b", "p1"));
        test.qa.push_back(testutil::qa("q1", "x0", "q", "a"));
        try {
            majority_answer_baseline(train, test);
            FAIL("expected EmptyTrain");
        } catch (const EvalError& e) {
            CHECK(e.kind() == EvalError::Kind::empty_train);
        }
    }
    SUBCASE("every test question receives its dataset's modal answer") {
        manifest::Corpus train;
        train.records.push_back(testutil::record("t0", "ds", "p0"));
        train.qa.push_back(testutil::qa("q0", "t0", "q", "common answer"));
        manifest::Corpus test;
        test.records.push_back(testutil::record("x0", "ds", "p1"));
        test.qa.push_back(testutil::qa("q1", "x0", "some question", "irrelevant"));
        test.qa.push_back(testutil::qa("q2", "x0", "another question", "irrelevant"));
        const auto predictions = majority_answer_baseline(train, test);
        CHECK(predictions.at("q1") == "common answer");
        CHECK(predictions.at("q2") == "common answer");
    }
}

TEST_CASE("cascade template substitution") {
    const std::string prompt = fill_cascade_template(
        "What kind of adventitious lung sounds are noted in this examination? The diagnosis is "
        "[predicted label]",
        "Bronchiectasis");
    CHECK(prompt.find("The diagnosis is Bronchiectasis") != std::string::npos);
}

TEST_CASE("cascaded baseline: stage-1 accuracy equals the standalone classifier") {
    // Separable toy audio: class 0 is a low tone, class 1 a high tone.
    const std::string dir = testutil::scratch_dir("cascade");
    encoder::EncoderConfig enc;
    enc.patch_time = 5;
    enc.embed_dim_A = 8;
    enc.n_layers = 1;
    enc.n_heads = 2;
    enc.ff_mult = 1.0;
    enc.trainable = true;

    model::FrontendConfig frontend;
    frontend.n_mels = 16;
    frontend.crop_window_s = 0.25;

    std::vector<ClassifierExample> examples;
    std::vector<manifest::AudioRecord> records;
    std::vector<audio::Waveform> waves;
    for (int i = 0; i < 16; ++i) {
        const int label = i % 2;
        auto wave = testutil::sine(label ? 2400.0 : 300.0, 0.25, 16000);
        const auto spec = audio::log_mel(wave, frontend.n_mels, frontend.win_s, frontend.hop_s);
        examples.push_back({spec, label});
        auto r = testutil::record("c" + std::to_string(i), "toy", "p" + std::to_string(i), 0.25);
        r.labels = {label ? "high tone" : "low tone"};
        records.push_back(r);
        waves.push_back(std::move(wave));
    }
    ClassifierTrainSettings settings;
    settings.lr = 5e-3;
    settings.epochs = 40;
    settings.batch_size = 8;
    const auto classifier =
        train_audio_classifier(examples, {"low tone", "high tone"}, enc, frontend.n_mels, settings);

    size_t standalone_correct = 0;
    for (size_t i = 0; i < examples.size(); ++i)
        standalone_correct += classifier.predict(examples[i].spec) == examples[i].label ? 1 : 0;
    const double standalone_acc =
        static_cast<double>(standalone_correct) / static_cast<double>(examples.size());

    // Text-only decoder for stage 2.
    model::PipelineConfig lm_cfg;
    lm_cfg.frontend = frontend;
    lm_cfg.enc = enc;
    lm_cfg.map.kind = mapper::MapperConfig::Kind::linear;
    lm_cfg.dec.n_layers = 1;
    lm_cfg.dec.n_heads = 2;
    lm_cfg.dec.dim_S = 16;
    lm_cfg.dec.max_positions = 64;
    lm_cfg.ada.kind = fusion::AdapterConfig::Kind::none;
    auto lm = model::Pipeline::create(
        lm_cfg, fusion::Vocab::build({"the diagnosis is low tone high examination"}));

    trainer::AudioSource source = [&](const manifest::AudioRecord& r) {
        const int idx = std::stoi(r.record_id.substr(1));
        return waves[idx];
    };
    model::DecodingOptions decoding;
    decoding.max_new_tokens = 4;
    const auto result = cascaded_baseline(
        classifier, lm, records, source,
        "What sounds are noted? The diagnosis is [predicted label]", decoding, frontend);

    CHECK(result.stage1_accuracy == doctest::Approx(standalone_acc).epsilon(1e-12));
    CHECK(result.log.size() == records.size());
    for (const auto& entry : result.log)
        CHECK(entry.prompt.find("The diagnosis is " + entry.predicted_label) !=
              std::string::npos);
    CHECK(standalone_acc == doctest::Approx(1.0));  // tones are trivially separable

    SUBCASE("a constant classifier yields identical prompts") {
        std::set<std::string> prompts;
        AudioClassifier constant = classifier;
        auto& w = constant.store.value("classifier.w");
        std::fill(w.data.begin(), w.data.end(), 0.0);
        auto& bias = constant.store.value("classifier.b");
        bias.at(0, 0) = 10.0;  // always class 0
        const auto fixed = cascaded_baseline(
            constant, lm, records, source,
            "What sounds are noted? The diagnosis is [predicted label]", decoding, frontend);
        for (const auto& entry : fixed.log) prompts.insert(entry.prompt);
        CHECK(prompts.size() == 1);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("ablation cells cover the cross product exactly") {
    model::PipelineConfig base;
    AblationAxes axes;
    SUBCASE("empty axes yield the base cell") {
        CHECK(ablation_cells(base, axes).size() == 1);
    }
    SUBCASE("three ranks yield three cells") {
        axes.lora_rank = {4, 8, 16};
        const auto cells = ablation_cells(base, axes);
        REQUIRE(cells.size() == 3);
        CHECK(cells[0].ada.rank == 4);
        CHECK(cells[1].ada.rank == 8);
        CHECK(cells[2].ada.rank == 16);
    }
    SUBCASE("full product is pairwise distinct") {
        axes.lora_rank = {4, 8};
        axes.mapper_kind = {mapper::MapperConfig::Kind::linear,
                            mapper::MapperConfig::Kind::transformer};
        axes.encoder_trainable = {false, true};
        axes.encoder_kind = {encoder::EncoderConfig::Kind::toy_transformer,
                             encoder::EncoderConfig::Kind::external};
        const auto cells = ablation_cells(base, axes);
        REQUIRE(cells.size() == 16);
        std::set<std::string> distinct;
        for (const auto& c : cells) distinct.insert(model::pipeline_config_hash(c));
        CHECK(distinct.size() == 16);
    }
}

TEST_CASE("run_ablation invokes fit-and-eval once per cell") {
    model::PipelineConfig base;
    AblationAxes axes;
    axes.peft_kind = {fusion::AdapterConfig::Kind::lora, fusion::AdapterConfig::Kind::prefix};
    int calls = 0;
    const auto runs = run_ablation(base, axes, [&](const model::PipelineConfig& cfg) {
        ++calls;
        MetricReport r;
        r.pooled.n = static_cast<size_t>(cfg.ada.kind == fusion::AdapterConfig::Kind::lora ? 1 : 2);
        return r;
    });
    CHECK(calls == 2);
    REQUIRE(runs.size() == 2);
    CHECK(runs[0].report.pooled.n == 1);
    CHECK(runs[1].report.pooled.n == 2);
}

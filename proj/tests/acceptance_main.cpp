// Acceptance suite: every criterion runs offline and prints one pass/fail
// line. The process exits nonzero if any criterion fails.

#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "careaqa/eval/evals.hpp"
#include "careaqa/eval/judge.hpp"
#include "careaqa/eval/metrics.hpp"
#include "careaqa/fusion/adapters.hpp"
#include "careaqa/manifest.hpp"
#include "careaqa/model.hpp"
#include "careaqa/trainer.hpp"

namespace fs = std::filesystem;
using namespace careaqa;
using nn::Matrix;

namespace {

struct Criterion {
    int number;
    std::string name;
    std::function<std::string()> run;  // empty string = pass, else failure detail
};

double now_s() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::string scratch_dir(const std::string& tag) {
    const std::string dir =
        (fs::temp_directory_path() / ("careaqa-accept-" + tag + "-" + std::to_string(::getpid())))
            .string();
    fs::create_directories(dir);
    return dir;
}

// --- Shared tiny model builders -------------------------------------------------

fusion::DecoderConfig tiny_decoder() {
    fusion::DecoderConfig cfg;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.dim_S = 16;
    cfg.ff_mult = 2.0;
    cfg.max_positions = 48;
    cfg.vocab_size = 32;
    return cfg;
}

struct TinyModel {
    fusion::DecoderConfig dec = tiny_decoder();
    fusion::AdapterConfig ada;
    fusion::AdapterState state;
    nn::ParamStore store;
    std::vector<std::string> trainable;

    explicit TinyModel(fusion::AdapterConfig::Kind kind, int rank = 2, uint64_t seed = 5) {
        ada.kind = kind;
        ada.rank = rank;
        ada.alpha = 2.0 * rank;
        ada.n_virtual_tokens = 3;
        std::mt19937_64 rng(seed);
        fusion::init_decoder_params(store, dec, rng);
        trainable = fusion::apply_adapter(store, dec, ada, state, rng);
    }

    Matrix logits_for(const std::vector<int>& q, const Matrix& audio,
                      const std::vector<int>& ans) const {
        nn::Tape tape;
        auto z_q = fusion::embed_text_on_tape(tape, store, q, dec);
        std::optional<nn::Tape::NodeId> z_ans;
        if (!ans.empty()) z_ans = fusion::embed_text_on_tape(tape, store, ans, dec);
        auto fused = fusion::fuse_on_tape(tape, store, dec, z_q, tape.constant(audio), z_ans);
        auto node =
            fusion::forward_logits_on_tape(tape, store, dec, ada, state, fused.node, fused.meta);
        return tape.value(node);
    }
};

// Overfit fixture shared by criteria 4 and 6.
struct OverfitFixture {
    model::Pipeline pipeline;
    std::vector<trainer::TrainExample> examples;
    trainer::AudioSource source;

    static OverfitFixture make(uint64_t seed, int n_pairs = 32) {
        model::PipelineConfig cfg;
        cfg.frontend.sample_rate_hz = 16000;
        cfg.frontend.n_mels = 16;
        cfg.frontend.win_s = 0.025;
        cfg.frontend.hop_s = 0.01;
        cfg.frontend.crop_window_s = 0.5;
        cfg.frontend.augment_probability = 0.0;
        cfg.enc.patch_time = 10;
        cfg.enc.embed_dim_A = 32;
        cfg.enc.n_layers = 1;
        cfg.enc.n_heads = 4;
        cfg.enc.ff_mult = 2.0;
        cfg.enc.trainable = true;
        cfg.map.kind = mapper::MapperConfig::Kind::linear;
        cfg.dec.n_layers = 2;
        cfg.dec.n_heads = 4;
        cfg.dec.dim_S = 64;
        cfg.dec.ff_mult = 2.0;
        cfg.dec.max_positions = 64;
        cfg.ada.kind = fusion::AdapterConfig::Kind::none;
        cfg.decoder_base_trainable = true;
        cfg.init_seed = seed;

        const char* sounds[8] = {"crackles", "wheezes", "murmur",  "rhonchi",
                                 "stridor",  "rub",     "squawk",  "silence"};
        std::vector<std::string> texts;
        std::vector<trainer::TrainExample> examples;
        for (int i = 0; i < n_pairs; ++i) {
            trainer::TrainExample ex;
            ex.record = manifest::AudioRecord{};
            ex.record.record_id = "ov" + std::to_string(i);
            ex.record.dataset_id = "ov";
            ex.record.patient_id = "p" + std::to_string(i);
            ex.record.audio_path = "none";
            ex.record.duration_s = 0.5;
            ex.record.split = manifest::Split::train;
            ex.qa.qa_id = "qa" + std::to_string(i);
            ex.qa.record_id = ex.record.record_id;
            ex.qa.question = "describe recording number " + std::to_string(i);
            ex.qa.answer = std::string(sounds[i % 8]) + " detected in zone " + std::to_string(i);
            texts.push_back(ex.qa.question);
            texts.push_back(ex.qa.answer);
            examples.push_back(std::move(ex));
        }
        OverfitFixture f{model::Pipeline::create(cfg, fusion::Vocab::build(texts)),
                         std::move(examples), nullptr};
        f.source = [](const manifest::AudioRecord& r) {
            const int idx = std::stoi(r.record_id.substr(2));
            audio::Waveform w;
            w.sample_rate_hz = 16000;
            w.samples.resize(8000);
            const double hz = 200.0 + 40.0 * idx;
            for (size_t i = 0; i < w.samples.size(); ++i)
                w.samples[i] = 0.4 * std::sin(2.0 * M_PI * hz * static_cast<double>(i) / 16000.0);
            return w;
        };
        return f;
    }
};

int run_cli(const std::string& args, const std::string& cwd) {
    const std::string cmd =
        "cd " + cwd + " && " + std::string(CAREAQA_CLI_PATH) + " " + args + " > cli_out.txt 2>&1";
    return WEXITSTATUS(std::system(cmd.c_str()));
}

std::string find_file(const std::string& root, const std::string& filename) {
    for (const auto& entry : fs::recursive_directory_iterator(root))
        if (entry.path().filename() == filename) return entry.path().string();
    return "";
}

// --- Criteria -----------------------------------------------------------------

std::string criterion_gradients() {
    const double t0 = now_s();
    std::string detail;
    for (const auto& entry : trainer::run_grad_suite()) {
        if (entry.max_rel_err > 1e-4)
            detail += entry.component + "=" + std::to_string(entry.max_rel_err) + " ";
    }
    const double elapsed = now_s() - t0;
    if (elapsed >= 60.0) detail += "runtime " + std::to_string(elapsed) + "s >= 60s";
    return detail;
}

std::string criterion_fusion_laws() {
    TinyModel m(fusion::AdapterConfig::Kind::none);
    std::mt19937_64 rng(31);

    // Length law, exact integers.
    const auto seq =
        fusion::fuse(m.store, m.dec, Matrix::randn(4, 16, 1.0, rng),
                     Matrix::randn(6, 16, 1.0, rng), nullptr);
    if (seq.total_len() != 10 || seq.embeddings.rows != 10) return "length law violated";

    // Causality: perturb position j, logits before j move <= 1e-9.
    const Matrix base = fusion::forward_logits(m.store, m.dec, m.ada, m.state, seq);
    // Per-channel perturbation; a constant shift is a LayerNorm null direction.
    fusion::FusedSequence bumped = seq;
    const int j = 5;
    for (int c = 0; c < 16; ++c) bumped.embeddings.at(j, c) += 0.3 * (c + 1);
    const Matrix after = fusion::forward_logits(m.store, m.dec, m.ada, m.state, bumped);
    for (int t = 0; t < j; ++t)
        for (int v = 0; v < base.cols; ++v)
            if (std::abs(base.at(t, v) - after.at(t, v)) > 1e-9)
                return "causality violated at position " + std::to_string(t);

    // Loss-mask law: gradient exactly zero at non-answer positions.
    {
        nn::ParamStore probe;
        std::mt19937_64 r2(33);
        probe.create("logits", Matrix::randn(6, 32, 1.0, r2));
        const Matrix ans = Matrix::randn(2, 16, 1.0, r2);
        const auto tseq = fusion::fuse(m.store, m.dec, Matrix::randn(2, 16, 1.0, r2),
                                       Matrix::randn(2, 16, 1.0, r2), &ans);
        nn::Tape tape;
        auto loss =
            fusion::answer_loss_on_tape(tape, tape.param(probe, "logits"), tseq, {3, 4});
        tape.backward(loss);
        tape.accumulate_param_grads(probe);
        const Matrix& g = probe.at("logits").grad;
        for (int t = 0; t < 6; ++t) {
            if (tseq.loss_mask[t]) continue;
            for (int v = 0; v < 32; ++v)
                if (g.at(t, v) != 0.0) return "loss mask leaked gradient";
        }
    }

    // Softmax normalization.
    for (int t = 0; t < base.rows; ++t) {
        const auto p = fusion::softmax_row(base, t);
        double sum = 0.0;
        for (double v : p) sum += v;
        if (std::abs(sum - 1.0) > 1e-6) return "softmax row sum off";
    }
    return "";
}

std::string criterion_peft_laws() {
    std::mt19937_64 rng(41);
    // Zero-init no-op.
    {
        TinyModel base(fusion::AdapterConfig::Kind::none, 2, 17);
        TinyModel lora(fusion::AdapterConfig::Kind::lora, 2, 17);
        const Matrix audio = Matrix::randn(3, 16, 1.0, rng);
        const auto l0 = base.logits_for({5, 6}, audio, {7, 8});
        const auto l1 = lora.logits_for({5, 6}, audio, {7, 8});
        for (size_t i = 0; i < l0.size(); ++i)
            if (std::abs(l0.data[i] - l1.data[i]) > 1e-9) return "LoRA zero-init not a no-op";
    }
    // Merge equivalence.
    {
        TinyModel m(fusion::AdapterConfig::Kind::lora, 4, 19);
        for (const auto& name : m.trainable)
            if (name.back() == 'B')
                m.store.at(name).value =
                    Matrix::randn(m.store.at(name).value.rows, m.store.at(name).value.cols, 0.05,
                                  rng);
        std::vector<Matrix> inputs, adapted;
        for (int i = 0; i < 5; ++i) {
            inputs.push_back(Matrix::randn(3, 16, 1.0, rng));
            adapted.push_back(m.logits_for({5, 6}, inputs.back(), {7}));
        }
        fusion::merge_lora(m.store, m.dec, m.ada, m.state);
        for (int i = 0; i < 5; ++i) {
            const auto merged = m.logits_for({5, 6}, inputs[i], {7});
            for (size_t k = 0; k < merged.size(); ++k)
                if (std::abs(merged.data[k] - adapted[i].data[k]) > 1e-5)
                    return "merge equivalence violated";
        }
    }
    // Base-weight freeze, bit exact, all adapter kinds.
    for (auto kind : {fusion::AdapterConfig::Kind::lora, fusion::AdapterConfig::Kind::vera,
                      fusion::AdapterConfig::Kind::prefix, fusion::AdapterConfig::Kind::prompt,
                      fusion::AdapterConfig::Kind::ptuning, fusion::AdapterConfig::Kind::none}) {
        TinyModel m(kind, 2, 23);
        std::map<std::string, std::vector<double>> before;
        for (const auto& name : m.store.names_with_prefix("decoder."))
            before[name] = m.store.value(name).data;
        trainer::OptimizerConfig opt;
        opt.peak_lr = 0.05;
        opt.warmup_steps = 0;
        opt.total_steps = 5;
        trainer::AdamW adam(opt);
        const Matrix audio = Matrix::randn(3, 16, 1.0, rng);
        for (int step = 0; step < 5; ++step) {
            m.store.zero_grads();
            nn::Tape tape;
            auto z_q = fusion::embed_text_on_tape(tape, m.store, {5, 6}, m.dec);
            auto z_ans = fusion::embed_text_on_tape(tape, m.store, {7, 8}, m.dec);
            auto fused =
                fusion::fuse_on_tape(tape, m.store, m.dec, z_q, tape.constant(audio), z_ans);
            auto logits = fusion::forward_logits_on_tape(tape, m.store, m.dec, m.ada, m.state,
                                                         fused.node, fused.meta);
            auto loss = fusion::answer_loss_on_tape(tape, logits, fused.meta, {7, 8});
            tape.backward(loss);
            tape.accumulate_param_grads(m.store);
            adam.step(m.store, 0.05);
        }
        for (const auto& [name, data] : before)
            if (m.store.value(name).data != data)
                return std::string("base weight moved under ") + fusion::to_string(kind);
    }
    // Parameter-count arithmetic on one 64x64 target.
    for (int rank : {4, 8, 16}) {
        fusion::DecoderConfig dec = tiny_decoder();
        dec.n_layers = 1;
        dec.dim_S = 64;
        dec.n_heads = 4;
        fusion::AdapterConfig ada;
        ada.kind = fusion::AdapterConfig::Kind::lora;
        ada.rank = rank;
        ada.targets = {"wq"};
        nn::ParamStore store;
        fusion::AdapterState state;
        std::mt19937_64 r2(43);
        fusion::init_decoder_params(store, dec, r2);
        const auto trainable = fusion::apply_adapter(store, dec, ada, state, r2);
        if (store.param_count(trainable) != static_cast<size_t>(2 * rank * 64))
            return "LoRA parameter count mismatch at rank " + std::to_string(rank);
    }
    return "";
}

std::string criterion_overfit() {
    const double t0 = now_s();
    auto f = OverfitFixture::make(2026);
    trainer::OptimizerConfig opt;
    opt.peak_lr = 3e-3;
    opt.warmup_steps = 50;
    opt.batch_size = 8;
    opt.epochs = 500;  // 4 steps per epoch -> 2000 steps
    opt.weight_decay = 0.01;
    opt.seed = 7;
    trainer::TrainState state(opt);
    const auto result =
        trainer::fit(f.examples, {}, f.pipeline, state, opt, f.source, trainer::FitOptions{});

    if (result.log.empty()) return "no training steps ran";
    const double ln_v = std::log(static_cast<double>(f.pipeline.vocab.size()));
    const double first = result.log.front().loss;
    if (std::abs(first - ln_v) > 0.02 * ln_v)
        return "initial loss " + std::to_string(first) + " not within 2% of ln V = " +
               std::to_string(ln_v);
    if (result.steps_run > 2000)
        return "took " + std::to_string(result.steps_run) + " steps (> 2000)";

    // Monotone-trend check: consecutive 200-step window means are
    // non-increasing within 5% slack (plus a small floor once converged).
    const int warmup = 50;
    std::vector<double> window_means;
    for (size_t start = warmup; start + 200 <= result.log.size(); start += 200) {
        double mean = 0.0;
        for (size_t i = start; i < start + 200; ++i) mean += result.log[i].loss;
        window_means.push_back(mean / 200.0);
    }
    for (size_t k = 1; k < window_means.size(); ++k) {
        if (window_means[k] > window_means[k - 1] * 1.05 + 1e-3)
            return "loss trend increased: window " + std::to_string(k - 1) + " -> " +
                   std::to_string(k) + " (" + std::to_string(window_means[k - 1]) + " -> " +
                   std::to_string(window_means[k]) + ")";
    }

    int exact = 0;
    model::DecodingOptions opts;
    opts.max_new_tokens = 16;
    for (const auto& ex : f.examples) {
        const auto prepared = f.pipeline.prepare_from_waveform(f.source(ex.record),
                                                               ex.record.record_id, 0, false);
        const std::string out = f.pipeline.generate(ex.qa.question, prepared, opts);
        if (out == fusion::Vocab::normalize_text(ex.qa.answer)) ++exact;
    }
    const double elapsed = now_s() - t0;
    if (elapsed >= 600.0) return "runtime " + std::to_string(elapsed) + "s >= 600s";
    if (exact < 31)
        return "exact-match " + std::to_string(exact) + "/32 after " +
               std::to_string(result.steps_run) + " steps";
    return "";
}

std::string criterion_schedule() {
    trainer::OptimizerConfig cfg;
    cfg.peak_lr = 2e-5;
    cfg.warmup_steps = 400;
    cfg.total_steps = 2000;
    if (trainer::lr_at_step(0, cfg) != 0.0) return "lr(0) != 0";
    if (trainer::lr_at_step(200, cfg) != 0.5 * cfg.peak_lr) return "lr(200) != 1e-5";
    if (trainer::lr_at_step(400, cfg) != cfg.peak_lr) return "lr(400) != 2e-5";
    if (trainer::lr_at_step(2000, cfg) != 0.0) return "lr(total) != 0";
    return "";
}

std::string criterion_accumulation() {
    auto a = OverfitFixture::make(11, 8);
    auto b = OverfitFixture::make(11, 8);
    trainer::OptimizerConfig full;
    full.batch_size = 8;
    full.accumulation_factor = 1;
    full.total_steps = 10;
    full.warmup_steps = 0;
    full.peak_lr = 1e-3;
    trainer::OptimizerConfig acc = full;
    acc.accumulation_factor = 4;
    trainer::TrainState sa(full), sb(acc);
    for (int step = 0; step < 3; ++step) {
        trainer::train_step(a.examples, a.pipeline, sa, full, a.source);
        trainer::train_step(b.examples, b.pipeline, sb, acc, b.source);
    }
    double max_diff = 0.0;
    for (const auto& name : a.pipeline.store.names()) {
        const auto& va = a.pipeline.store.value(name).data;
        const auto& vb = b.pipeline.store.value(name).data;
        for (size_t i = 0; i < va.size(); ++i)
            max_diff = std::max(max_diff, std::abs(va[i] - vb[i]));
    }
    if (max_diff > 1e-6) return "final parameter diff " + std::to_string(max_diff);
    return "";
}

// Exhaustive alignment oracle, independent of the implementation path.
struct OracleMeteor {
    std::vector<std::string> hyp, ref;
    size_t best_matches{0}, best_chunks{0};

    bool admissible(size_t i, size_t j) const {
        return hyp[i] == ref[j] || eval::simple_stem(hyp[i]) == eval::simple_stem(ref[j]);
    }
    void recurse(size_t i, std::vector<int>& asg, std::vector<char>& used) {
        if (i == hyp.size()) {
            size_t matches = 0, chunks = 0;
            int ph = -5, pr = -5;
            for (size_t h = 0; h < asg.size(); ++h) {
                if (asg[h] < 0) continue;
                ++matches;
                if (static_cast<int>(h) != ph + 1 || asg[h] != pr + 1) ++chunks;
                ph = static_cast<int>(h);
                pr = asg[h];
            }
            if (matches > best_matches ||
                (matches == best_matches && (best_matches == 0 || chunks < best_chunks))) {
                best_matches = matches;
                best_chunks = chunks;
            }
            return;
        }
        for (size_t j = 0; j < ref.size(); ++j) {
            if (used[j] || !admissible(i, j)) continue;
            used[j] = 1;
            asg[i] = static_cast<int>(j);
            recurse(i + 1, asg, used);
            asg[i] = -1;
            used[j] = 0;
        }
        recurse(i + 1, asg, used);
    }
    double score() {
        if (hyp.empty() || ref.empty()) return 0.0;
        std::vector<int> asg(hyp.size(), -1);
        std::vector<char> used(ref.size(), 0);
        recurse(0, asg, used);
        if (best_matches == 0) return 0.0;
        const double m = static_cast<double>(best_matches);
        const double p = m / hyp.size(), r = m / ref.size();
        const double f = 10.0 * p * r / (r + 9.0 * p);
        return f * (1.0 - 0.5 * std::pow(best_chunks / m, 3.0));
    }
};

std::string criterion_meteor() {
    if (std::abs(eval::meteor_score("normal", "normal") - 0.5) > 1e-5)
        return "self score of a single token != 0.5";
    if (std::abs(eval::meteor_score("the cat sat", "the cat sat") - 0.98148) > 1e-5)
        return "3-token self score != 0.98148";
    const std::vector<std::string> words = {"the", "cat", "sat",   "dog",    "ran",   "no",
                                            "yes", "normal", "heard", "sounds", "chest"};
    std::mt19937_64 rng(987);
    for (int trial = 0; trial < 20; ++trial) {
        auto sentence = [&]() {
            std::string s;
            const size_t len = 1 + rng() % 7;
            for (size_t i = 0; i < len; ++i) s += (i ? " " : "") + words[rng() % words.size()];
            return s;
        };
        const std::string hyp = sentence(), ref = sentence();
        OracleMeteor oracle;
        oracle.hyp = eval::metric_tokens(hyp);
        oracle.ref = eval::metric_tokens(ref);
        if (std::abs(eval::meteor_score(hyp, ref) - oracle.score()) > 1e-3)
            return "oracle disagreement on \"" + hyp + "\" vs \"" + ref + "\"";
    }
    return "";
}

std::string criterion_semantic_f1() {
    const eval::CharHashEmbedder embedder;
    const auto self =
        eval::semantic_f1("inspiratory crackles detected", "inspiratory crackles detected",
                          embedder);
    if (std::abs(self.f1 - 1.0) > 1e-6) return "self score != 1";

    // Brute-force greedy max on <= 5-token synthetic vectors.
    struct Synthetic : eval::TokenEmbedder {
        std::vector<double> embed(const std::string& token) const override {
            std::vector<double> v(3, 0.0);
            if (token == "a") v = {1, 0, 0};
            else if (token == "b") v = {0, 1, 0};
            else if (token == "c") v = {0.8, 0.6, 0};
            else if (token == "d") v = {0, 0.6, 0.8};
            else v = {0, 0, 1};
            return v;
        }
        int dim() const override { return 3; }
    } synthetic;
    const std::vector<std::string> hyp_tokens = {"a", "b", "c"};
    const std::vector<std::string> ref_tokens = {"c", "d"};
    auto cos = [&](const std::string& x, const std::string& y) {
        const auto vx = synthetic.embed(x), vy = synthetic.embed(y);
        double s = 0.0;
        for (size_t i = 0; i < vx.size(); ++i) s += vx[i] * vy[i];
        return s;
    };
    double p = 0.0;
    for (const auto& h : hyp_tokens) {
        double best = -1.0;
        for (const auto& r : ref_tokens) best = std::max(best, cos(h, r));
        p += best;
    }
    p /= hyp_tokens.size();
    double r = 0.0;
    for (const auto& t : ref_tokens) {
        double best = -1.0;
        for (const auto& h : hyp_tokens) best = std::max(best, cos(t, h));
        r += best;
    }
    r /= ref_tokens.size();
    const double f1 = 2.0 * p * r / (p + r);
    const auto got = eval::semantic_f1("a b c", "c d", synthetic);
    if (std::abs(got.precision - p) > 1e-12 || std::abs(got.recall - r) > 1e-12 ||
        std::abs(got.f1 - f1) > 1e-12)
        return "greedy-match oracle disagreement";
    return "";
}

std::string criterion_judge() {
    const std::string expected =
        "Your job is to evaluate if the ground-truth and prediction are same/similar.\n"
        "\n"
        "Provide only Yes or No answer as JSON of the following structure:\n"
        "{'answer': ''} without any explanation.\n"
        "\n"
        "Ground-truth: GT_TEXT\n"
        "Prediction: PRED_TEXT";
    if (eval::render_judge_prompt("GT_TEXT", "PRED_TEXT") != expected)
        return "rendered prompt is not byte-identical";

    std::vector<gateway::MockTransport::Outcome> script;
    for (int i = 0; i < 10; ++i)
        script.push_back(gateway::MockTransport::ok(
            i < 7 ? "{\"answer\": \"Yes\"}" : "{'answer': 'no'}"));
    auto gw = gateway::make_mock_gateway(script);
    std::vector<eval::JudgePair> pairs;
    for (int i = 0; i < 10; ++i) pairs.push_back({"qa" + std::to_string(i), "g", "p"});
    eval::JudgeSettings settings;
    settings.transport_policy.rate_limit_rps = 1e6;
    const auto outcome = eval::judge_accuracy(pairs, *gw, settings);
    if (outcome.accuracy != 0.7) return "accuracy arithmetic broke";
    if (!eval::parse_judge_reply("{\"ANSWER\": \"yes\"}").value_or(false))
        return "case-insensitive parsing broke";
    return "";
}

std::string criterion_split() {
    std::mt19937_64 rng(555);
    for (int trial = 0; trial < 1000; ++trial) {
        manifest::Corpus corpus;
        const int n_patients = 2 + static_cast<int>(rng() % 10);
        int rec_seq = 0;
        for (int p = 0; p < n_patients; ++p) {
            const int n_records = 1 + static_cast<int>(rng() % 3);
            for (int r = 0; r < n_records; ++r) {
                manifest::AudioRecord rec;
                rec.record_id = "r" + std::to_string(rec_seq++);
                rec.dataset_id = "d";
                rec.patient_id = "p" + std::to_string(p);
                rec.audio_path = "x.wav";
                rec.duration_s = 1.0;
                const int n_qa = 1 + static_cast<int>(rng() % 3);
                for (int q = 0; q < n_qa; ++q) {
                    manifest::QAPair pair;
                    pair.qa_id = rec.record_id + "q" + std::to_string(q);
                    pair.record_id = rec.record_id;
                    pair.question = "q";
                    pair.answer = "a";
                    corpus.qa.push_back(pair);
                }
                corpus.records.push_back(std::move(rec));
            }
        }
        manifest::SplitSpec spec;
        spec.seed = static_cast<uint64_t>(trial);
        const auto result = manifest::patient_disjoint_split(corpus, spec);
        std::set<std::string> train_p, test_p;
        for (const auto& r : result.train.records) train_p.insert(r.patient_id);
        for (const auto& r : result.test.records) test_p.insert(r.patient_id);
        for (const auto& p : train_p)
            if (test_p.count(p)) return "patient overlap at trial " + std::to_string(trial);
        if (trial % 200 == 0) {
            const auto again = manifest::patient_disjoint_split(corpus, spec);
            if (again.train.qa.size() != result.train.qa.size())
                return "nondeterministic split at trial " + std::to_string(trial);
        }
    }

    // The published split sizes on a 12,673-pair corpus with unit granularity.
    manifest::Corpus big;
    for (int i = 0; i < 12673; ++i) {
        manifest::AudioRecord rec;
        rec.record_id = "r" + std::to_string(i);
        rec.dataset_id = "d";
        rec.patient_id = "p" + std::to_string(i);
        rec.audio_path = "x.wav";
        rec.duration_s = 1.0;
        manifest::QAPair pair;
        pair.qa_id = "q" + std::to_string(i);
        pair.record_id = rec.record_id;
        pair.question = "q";
        pair.answer = "a";
        big.records.push_back(std::move(rec));
        big.qa.push_back(std::move(pair));
    }
    manifest::SplitSpec spec;
    spec.train_fraction = 0.8;
    spec.seed = 42;
    const auto result = manifest::patient_disjoint_split(big, spec);
    if (result.train.qa.size() != 10138 || result.test.qa.size() != 2535)
        return "achieved " + std::to_string(result.train.qa.size()) + "/" +
               std::to_string(result.test.qa.size()) + ", wanted 10138/2535";
    return "";
}

std::string criterion_augmentation() {
    // +5 dB factor.
    audio::Waveform w;
    w.sample_rate_hz = 16000;
    w.samples.assign(64, 0.1);
    audio::AugmentationPolicy policy;
    policy.apply_probability = 1.0;
    bool checked_gain = false;
    for (uint64_t seed = 0; seed < 64 && !checked_gain; ++seed) {
        std::mt19937_64 rng(seed);
        auto [out, tag] = audio::apply_augmentation(w, policy, rng);
        if (tag && *tag == audio::AugmentTag::gain_5db) {
            if (std::abs(out.samples[0] / 0.1 - 1.77828) > 1e-4)
                return "gain factor " + std::to_string(out.samples[0] / 0.1);
            checked_gain = true;
        }
    }
    if (!checked_gain) return "gain_5db never drawn";

    // Stop-band attenuation >= 20 dB for both filters.
    auto tone = [](double hz) {
        audio::Waveform t;
        t.sample_rate_hz = 16000;
        t.samples.resize(16000);
        for (size_t i = 0; i < t.samples.size(); ++i)
            t.samples[i] = 0.5 * std::sin(2.0 * M_PI * hz * static_cast<double>(i) / 16000.0);
        return t;
    };
    auto rms_tail = [](const std::vector<double>& x) {
        double acc = 0.0;
        for (size_t i = 8000; i < x.size(); ++i) acc += x[i] * x[i];
        return std::sqrt(acc / (x.size() - 8000.0));
    };
    const auto lp = audio::butterworth_lowpass(tone(3000.0), 300.0);
    if (20.0 * std::log10(rms_tail(tone(3000.0).samples) / rms_tail(lp.samples)) < 20.0)
        return "lowpass stop-band attenuation < 20 dB";
    const auto hp = audio::butterworth_highpass(tone(300.0), 3000.0);
    if (20.0 * std::log10(rms_tail(tone(300.0).samples) / rms_tail(hp.samples)) < 20.0)
        return "highpass stop-band attenuation < 20 dB";

    // Empirical frequencies over 10,000 draws.
    std::mt19937_64 rng(8080);
    int counts[4] = {0, 0, 0, 0};
    audio::Waveform tiny;
    tiny.sample_rate_hz = 16000;
    tiny.samples.assign(16, 0.1);
    for (int i = 0; i < 10000; ++i) {
        auto [out, tag] = audio::apply_augmentation(tiny, policy, rng);
        if (!tag) return "apply_probability 1.0 skipped a clip";
        counts[static_cast<int>(*tag)]++;
    }
    for (int c : counts)
        if (c < 2300 || c > 2700)
            return "transform frequency " + std::to_string(c / 100.0) + "% outside 25% +/- 2%";
    return "";
}

std::string criterion_pipeline_smoke() {
    const double t0 = now_s();
    const std::string dir = scratch_dir("smoke");
    auto fail = [&](const std::string& what) {
        std::ifstream in(dir + "/cli_out.txt");
        std::stringstream ss;
        ss << in.rdbuf();
        std::string tail = ss.str();
        if (tail.size() > 200) tail = tail.substr(tail.size() - 200);
        return what + ": " + tail;
    };

    if (run_cli("toydata --dir toy --patients 10", dir) != 0) return fail("toydata failed");
    if (run_cli("stats toy/manifest.jsonl", dir) != 0) return fail("stats failed");
    if (run_cli("split toy/manifest.jsonl --fraction 0.8 --seed 3", dir) != 0)
        return fail("split failed");
    if (run_cli("train --config toy/config.json", dir) != 0) return fail("train failed");
    const std::string ckpt = find_file(dir + "/runs", "checkpoint.caqa");
    if (ckpt.empty()) return "train produced no checkpoint";
    if (run_cli("eval --config toy/config.json --paths.checkpoint " + ckpt, dir) != 0)
        return fail("eval failed");
    const std::string report_path = find_file(dir + "/runs", "report.json");
    if (report_path.empty()) return "eval produced no report";
    {
        std::ifstream in(report_path);
        nlohmann::json j;
        in >> j;
        try {
            eval::validate_metric_report(j);
        } catch (const std::exception& e) {
            return std::string("report schema invalid: ") + e.what();
        }
    }
    if (run_cli("classify --config toy/config.json --paths.checkpoint " + ckpt, dir) != 0)
        return fail("classify failed");
    if (run_cli("genqa toy/manifest.jsonl", dir) != 0) return fail("genqa failed");
    const std::string genqa_log = find_file(dir + "/runs", "genqa_log.jsonl");
    if (genqa_log.empty()) return "genqa produced no log";

    const double elapsed = now_s() - t0;
    fs::remove_all(dir);
    if (elapsed >= 600.0) return "runtime " + std::to_string(elapsed) + "s >= 600s";
    return "";
}

}  // namespace

int main() {
    std::vector<Criterion> criteria = {
        {1, "gradient suite (encoder, mappers, decoder, adapters; <= 1e-4; < 60 s)",
         criterion_gradients},
        {2, "fusion laws (length, causality, loss mask, softmax)", criterion_fusion_laws},
        {3, "PEFT laws (zero-init, merge, freeze, parameter counts)", criterion_peft_laws},
        {4, "overfit oracle (32 pairs, >= 95% exact match within 2000 steps)",
         criterion_overfit},
        {5, "lr schedule closed form at {0, 200, 400, total}", criterion_schedule},
        {6, "gradient accumulation equivalence (<= 1e-6)", criterion_accumulation},
        {7, "METEOR hand values and independent-oracle agreement", criterion_meteor},
        {8, "semantic F1 self-score and greedy-match oracle", criterion_semantic_f1},
        {9, "judge prompt bytes, verdict arithmetic, JSON variants", criterion_judge},
        {10, "patient-disjoint split properties and published counts", criterion_split},
        {11, "augmentation factor, filter stop-bands, draw frequencies",
         criterion_augmentation},
        {12, "pipeline smoke: stats, split, train, eval, classify, genqa offline",
         criterion_pipeline_smoke},
    };

    int failures = 0;
    for (const auto& criterion : criteria) {
        const double t0 = now_s();
        std::string detail;
        try {
            detail = criterion.run();
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        const double elapsed = now_s() - t0;
        if (detail.empty()) {
            std::printf("[PASS] criterion %2d: %s (%.1fs)\n", criterion.number,
                        criterion.name.c_str(), elapsed);
        } else {
            std::printf("[FAIL] criterion %2d: %s (%.1fs) -- %s\n", criterion.number,
                        criterion.name.c_str(), elapsed, detail.c_str());
            ++failures;
        }
        std::fflush(stdout);
    }
    if (failures) std::printf("%d of 12 criteria failed\n", failures);
    else std::printf("all 12 criteria passed\n");
    return failures == 0 ? 0 : 1;
}

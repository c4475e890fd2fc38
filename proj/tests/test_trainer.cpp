#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "careaqa/toy_corpus.hpp"
#include "careaqa/trainer.hpp"
#include "helpers.hpp"

using namespace careaqa;
using trainer::OptimizerConfig;
using trainer::TrainState;

namespace {

OptimizerConfig paper_schedule() {
    OptimizerConfig cfg;
    cfg.peak_lr = 2e-5;
    cfg.warmup_steps = 400;
    cfg.total_steps = 2000;
    return cfg;
}

/// Tiny in-memory pipeline + corpus for trainer tests. Waveforms are synthetic
/// and served by a closure instead of WAV files.
struct Fixture {
    model::Pipeline pipeline;
    std::vector<trainer::TrainExample> examples;
    trainer::AudioSource source;

    static Fixture make(uint64_t seed = 1, int n_examples = 6, bool deterministic_audio = true) {
        model::PipelineConfig cfg;
        cfg.frontend.sample_rate_hz = 16000;
        cfg.frontend.n_mels = 8;
        cfg.frontend.win_s = 0.025;
        cfg.frontend.hop_s = 0.01;
        cfg.frontend.crop_window_s = 0.25;
        cfg.frontend.augment_probability = deterministic_audio ? 0.0 : 0.5;
        cfg.enc.patch_time = 5;
        cfg.enc.embed_dim_A = 8;
        cfg.enc.n_layers = 1;
        cfg.enc.n_heads = 2;
        cfg.enc.ff_mult = 1.0;
        cfg.map.kind = mapper::MapperConfig::Kind::linear;
        cfg.dec.n_layers = 1;
        cfg.dec.n_heads = 2;
        cfg.dec.dim_S = 16;
        cfg.dec.ff_mult = 2.0;
        cfg.dec.max_positions = 64;
        cfg.ada.kind = fusion::AdapterConfig::Kind::none;
        cfg.decoder_base_trainable = true;
        cfg.init_seed = seed;

        std::vector<std::string> texts;
        std::vector<trainer::TrainExample> examples;
        for (int i = 0; i < n_examples; ++i) {
            trainer::TrainExample ex;
            ex.record = testutil::record("rec" + std::to_string(i), "ds",
                                         "p" + std::to_string(i), 0.25);
            ex.record.split = manifest::Split::train;
            ex.qa = testutil::qa("qa" + std::to_string(i), ex.record.record_id,
                                 "question number " + std::to_string(i),
                                 "answer word " + std::to_string(i));
            texts.push_back(ex.qa.question);
            texts.push_back(ex.qa.answer);
            examples.push_back(std::move(ex));
        }
        Fixture f{model::Pipeline::create(cfg, fusion::Vocab::build(texts)), std::move(examples),
                  nullptr};
        f.source = [](const manifest::AudioRecord& r) {
            const uint64_t tone = 200 + 100 * (r.record_id.back() - '0');
            return testutil::sine(static_cast<double>(tone), 0.25, 16000);
        };
        return f;
    }
};

}  // namespace

TEST_CASE("lr schedule hits the documented values") {
    const auto cfg = paper_schedule();
    CHECK(trainer::lr_at_step(0, cfg) == 0.0);
    CHECK(trainer::lr_at_step(200, cfg) == doctest::Approx(1e-5).epsilon(1e-12));
    CHECK(trainer::lr_at_step(400, cfg) == doctest::Approx(2e-5).epsilon(1e-12));
    CHECK(trainer::lr_at_step(2000, cfg) == 0.0);
    CHECK_THROWS_AS(trainer::lr_at_step(-1, cfg), trainer::TrainerError);
    CHECK_THROWS_AS(trainer::lr_at_step(2001, cfg), trainer::TrainerError);
}

TEST_CASE("lr schedule is piecewise linear, continuous, and peaks at warmup") {
    const auto cfg = paper_schedule();
    double prev = trainer::lr_at_step(0, cfg);
    double peak = 0.0;
    int peak_step = -1;
    for (int s = 1; s <= 2000; ++s) {
        const double lr = trainer::lr_at_step(s, cfg);
        CHECK(std::abs(lr - prev) <= cfg.peak_lr / 400.0 + 1e-18);  // no jumps
        if (lr > peak) {
            peak = lr;
            peak_step = s;
        }
        prev = lr;
    }
    CHECK(peak_step == 400);
    CHECK(peak == doctest::Approx(2e-5));
}

TEST_CASE("AdamW with apply_update=false only decays moments") {
    nn::ParamStore store;
    std::mt19937_64 rng(1);
    store.create("w", nn::Matrix::randn(2, 2, 1.0, rng));
    OptimizerConfig cfg;
    trainer::AdamW adam(cfg);
    // One real step to populate the moments.
    store.at("w").grad = nn::Matrix::filled(2, 2, 0.5);
    adam.step(store, 1e-3);
    const auto params_after_step = store.value("w").data;
    const auto m_before = adam.moments_m().at("w").data;

    store.zero_grads();
    adam.step(store, 1e-3, /*apply_update=*/false);
    CHECK(store.value("w").data == params_after_step);  // params untouched
    const auto& m_after = adam.moments_m().at("w").data;
    for (size_t i = 0; i < m_after.size(); ++i)
        CHECK(m_after[i] == doctest::Approx(cfg.beta1 * m_before[i]).epsilon(1e-15));
}

TEST_CASE("train_step refuses batches containing test-split records") {
    auto f = Fixture::make(2);
    f.examples[1].record.split = manifest::Split::test;
    OptimizerConfig cfg;
    cfg.batch_size = 2;
    cfg.total_steps = 4;
    cfg.warmup_steps = 0;
    TrainState state(cfg);
    try {
        trainer::train_step({f.examples[0], f.examples[1]}, f.pipeline, state, cfg, f.source);
        FAIL("expected leakage error");
    } catch (const trainer::TrainerError& e) {
        CHECK(e.kind() == trainer::TrainerError::Kind::leakage);
    }
}

TEST_CASE("recorded loss equals the answer loss recomputed at pre-update parameters") {
    auto f = Fixture::make(3);
    OptimizerConfig cfg;
    cfg.batch_size = 3;
    cfg.total_steps = 10;
    cfg.warmup_steps = 0;
    cfg.peak_lr = 1e-3;
    TrainState state(cfg);
    std::vector<trainer::TrainExample> batch(f.examples.begin(), f.examples.begin() + 3);

    // Recompute with the same per-step preparation before the update runs.
    double expected = 0.0;
    for (const auto& ex : batch) {
        const auto prepared = f.pipeline.prepare_from_waveform(
            f.source(ex.record), ex.record.record_id, state.step, true);
        nn::Tape tape;
        expected +=
            tape.value(f.pipeline.example_loss_on_tape(tape, ex.qa.question, ex.qa.answer, prepared).loss)
                .at(0, 0);
    }
    expected /= 3.0;
    const double recorded = trainer::train_step(batch, f.pipeline, state, cfg, f.source);
    CHECK(recorded == doctest::Approx(expected).epsilon(1e-7));
}

TEST_CASE("gradient accumulation matches the full-batch update") {
    auto a = Fixture::make(7, 8);
    auto b = Fixture::make(7, 8);
    OptimizerConfig full;
    full.batch_size = 8;
    full.accumulation_factor = 1;
    full.total_steps = 10;
    full.warmup_steps = 0;
    full.peak_lr = 1e-3;
    OptimizerConfig accumulated = full;
    accumulated.accumulation_factor = 4;

    TrainState sa(full), sb(accumulated);
    for (int step = 0; step < 3; ++step) {
        trainer::train_step(a.examples, a.pipeline, sa, full, a.source);
        trainer::train_step(b.examples, b.pipeline, sb, accumulated, b.source);
    }
    double max_diff = 0.0;
    for (const auto& name : a.pipeline.store.names()) {
        const auto& va = a.pipeline.store.value(name).data;
        const auto& vb = b.pipeline.store.value(name).data;
        for (size_t i = 0; i < va.size(); ++i)
            max_diff = std::max(max_diff, std::abs(va[i] - vb[i]));
    }
    CHECK(max_diff <= 1e-6);
}

TEST_CASE("accumulation must divide the batch") {
    auto f = Fixture::make(4);
    OptimizerConfig cfg;
    cfg.batch_size = 6;
    cfg.accumulation_factor = 4;
    cfg.total_steps = 5;
    TrainState state(cfg);
    CHECK_THROWS_AS(trainer::train_step(f.examples, f.pipeline, state, cfg, f.source),
                    trainer::TrainerError);
}

TEST_CASE("fit with zero epochs returns the initial parameters and an empty log") {
    auto f = Fixture::make(5);
    const auto before = f.pipeline.store.value("decoder.tok_embed").data;
    OptimizerConfig cfg;
    cfg.epochs = 0;
    cfg.batch_size = 4;
    cfg.total_steps = 1;  // schedule endpoint stays well-defined
    TrainState state(cfg);
    const auto result =
        trainer::fit(f.examples, {}, f.pipeline, state, cfg, f.source, trainer::FitOptions{});
    CHECK(result.log.empty());
    CHECK(f.pipeline.store.value("decoder.tok_embed").data == before);
}

TEST_CASE("training loss decreases on a tiny corpus") {
    auto f = Fixture::make(6, 8);
    OptimizerConfig cfg;
    cfg.batch_size = 8;
    cfg.epochs = 60;
    cfg.warmup_steps = 5;
    cfg.peak_lr = 3e-3;
    TrainState state(cfg);
    const auto result =
        trainer::fit(f.examples, {}, f.pipeline, state, cfg, f.source, trainer::FitOptions{});
    REQUIRE(result.log.size() >= 40);
    const double first = result.log.front().loss;
    const double last = result.log.back().loss;
    CHECK(last < 0.5 * first);
}

TEST_CASE("checkpoint round-trip: forward pass is bit-identical after save/load") {
    const std::string dir = testutil::scratch_dir("ckpt");
    auto f = Fixture::make(8);
    OptimizerConfig cfg;
    cfg.batch_size = 4;
    cfg.total_steps = 10;
    cfg.warmup_steps = 0;
    cfg.peak_lr = 1e-3;
    TrainState state(cfg);
    std::vector<trainer::TrainExample> batch(f.examples.begin(), f.examples.begin() + 4);
    trainer::train_step(batch, f.pipeline, state, cfg, f.source);
    trainer::save_checkpoint(dir + "/model.caqa", f.pipeline, state, 0.5);

    const auto prepared = f.pipeline.prepare_from_waveform(f.source(f.examples[0].record),
                                                           "rec0", 0, false);
    nn::Tape t1;
    const auto before =
        t1.value(f.pipeline.example_loss_on_tape(t1, "question number 0", "answer word 0", prepared).loss)
            .at(0, 0);

    auto loaded = trainer::load_checkpoint(dir + "/model.caqa", cfg);
    CHECK(loaded.state.step == state.step);
    CHECK(loaded.meta.val_loss == 0.5);
    nn::Tape t2;
    const auto after =
        t2.value(loaded.pipeline
                     .example_loss_on_tape(t2, "question number 0", "answer word 0", prepared)
                     .loss)
            .at(0, 0);
    CHECK(before == after);  // bit-identical

    SUBCASE("truncated checkpoints are corrupt") {
        std::ifstream in(dir + "/model.caqa", std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        std::ofstream(dir + "/short.caqa", std::ios::binary)
            << bytes.substr(0, bytes.size() - 64);
        try {
            trainer::load_checkpoint(dir + "/short.caqa", cfg);
            FAIL("expected corrupt checkpoint");
        } catch (const trainer::TrainerError& e) {
            CHECK(e.kind() == trainer::TrainerError::Kind::corrupt_checkpoint);
        }
    }
    SUBCASE("config hash mismatch refuses unless forced") {
        try {
            trainer::load_checkpoint(dir + "/model.caqa", cfg, "deadbeefdeadbeef");
            FAIL("expected schema mismatch");
        } catch (const trainer::TrainerError& e) {
            CHECK(e.kind() == trainer::TrainerError::Kind::schema_mismatch);
        }
        CHECK_NOTHROW(
            trainer::load_checkpoint(dir + "/model.caqa", cfg, "deadbeefdeadbeef", true));
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("resumed training reproduces the uninterrupted loss curve") {
    const std::string dir = testutil::scratch_dir("resume");
    OptimizerConfig cfg;
    cfg.batch_size = 4;
    cfg.total_steps = 8;
    cfg.warmup_steps = 0;
    cfg.peak_lr = 1e-3;

    auto run_a = Fixture::make(9, 4);
    TrainState state_a(cfg);
    std::vector<double> losses_a;
    for (int step = 0; step < 8; ++step) {
        losses_a.push_back(
            trainer::train_step(run_a.examples, run_a.pipeline, state_a, cfg, run_a.source));
        if (step == 3) trainer::save_checkpoint(dir + "/mid.caqa", run_a.pipeline, state_a, 0.0);
    }

    auto loaded = trainer::load_checkpoint(dir + "/mid.caqa", cfg);
    auto run_b = Fixture::make(9, 4);  // same data derivation
    std::vector<double> losses_b;
    for (int step = 4; step < 8; ++step) {
        losses_b.push_back(trainer::train_step(run_b.examples, loaded.pipeline, loaded.state, cfg,
                                               run_b.source));
    }
    for (size_t i = 0; i < losses_b.size(); ++i)
        CHECK(losses_b[i] == doctest::Approx(losses_a[4 + i]).epsilon(1e-5));
    std::filesystem::remove_all(dir);
}

TEST_CASE("grad_check on a linear map is exact to 1e-6") {
    nn::ParamStore store;
    std::mt19937_64 rng(4);
    store.create("w", nn::Matrix::randn(6, 6, 1.0, rng));
    const nn::Matrix x = nn::Matrix::randn(3, 6, 1.0, rng);
    auto builder = [&](nn::Tape& tape, const nn::ParamStore& s) {
        return tape.sum_all(tape.matmul_nt(tape.constant(x), tape.param(s, "w")));
    };
    CHECK(trainer::grad_check(builder, store, 30, 5).max_rel_err <= 1e-6);
}

TEST_CASE("training with an external embedding provider bypasses the audio frontend") {
    const std::string dir = testutil::scratch_dir("extfit");
    auto f = Fixture::make(12, 4);
    f.pipeline.cfg.enc.kind = encoder::EncoderConfig::Kind::external;
    std::mt19937_64 rng(13);
    for (const auto& ex : f.examples)
        encoder::FileEmbeddingProvider::write_embedding_file(
            dir, ex.record.record_id, nn::Matrix::randn(4, f.pipeline.cfg.enc.embed_dim_A, 1.0, rng));
    encoder::FileEmbeddingProvider provider(dir);

    OptimizerConfig cfg;
    cfg.batch_size = 4;
    cfg.total_steps = 4;
    cfg.warmup_steps = 0;
    cfg.peak_lr = 1e-3;
    TrainState state(cfg);
    trainer::AudioSource no_audio = [](const manifest::AudioRecord&) -> audio::Waveform {
        throw audio::AudioError(audio::AudioError::Kind::missing_file,
                                "audio must not be touched on the external path");
    };
    const double loss =
        trainer::train_step(f.examples, f.pipeline, state, cfg, no_audio, &provider);
    CHECK(std::isfinite(loss));
    CHECK(state.step == 1);
    std::filesystem::remove_all(dir);
}

TEST_CASE("non-finite losses abort with a diagnostic") {
    auto f = Fixture::make(10, 2);
    // Poison the output projection so every forward pass blows up.
    f.pipeline.store.value("decoder.w_out").at(0, 0) =
        std::numeric_limits<double>::infinity();
    OptimizerConfig cfg;
    cfg.batch_size = 2;
    cfg.total_steps = 2;
    cfg.warmup_steps = 0;
    TrainState state(cfg);
    CHECK_THROWS_AS(
        trainer::train_step({f.examples[0], f.examples[1]}, f.pipeline, state, cfg, f.source),
        trainer::TrainerError);
}

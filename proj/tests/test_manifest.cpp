#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <set>

#include "careaqa/manifest.hpp"
#include "helpers.hpp"

using namespace careaqa::manifest;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

Corpus synthetic_corpus(int n_patients, int records_per_patient, int qa_per_record,
                        uint64_t seed) {
    Corpus c;
    std::mt19937_64 rng(seed);
    int rec_seq = 0, qa_seq = 0;
    for (int p = 0; p < n_patients; ++p) {
        for (int r = 0; r < records_per_patient; ++r) {
            auto rec = testutil::record("r" + std::to_string(rec_seq++), "ds0",
                                        "p" + std::to_string(p), 1.0 + (rng() % 30));
            for (int q = 0; q < qa_per_record; ++q) {
                const std::string tag = std::to_string(qa_seq++);
                c.qa.push_back(testutil::qa("qa" + tag, rec.record_id, "question " + tag,
                                            "answer " + std::to_string(rng() % 5)));
            }
            c.records.push_back(std::move(rec));
        }
    }
    return c;
}

}  // namespace

TEST_CASE("minimal two-line manifest loads one record and one pair") {
    const std::string dir = testutil::scratch_dir("manifest");
    {
        std::ofstream f(dir + "/m.jsonl");
        f << R"({"kind":"record","record_id":"r0","dataset_id":"d","patient_id":"p0","audio_path":"a.wav","duration_s":2.5,"sound_type":"lung","labels":[]})"
          << "\n";
        f << R"({"kind":"qa","qa_id":"q0","record_id":"r0","question":"any crackles","answer":"none heard"})"
          << "\n";
    }
    const auto corpus = load_manifest(dir + "/m.jsonl");
    CHECK(corpus.records.size() == 1);
    CHECK(corpus.qa.size() == 1);
    CHECK(corpus.records[0].duration_s == 2.5);
    std::filesystem::remove_all(dir);
}

TEST_CASE("manifest loader reports typed errors") {
    const std::string dir = testutil::scratch_dir("manifest-err");

    SUBCASE("missing file") {
        try {
            load_manifest(dir + "/nope.jsonl");
            FAIL("expected error");
        } catch (const ManifestError& e) {
            CHECK(e.kind() == ManifestError::Kind::missing_file);
        }
    }
    SUBCASE("dangling qa reference") {
        std::ofstream(dir + "/d.jsonl")
            << R"({"kind":"qa","qa_id":"q0","record_id":"ghost","question":"x","answer":"y"})"
            << "\n";
        try {
            load_manifest(dir + "/d.jsonl");
            FAIL("expected error");
        } catch (const ManifestError& e) {
            CHECK(e.kind() == ManifestError::Kind::dangling_reference);
        }
    }
    SUBCASE("malformed line carries its line number") {
        std::ofstream(dir + "/m.jsonl") << "{not json}\n";
        try {
            load_manifest(dir + "/m.jsonl");
            FAIL("expected error");
        } catch (const ManifestError& e) {
            CHECK(e.kind() == ManifestError::Kind::malformed_line);
            CHECK(e.line_no() == 1);
        }
    }
    SUBCASE("duplicate record id") {
        std::ofstream f(dir + "/dup.jsonl");
        for (int i = 0; i < 2; ++i)
            f << R"({"kind":"record","record_id":"r0","dataset_id":"d","patient_id":"p","audio_path":"a.wav","duration_s":1.0,"sound_type":"lung","labels":[]})"
              << "\n";
        f.close();
        try {
            load_manifest(dir + "/dup.jsonl");
            FAIL("expected error");
        } catch (const ManifestError& e) {
            CHECK(e.kind() == ManifestError::Kind::duplicate_id);
        }
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("manifest save/load round-trips byte-identically") {
    const std::string dir = testutil::scratch_dir("roundtrip");
    Corpus corpus = synthetic_corpus(10, 5, 1, 11);  // 100 lines
    save_manifest(dir + "/a.jsonl", corpus);
    const auto loaded = load_manifest(dir + "/a.jsonl");
    save_manifest(dir + "/b.jsonl", loaded);
    CHECK(slurp(dir + "/a.jsonl") == slurp(dir + "/b.jsonl"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("patient-disjoint split: disjointness, determinism, fraction optimality") {
    SUBCASE("no patient appears on both sides") {
        const auto corpus = synthetic_corpus(20, 3, 2, 5);
        SplitSpec spec;
        spec.seed = 3;
        const auto result = patient_disjoint_split(corpus, spec);
        std::set<std::string> train_p, test_p;
        for (const auto& r : result.train.records) train_p.insert(r.patient_id);
        for (const auto& r : result.test.records) test_p.insert(r.patient_id);
        for (const auto& p : train_p) CHECK(test_p.count(p) == 0);
        CHECK(result.train.records.size() + result.test.records.size() ==
              corpus.records.size());
        for (const auto& r : result.train.records) CHECK(r.split == Split::train);
        for (const auto& r : result.test.records) CHECK(r.split == Split::test);
    }
    SUBCASE("identical corpus and seed give identical splits") {
        const auto corpus = synthetic_corpus(15, 2, 2, 6);
        SplitSpec spec;
        spec.seed = 17;
        const auto a = patient_disjoint_split(corpus, spec);
        const auto b = patient_disjoint_split(corpus, spec);
        REQUIRE(a.train.records.size() == b.train.records.size());
        for (size_t i = 0; i < a.train.records.size(); ++i)
            CHECK(a.train.records[i].record_id == b.train.records[i].record_id);
        for (size_t i = 0; i < a.train.qa.size(); ++i)
            CHECK(a.train.qa[i].qa_id == b.train.qa[i].qa_id);
    }
    SUBCASE("single patient corpus is unsatisfiable") {
        Corpus corpus;
        corpus.records.push_back(testutil::record("r0", "d", "p0"));
        corpus.records.push_back(testutil::record("r1", "d", "p0"));
        corpus.qa.push_back(testutil::qa("q0", "r0", "q", "a"));
        SplitSpec spec;
        try {
            patient_disjoint_split(corpus, spec);
            FAIL("expected error");
        } catch (const ManifestError& e) {
            CHECK(e.kind() == ManifestError::Kind::unsatisfiable_split);
        }
    }
    SUBCASE("empty corpus rejected") {
        CHECK_THROWS_AS(patient_disjoint_split(Corpus{}, SplitSpec{}), ManifestError);
    }
    SUBCASE("missing patient_id rejected under patient disjointness") {
        Corpus corpus;
        corpus.records.push_back(testutil::record("r0", "d", ""));
        corpus.records.push_back(testutil::record("r1", "d", "p1"));
        corpus.qa.push_back(testutil::qa("q0", "r0", "q", "a"));
        CHECK_THROWS_AS(patient_disjoint_split(corpus, SplitSpec{}), ManifestError);
    }
    SUBCASE("10 patients: achieved fraction matches the exhaustive subset optimum") {
        std::mt19937_64 rng(99);
        Corpus corpus;
        std::vector<size_t> counts(10);
        size_t total = 0;
        for (int p = 0; p < 10; ++p) {
            counts[p] = 1 + rng() % 7;
            auto rec = testutil::record("r" + std::to_string(p), "d", "p" + std::to_string(p));
            for (size_t q = 0; q < counts[p]; ++q)
                corpus.qa.push_back(testutil::qa("q" + std::to_string(p) + "-" + std::to_string(q),
                                                 rec.record_id, "q", "a"));
            corpus.records.push_back(std::move(rec));
            total += counts[p];
        }
        double best = 1e9;
        for (unsigned mask = 1; mask + 1 < (1u << 10); ++mask) {
            size_t sum = 0;
            for (int p = 0; p < 10; ++p)
                if (mask & (1u << p)) sum += counts[p];
            if (sum == 0 || sum == total) continue;
            best = std::min(best, std::abs(static_cast<double>(sum) / total - 0.8));
        }
        SplitSpec spec;
        spec.train_fraction = 0.8;
        spec.seed = 1;
        const auto result = patient_disjoint_split(corpus, spec);
        CHECK(std::abs(result.achieved_fraction - 0.8) == doctest::Approx(best).epsilon(1e-12));
    }
}

TEST_CASE("record-level disjointness splits individual recordings") {
    const auto corpus = synthetic_corpus(3, 6, 1, 8);
    SplitSpec spec;
    spec.disjointness = SplitSpec::Disjointness::record;
    spec.seed = 4;
    const auto result = patient_disjoint_split(corpus, spec);
    std::set<std::string> train_r;
    for (const auto& r : result.train.records) train_r.insert(r.record_id);
    for (const auto& r : result.test.records) CHECK(train_r.count(r.record_id) == 0);
}

TEST_CASE("compute_stats on a corpus with the published ICBHI shape") {
    Corpus corpus;
    const size_t n_records = 6899;
    const size_t n_qa = 20729;
    for (size_t i = 0; i < n_records; ++i)
        corpus.records.push_back(
            testutil::record("r" + std::to_string(i), "ICBHI", "p" + std::to_string(i % 126), 22.2));
    // 20108 questions of 10 tokens + 621 of 11 tokens: mean 10.0300 (2 dp).
    const size_t answer_cycle = 5614;
    for (size_t i = 0; i < n_qa; ++i) {
        const size_t tokens = i < 20108 ? 10 : 11;
        std::string question = "q" + std::to_string(i);
        for (size_t t = 1; t < tokens; ++t) question += " w" + std::to_string(t);
        corpus.qa.push_back(testutil::qa("qa" + std::to_string(i),
                                         "r" + std::to_string(i % n_records), question,
                                         "answer " + std::to_string(i % answer_cycle)));
    }
    // Exactly one duplicate question: distinct count 20728.
    corpus.qa[1].question = corpus.qa[0].question;

    const auto stats = compute_stats(corpus);
    const auto& icbhi = stats.at("ICBHI");
    CHECK(icbhi.n_samples == 6899);
    CHECK(icbhi.n_qa_pairs == 20729);
    CHECK(icbhi.n_questions == 20728);
    CHECK(icbhi.mean_duration_s == doctest::Approx(22.2).epsilon(1e-9));
    CHECK(icbhi.mean_q_len == doctest::Approx(10.03).epsilon(5e-4));
    CHECK(icbhi.n_unique_answers <= icbhi.n_qa_pairs);
    CHECK(stats.at("All").n_samples == icbhi.n_samples);
}

TEST_CASE("compute_stats edge cases and hand-computed means") {
    SUBCASE("empty corpus gives zeroed All row") {
        const auto stats = compute_stats(Corpus{});
        CHECK(stats.at("All").n_samples == 0);
        CHECK(stats.at("All").mean_q_len == 0.0);
    }
    SUBCASE("five pairs with known token counts") {
        Corpus c;
        c.records.push_back(testutil::record("r0", "d", "p0", 2.0));
        const char* questions[5] = {"one", "one two", "one two three", "one two three four",
                                    "one two three four five"};
        for (int i = 0; i < 5; ++i)
            c.qa.push_back(testutil::qa("q" + std::to_string(i), "r0", questions[i], "a b"));
        const auto stats = compute_stats(c);
        CHECK(stats.at("d").mean_q_len == doctest::Approx(3.0).epsilon(1e-12));
        CHECK(stats.at("d").mean_a_len == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(stats.at("d").n_questions == 5);
        CHECK(stats.at("d").n_unique_answers == 1);
    }
    SUBCASE("stats additivity across datasets") {
        Corpus a = synthetic_corpus(4, 2, 3, 1);
        Corpus b = synthetic_corpus(3, 2, 2, 2);
        for (auto& r : b.records) {
            r.dataset_id = "ds1";
            r.record_id = "b-" + r.record_id;
            r.patient_id = "b-" + r.patient_id;
        }
        for (auto& q : b.qa) {
            q.record_id = "b-" + q.record_id;
            q.qa_id = "b-" + q.qa_id;
        }
        const auto pooled = pool_corpora({a, b});
        const auto stats = compute_stats(pooled);
        CHECK(stats.at("All").n_samples ==
              stats.at("ds0").n_samples + stats.at("ds1").n_samples);
        const double weighted =
            (stats.at("ds0").mean_q_len * stats.at("ds0").n_qa_pairs +
             stats.at("ds1").mean_q_len * stats.at("ds1").n_qa_pairs) /
            static_cast<double>(stats.at("ds0").n_qa_pairs + stats.at("ds1").n_qa_pairs);
        CHECK(stats.at("All").mean_q_len == doctest::Approx(weighted).epsilon(1e-9));
    }
}

TEST_CASE("pooling corpora and micro averaging") {
    SUBCASE("sizes add up") {
        Corpus a = synthetic_corpus(1, 3, 1, 3);
        Corpus b = synthetic_corpus(1, 7, 1, 4);
        for (auto& r : b.records) {
            r.dataset_id = "ds1";
            r.record_id = "b-" + r.record_id;
        }
        for (auto& q : b.qa) {
            q.record_id = "b-" + q.record_id;
            q.qa_id = "b-" + q.qa_id;
        }
        const auto pooled = pool_corpora({a, b});
        CHECK(pooled.records.size() == 10);
    }
    SUBCASE("duplicate dataset_id collides") {
        Corpus a = synthetic_corpus(1, 2, 1, 5);
        Corpus b = synthetic_corpus(1, 2, 1, 6);
        for (auto& r : b.records) r.record_id = "b-" + r.record_id;
        for (auto& q : b.qa) {
            q.record_id = "b-" + q.record_id;
            q.qa_id = "b-" + q.qa_id;
        }
        try {
            pool_corpora({a, b});
            FAIL("expected collision");
        } catch (const ManifestError& e) {
            CHECK(e.kind() == ManifestError::Kind::id_collision);
        }
    }
    SUBCASE("pooled accuracy is micro, never macro") {
        const double pooled = micro_average({{3, 1.0}, {7, 0.0}});
        CHECK(pooled == doctest::Approx(0.30).epsilon(1e-12));
    }
}

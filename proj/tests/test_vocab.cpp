#include "doctest.h"

#include <filesystem>

#include "careaqa/fusion/vocab.hpp"
#include "helpers.hpp"

using careaqa::fusion::Vocab;

TEST_CASE("vocab build keeps the special tokens at stable ids") {
    const auto v = Vocab::build({"crackles heard", "no wheezes"});
    CHECK(v.token(Vocab::kPad) == "<pad>");
    CHECK(v.token(Vocab::kBos) == "<bos>");
    CHECK(v.token(Vocab::kEos) == "<eos>");
    CHECK(v.token(Vocab::kUnk) == "<unk>");
    CHECK(v.token(Vocab::kAudioSlot) == "<audio>");
}

TEST_CASE("tokenize of empty text is the empty sequence") {
    const auto v = Vocab::build({"hello"});
    CHECK(v.tokenize("").empty());
}

TEST_CASE("tokenize/detokenize round-trips normalized corpus sentences") {
    std::vector<std::string> corpus = {
        "What sounds were identified during auscultation?",
        "Inspiratory crackles and expiratory wheezes.",
        "Is the murmur localized to one valve area?",
        "No, the murmur is heard at several locations.",
        "The recording is consistent with normal findings",
    };
    // Pad the corpus to 100 sentences with generated variants.
    for (int i = 0; i < 95; ++i)
        corpus.push_back("sample sentence number " + std::to_string(i) + " with crackles");
    const auto v = Vocab::build(corpus);
    for (const auto& s : corpus) {
        const auto ids = v.tokenize(s);
        for (int id : ids) CHECK(id != Vocab::kUnk);
        CHECK(v.detokenize(ids) == Vocab::normalize_text(s));
    }
}

TEST_CASE("unseen words decompose via subword continuation pieces") {
    const auto v = Vocab::build({"normal crackles found"});
    // Every character of "normals" occurs in the corpus, so the greedy match
    // yields "normal" plus a continuation piece instead of UNK.
    const auto ids = v.tokenize("normals");
    CHECK(ids.size() >= 2);
    for (int id : ids) CHECK(id != Vocab::kUnk);
    CHECK(v.detokenize(ids) == "normals");

    // A character never seen in the corpus forces UNK for the whole piece.
    const auto unk = v.tokenize("zebra");
    REQUIRE(unk.size() == 1);
    CHECK(unk[0] == Vocab::kUnk);
}

TEST_CASE("strings of unknown glyphs map to UNK per piece") {
    const auto v = Vocab::build({"plain ascii words"});
    const auto ids = v.tokenize("\xCE\xB1\xCE\xB2 \xCE\xB3");
    REQUIRE(ids.size() == 2);
    CHECK(ids[0] == Vocab::kUnk);
    CHECK(ids[1] == Vocab::kUnk);
}

TEST_CASE("size cap never evicts the character fallback") {
    std::vector<std::string> texts;
    for (int i = 0; i < 500; ++i) texts.push_back("word" + std::to_string(i));
    const auto v = Vocab::build(texts, 64);
    CHECK(v.size() <= 64 + 0);
    const auto ids = v.tokenize("word499");
    for (int id : ids) CHECK(id != Vocab::kUnk);
    CHECK(v.detokenize(ids) == "word499");
}

TEST_CASE("vocab file save/load preserves ids") {
    const std::string dir = testutil::scratch_dir("vocab");
    const auto v = Vocab::build({"wheezes detected over trachea"});
    v.save(dir + "/vocab.txt");
    const auto loaded = Vocab::load(dir + "/vocab.txt");
    REQUIRE(loaded.size() == v.size());
    for (int i = 0; i < v.size(); ++i) CHECK(loaded.token(i) == v.token(i));
    std::filesystem::remove_all(dir);
}

TEST_CASE("punctuation splits into standalone pieces") {
    const auto pieces = Vocab::pre_split("No, crackles!");
    REQUIRE(pieces.size() == 4);
    CHECK(pieces[0] == "No");
    CHECK(pieces[1] == ",");
    CHECK(pieces[2] == "crackles");
    CHECK(pieces[3] == "!");
}

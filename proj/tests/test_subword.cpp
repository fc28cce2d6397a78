#include <gtest/gtest.h>

#include "catds/subword.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace catds;
using V = std::vector<std::uint32_t>;

// a=0, b=1, c=2
TEST(Bpe, MostFrequentPairMergesFirst) {
    const auto m = train_tokenizer({{0, 1, 0, 1, 0, 1}}, 2, 3);
    ASSERT_EQ(m.merges().size(), 1u);
    EXPECT_EQ(m.merges()[0], (BpeModel::Pair{0, 1}));
    EXPECT_EQ(m.encode(V{0, 1, 0, 1, 0, 1}), (V{2, 2, 2}));
    EXPECT_FALSE(m.underfilled());
}

TEST(Bpe, VocabEqualToAlphabetIsIdentity) {
    const auto m = train_tokenizer({{0, 1, 0, 1, 2}}, 3, 3);
    EXPECT_TRUE(m.merges().empty());
    EXPECT_EQ(m.encode(V{2, 1, 0}), (V{2, 1, 0}));
    EXPECT_THROW(train_tokenizer({{0}}, 3, 2), ValidationError);
}

TEST(Bpe, TieBreaksOnSmallerPieces) {
    // (a,b) and (c,a) both occur twice; (a,b) wins lexicographically
    const auto m = train_tokenizer({{0, 1}, {0, 1}, {2, 0}, {2, 0}}, 3, 4);
    ASSERT_EQ(m.merges().size(), 1u);
    EXPECT_EQ(m.merges()[0], (BpeModel::Pair{0, 1}));
}

TEST(Bpe, StopsWhenNoPairRepeats) {
    const auto m = train_tokenizer({{0, 1, 2}}, 3, 100);
    EXPECT_TRUE(m.merges().empty());
    EXPECT_TRUE(m.underfilled());
    EXPECT_EQ(m.requested_vocab(), 100u);
}

TEST(Bpe, EncodeAppliesLearnedMergesOnly) {
    const BpeModel m(2, 3, {{0, 1}});
    EXPECT_EQ(m.encode(V{0, 1, 0}), (V{2, 0}));
    EXPECT_EQ(m.decode(V{2, 0}), (V{0, 1, 0}));
    EXPECT_EQ(m.encode(V{}), V{});
    EXPECT_THROW(m.encode(V{2}), ValidationError);
    EXPECT_THROW(m.decode(V{3}), ValidationError);
}

TEST(Bpe, OverlappingRunsMergeLeftToRight) {
    const auto m = train_tokenizer({{0, 0, 0}}, 1, 2);
    ASSERT_EQ(m.merges().size(), 1u);
    EXPECT_EQ(m.encode(V{0, 0, 0}), (V{1, 0}));
    EXPECT_EQ(m.encode(V{0, 0, 0, 0}), (V{1, 1}));
}

TEST(Bpe, ModelRejectsForwardReferences) {
    EXPECT_THROW(BpeModel(2, 4, {{0, 3}}), ValidationError);
    EXPECT_THROW(BpeModel(2, 4, {{0, 1}, {0, 1}}), ValidationError);
}

TEST(Bpe, IncrementalTrainerMatchesNaiveOracle) {
    Rng rng(2024);
    for (int trial = 0; trial < 60; ++trial) {
        const auto alphabet = static_cast<std::uint32_t>(1 + rng.uniform_below(5));
        std::vector<SymbolSeq> corpus(1 + rng.uniform_below(8));
        for (auto& s : corpus) {
            s.resize(rng.uniform_below(40));
            for (auto& x : s) x = static_cast<std::uint32_t>(rng.uniform_below(alphabet));
        }
        const auto vocab = alphabet + static_cast<std::uint32_t>(rng.uniform_below(40));
        const auto got = train_tokenizer(corpus, alphabet, vocab);
        const auto want = oracle::naive_train(corpus, alphabet, vocab);
        ASSERT_EQ(got.merges(), want.merges) << "trial " << trial;
    }
}

TEST(Bpe, PropertyDecodeInvertsEncode) {
    Rng rng(5);
    std::vector<SymbolSeq> corpus(50);
    for (auto& s : corpus) {
        s.resize(1 + rng.uniform_below(60));
        for (auto& x : s) x = static_cast<std::uint32_t>(rng.uniform_below(8));
    }
    const auto m = train_tokenizer(corpus, 8, 80);
    for (int trial = 0; trial < 500; ++trial) {
        SymbolSeq s(rng.uniform_below(80));
        for (auto& x : s) x = static_cast<std::uint32_t>(rng.uniform_below(8));
        const auto t = m.encode(s);
        EXPECT_EQ(m.decode(t), s);
        for (auto id : t) EXPECT_LT(id, m.vocab_size());
    }
}

TEST(Bpe, JsonRoundTrip) {
    const auto m = train_tokenizer({{0, 1, 2, 0, 1, 2, 0, 1, 2, 1, 1}}, 3, 8);
    test::TempDir dir;
    write_tokenizer(dir.path / "tok.json", m);
    const auto back = read_tokenizer(dir.path / "tok.json");
    EXPECT_EQ(back.merges(), m.merges());
    EXPECT_EQ(back.vocab_size(), m.vocab_size());
    EXPECT_EQ(back.requested_vocab(), m.requested_vocab());
    EXPECT_THROW(tokenizer_from_json(nlohmann::json::parse(R"({"type":"unigram","alphabet_size":2,"vocab_size":2,"merges":[]})")),
                 FormatError);
    EXPECT_THROW(tokenizer_from_json(nlohmann::json::parse(R"({"alphabet_size":2,"vocab_size":3,"merges":[[[0],[7]]]})")),
                 FormatError);
}

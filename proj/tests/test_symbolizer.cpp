#include <gtest/gtest.h>

#include "catds/common.hpp"
#include "catds/symbolizer.hpp"

using namespace catds;
using V = std::vector<std::uint32_t>;

TEST(CollapseRuns, Examples) {
    EXPECT_EQ(collapse_runs(V{5, 5, 5, 2, 2, 5}), (V{5, 2, 5}));
    EXPECT_EQ(collapse_runs(V{}), V{});
    EXPECT_EQ(collapse_runs(V{7}), V{7});
    EXPECT_EQ(collapse_runs(V{1, 2, 3}), (V{1, 2, 3}));
    EXPECT_EQ(collapse_runs(V{4, 4, 4, 4}), V{4});
}

TEST(CollapseRuns, PropertyIdempotentAndRunFree) {
    Rng rng(1);
    for (int trial = 0; trial < 1000; ++trial) {
        V v(rng.uniform_below(50));
        for (auto& x : v) x = static_cast<std::uint32_t>(rng.uniform_below(4));
        const auto c = collapse_runs(v);
        EXPECT_EQ(collapse_runs(c), c);
        for (std::size_t i = 1; i < c.size(); ++i) EXPECT_NE(c[i], c[i - 1]);
        EXPECT_LE(c.size(), v.size());
        EXPECT_EQ(c.empty(), v.empty());
    }
}

TEST(TextExport, UsesCjkBlock) {
    EXPECT_EQ(dump_text(V{0, 1}, 500), "\xE4\xB8\x80\xE4\xB8\x81");  // U+4E00 U+4E01
    EXPECT_EQ(parse_text("\xE4\xB8\x80\xE4\xB8\x81", 500), (V{0, 1}));
    EXPECT_EQ(dump_text(V{}, 3), "");
}

TEST(TextExport, RoundTripWholeAlphabet) {
    V all(500);
    for (std::uint32_t i = 0; i < 500; ++i) all[i] = i;
    EXPECT_EQ(parse_text(dump_text(all, 500), 500), all);
}

TEST(TextExport, Errors) {
    EXPECT_THROW(dump_text(V{3}, 3), ValidationError);
    EXPECT_THROW(parse_text("a", 3), ValidationError);
    EXPECT_THROW(parse_text(dump_text(V{2}, 3), 2), ValidationError);
    EXPECT_THROW(parse_text("\xE4\xB8", 3), FormatError);
}

#include <gtest/gtest.h>

#include "catds/scorer.hpp"
#include "catds/statsreport.hpp"
#include "oracles.hpp"

using namespace catds;
using V = std::vector<std::uint32_t>;

namespace {

QuadModel fit(const std::vector<LengthPoint>& pts) { return fit_length_scaler(pts); }

std::vector<double> to_double(const std::vector<std::uint64_t>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST(FrequencyVector, Examples) {
    const auto v = build_frequency_vector(V{3, 3, 7}, 10);
    EXPECT_EQ(v.counts, (std::vector<std::uint64_t>{0, 0, 0, 2, 0, 0, 0, 1, 0, 0}));
    EXPECT_TRUE(build_frequency_vector(V{}, 10).is_zero());
    const std::vector<V> two{{1}, {1, 2}};
    const auto w = build_frequency_vector(std::span<const V>(two), 4);
    EXPECT_EQ(w.counts, (std::vector<std::uint64_t>{0, 2, 1, 0}));
    EXPECT_THROW(build_frequency_vector(V{10}, 10), ValidationError);
}

TEST(Cosine, Examples) {
    const std::vector<double> x{1, 0, 1}, y{1, 1, 0};
    EXPECT_DOUBLE_EQ(cosine_similarity(std::span<const double>(x), std::span<const double>(y)), 0.5);
    EXPECT_NEAR(cosine_similarity(std::span<const double>(x), std::span<const double>(y)), oracle::cosine(x, y), 1e-15);
    FreqVector a, b;
    a.counts = {3, 1, 4};
    b.counts = {0, 0, 0};
    EXPECT_NEAR(cosine_similarity(a, a), 1.0, 1e-15);
    b.counts = {0, 0, 0, 1};
    EXPECT_THROW(cosine_similarity(a, b), ValidationError);
    b.counts = {0, 0, 0};
    EXPECT_THROW(cosine_similarity(a, b), ValidationError);
    FreqVector c, d;
    c.counts = {1, 0};
    d.counts = {0, 5};
    EXPECT_EQ(cosine_similarity(c, d), 0.0);
}

TEST(Cosine, PropertyScaleInvariantAndBounded) {
    Rng rng(8);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 1 + rng.uniform_below(30);
        std::vector<std::uint64_t> x(n), y(n);
        for (auto& v : x) v = rng.uniform_below(6);
        for (auto& v : y) v = rng.uniform_below(6);
        x[0] += 1;
        y[n - 1] += 1;
        FreqVector fx{x}, fy{y};
        const double s = cosine_similarity(fx, fy);
        EXPECT_GE(s, 0.0);
        EXPECT_LE(s, 1.0 + 1e-15);
        EXPECT_NEAR(s, oracle::cosine(to_double(x), to_double(y)), 1e-12);
        const auto alpha = 1 + rng.uniform_below(50);
        FreqVector sx;
        for (auto v : x) sx.counts.push_back(v * alpha);
        EXPECT_NEAR(cosine_similarity(sx, fy), s, 1e-12);
    }
}

TEST(LengthScaler, ThreePointsInterpolate) {
    const auto m = fit({{0, 1}, {1, 2}, {2, 5}});
    EXPECT_FALSE(m.fallback);
    EXPECT_NEAR(m.a, 1.0, 1e-9);
    EXPECT_NEAR(m.b, 0.0, 1e-9);
    EXPECT_NEAR(m.c, 1.0, 1e-9);
    EXPECT_NEAR(m.predict(3), 10.0, 1e-9);
}

TEST(LengthScaler, LinearDataGivesZeroCurvature) {
    std::vector<LengthPoint> pts;
    for (double p : {1.0, 2.0, 3.0, 4.0}) pts.push_back({p, 2 * p + 3});
    const auto m = fit(pts);
    EXPECT_NEAR(m.a, 0.0, 1e-9);
    EXPECT_NEAR(m.b, 2.0, 1e-9);
    EXPECT_NEAR(m.c, 3.0, 1e-9);
}

TEST(LengthScaler, FallbackBelowThreeDistinctLengths) {
    const auto m = fit({{100, 0.2}, {100, 0.4}, {100, 0.9}});
    EXPECT_TRUE(m.fallback);
    EXPECT_NEAR(m.predict(100), 0.5, 1e-15);
    EXPECT_NEAR(m.predict(7), 0.5, 1e-15);
    EXPECT_TRUE(fit({{1, 0.2}, {2, 0.4}, {1, 0.3}}).fallback);
    EXPECT_THROW(fit({}), ValidationError);
}

TEST(LengthScaler, PropertyResidualsOrthogonalToBasis) {
    Rng rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<LengthPoint> pts(5 + rng.uniform_below(200));
        for (auto& pt : pts) {
            pt.p = static_cast<double>(1 + rng.uniform_below(2000));
            pt.s = rng.uniform01();
        }
        const auto m = fit(pts);
        if (m.fallback) continue;
        double r0 = 0, r1 = 0, r2 = 0;
        for (const auto& pt : pts) {
            const double z = (pt.p - m.p_mean) / m.p_std;
            const double r = pt.s - m.predict(pt.p);
            r0 += r;
            r1 += r * z;
            r2 += r * z * z;
        }
        EXPECT_LT(std::abs(r0), 1e-8);
        EXPECT_LT(std::abs(r1), 1e-8);
        EXPECT_LT(std::abs(r2), 1e-8);
    }
}

TEST(LengthScaler, RawCoefficientsAgreeWithStandardizedBasis) {
    const auto m = fit({{10, 0.1}, {40, 0.3}, {90, 0.35}, {400, 0.5}, {800, 0.52}});
    for (double p : {10.0, 55.0, 800.0}) {
        EXPECT_NEAR(m.a * p * p + m.b * p + m.c, m.predict(p), 1e-9);
    }
}

TEST(CatdsScore, Examples) {
    QuadModel constant;
    constant.fallback = true;
    constant.fallback_q = 0.8;
    EXPECT_NEAR(catds_score(0.8, constant, 5).catds, 1.0, 1e-15);
    constant.fallback_q = 0.6;
    EXPECT_NEAR(catds_score(0.9, constant, 5).catds, 1.5, 1e-15);
    EXPECT_FALSE(catds_score(0.9, constant, 5).clamped);
    constant.fallback_q = -0.01;
    const auto v = catds_score(0.5, constant, 5);
    EXPECT_TRUE(v.clamped);
    EXPECT_DOUBLE_EQ(v.catds, 0.5 / 1e-6);
    EXPECT_DOUBLE_EQ(v.q, -0.01);
}

TEST(CatdsScore, PropertyMonotoneInSimilarity) {
    const auto m = fit({{10, 0.1}, {40, 0.3}, {90, 0.35}, {400, 0.5}, {800, 0.52}, {3000, 0.1}});
    Rng rng(3);
    for (int trial = 0; trial < 1000; ++trial) {
        const double p = static_cast<double>(rng.uniform_below(5000));
        const double s1 = rng.uniform01(), s2 = rng.uniform01();
        const auto c1 = catds_score(s1, m, p).catds, c2 = catds_score(s2, m, p).catds;
        if (s1 < s2) {
            EXPECT_LE(c1, c2);
        }
        if (s1 > s2) {
            EXPECT_GE(c1, c2);
        }
    }
}

TEST(ScoreCorpus, IdenticalDistributionScoresOne) {
    const auto ref = build_frequency_vector(V{0, 1, 1, 2}, 3);
    const TokenFile donors{{"a", {2, 1, 0, 1}}, {"b", {0, 0}}, {"c", {}}, {"d", {1, 2}}};
    const auto out = score_corpus(ref, donors);
    ASSERT_EQ(out.records.size(), 3u);
    EXPECT_EQ(out.excluded, (std::vector<std::string>{"c"}));
    EXPECT_NEAR(out.records[0].raw_similarity, 1.0, 1e-15);
    EXPECT_EQ(out.records[0].token_count, 4u);
    EXPECT_EQ(out.records[2].clip_id, "d");
}

TEST(ScoreCorpus, ConstantSimilarityGivesConstantCatds) {
    const auto ref = build_frequency_vector(V{0, 1}, 2);
    TokenFile donors;
    for (int i = 1; i <= 8; ++i) donors.push_back({"c" + std::to_string(i), V(static_cast<std::size_t>(i), 0)});
    const auto out = score_corpus(ref, donors);
    for (const auto& r : out.records) EXPECT_NEAR(r.catds, out.records[0].catds, 1e-9);
}

TEST(ScoreCorpus, Errors) {
    const auto ref = build_frequency_vector(V{0, 1}, 2);
    EXPECT_THROW(score_corpus(ref, {}), ValidationError);
    EXPECT_THROW(score_corpus(ref, {{"a", {}}}), ValidationError);
    EXPECT_THROW(score_corpus(ref, {{"a", {2}}}), ValidationError);
    EXPECT_THROW(score_corpus(build_frequency_vector(V{}, 2), {{"a", {1}}}), ValidationError);
}

TEST(ScoreCorpus, ThreadCountDoesNotChangeScores) {
    Rng rng(4);
    V ref_tokens(500);
    for (auto& t : ref_tokens) t = static_cast<std::uint32_t>(rng.uniform_below(40));
    const auto ref = build_frequency_vector(ref_tokens, 40);
    TokenFile donors;
    for (int i = 0; i < 300; ++i) {
        V ids(1 + rng.uniform_below(100));
        for (auto& t : ids) t = static_cast<std::uint32_t>(rng.uniform_below(40));
        donors.push_back({"d" + std::to_string(i), ids});
    }
    EXPECT_EQ(score_corpus(ref, donors, kDefaultQEpsilon, 1).records, score_corpus(ref, donors, kDefaultQEpsilon, 5).records);
}

// Short clips drawn from the same distribution as the reference have low S
// purely from sampling noise; the scaler should take that trend out.
TEST(ScoreCorpus, ScalingReducesLengthCorrelation) {
    Rng rng(10);
    auto draw = [&](std::size_t n) {
        V ids(n);
        for (auto& t : ids) t = static_cast<std::uint32_t>(rng.uniform_below(50));
        return ids;
    };
    const auto ref = build_frequency_vector(draw(20000), 50);
    TokenFile donors;
    for (int i = 0; i < 400; ++i) donors.push_back({"d" + std::to_string(1000 + i), draw(2 + rng.uniform_below(300))});
    const auto out = score_corpus(ref, donors);
    std::vector<double> p, s, c;
    for (const auto& r : out.records) {
        p.push_back(static_cast<double>(r.token_count));
        s.push_back(r.raw_similarity);
        c.push_back(r.catds);
    }
    EXPECT_LT(std::abs(pearson_r(p, c)), std::abs(pearson_r(p, s)));
    EXPECT_GT(pearson_r(p, s), 0.5);
}

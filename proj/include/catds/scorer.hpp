#pragma once

// Token frequency vectors, cosine similarity, the quadratic length scaler and
// the length-debiased CATDS score.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "catds/common.hpp"
#include "catds/corpusio.hpp"

namespace catds {

inline constexpr double kDefaultQEpsilon = 1e-6;

/// counts[t] = occurrences of t across all given sequences.
inline FreqVector build_frequency_vector(std::span<const std::vector<std::uint32_t>> token_seqs, std::uint32_t vocab_size) {
    FreqVector v;
    v.counts.assign(vocab_size, 0);
    for (const auto& seq : token_seqs) {
        for (auto t : seq) {
            if (t >= vocab_size) {
                throw ValidationError("token id " + std::to_string(t) + " out of range for V=" + std::to_string(vocab_size));
            }
            ++v.counts[t];
        }
    }
    return v;
}

inline FreqVector build_frequency_vector(std::span<const std::uint32_t> tokens, std::uint32_t vocab_size) {
    const std::vector<std::uint32_t> one(tokens.begin(), tokens.end());
    return build_frequency_vector(std::span<const std::vector<std::uint32_t>>(&one, 1), vocab_size);
}

inline FreqVector build_frequency_vector(const TokenFile& file, std::uint32_t vocab_size) {
    std::vector<std::vector<std::uint32_t>> seqs;
    seqs.reserve(file.size());
    for (const auto& r : file) seqs.push_back(r.ids);
    return build_frequency_vector(std::span<const std::vector<std::uint32_t>>(seqs), vocab_size);
}

/// (x . y) / (|x| |y|). Works on any arithmetic element type.
template <typename T, typename U>
double cosine_similarity(std::span<const T> x, std::span<const U> y) {
    if (x.size() != y.size()) {
        throw ValidationError("cosine_similarity: dimension mismatch " + std::to_string(x.size()) + " vs " +
                              std::to_string(y.size()));
    }
    double dot = 0.0, xx = 0.0, yy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const auto a = static_cast<double>(x[i]);
        const auto b = static_cast<double>(y[i]);
        dot += a * b;
        xx += a * a;
        yy += b * b;
    }
    if (xx == 0.0 || yy == 0.0) throw ValidationError("cosine_similarity: zero vector");
    return dot / (std::sqrt(xx) * std::sqrt(yy));
}

inline double cosine_similarity(const FreqVector& x, const FreqVector& y) {
    return cosine_similarity(std::span<const std::uint64_t>(x.counts), std::span<const std::uint64_t>(y.counts));
}

/// Baseline similarity as a quadratic in token count: q = a p^2 + b p + c.
///
/// The fit itself is done on z = (p - p_mean) / p_std with coefficients
/// (alpha, beta, gamma); predict() evaluates in that basis, and a/b/c are the
/// same polynomial expanded back into raw p.
struct QuadModel {
    double a = 0.0, b = 0.0, c = 0.0;
    double alpha = 0.0, beta = 0.0, gamma = 0.0;
    double p_mean = 0.0, p_std = 1.0;
    bool fallback = false;
    double fallback_q = 0.0;
    double epsilon = kDefaultQEpsilon;

    double predict(double p) const {
        if (fallback) return fallback_q;
        const double z = (p - p_mean) / p_std;
        return (alpha * z + beta) * z + gamma;
    }
};

namespace detail {

/// Solve a 3x3 system by Gaussian elimination with partial pivoting.
inline std::array<double, 3> solve3(std::array<std::array<double, 3>, 3> m, std::array<double, 3> rhs) {
    for (int col = 0; col < 3; ++col) {
        int pivot = col;
        for (int r = col + 1; r < 3; ++r) {
            if (std::abs(m[r][col]) > std::abs(m[pivot][col])) pivot = r;
        }
        if (m[pivot][col] == 0.0) throw ValidationError("quadratic fit: singular normal equations");
        std::swap(m[col], m[pivot]);
        std::swap(rhs[col], rhs[pivot]);
        for (int r = col + 1; r < 3; ++r) {
            const double f = m[r][col] / m[col][col];
            for (int cc = col; cc < 3; ++cc) m[r][cc] -= f * m[col][cc];
            rhs[r] -= f * rhs[col];
        }
    }
    std::array<double, 3> x{};
    for (int r = 2; r >= 0; --r) {
        double s = rhs[r];
        for (int cc = r + 1; cc < 3; ++cc) s -= m[r][cc] * x[cc];
        x[r] = s / m[r][r];
    }
    return x;
}

}  // namespace detail

struct LengthPoint {
    double p = 0.0;  // token count
    double s = 0.0;  // raw similarity
};

/// Least-squares quadratic of S on standardized p via the 3x3 normal equations.
/// Fewer than three distinct p values: constant model q = mean(S).
inline QuadModel fit_length_scaler(std::span<const LengthPoint> points, double epsilon = kDefaultQEpsilon) {
    if (points.empty()) throw ValidationError("fit_length_scaler: no points");
    if (!(epsilon > 0.0)) throw ValidationError("fit_length_scaler: epsilon must be positive");
    QuadModel m;
    m.epsilon = epsilon;
    const auto n = static_cast<double>(points.size());

    double s_mean = 0.0, p_mean = 0.0;
    for (const auto& pt : points) {
        if (!std::isfinite(pt.p) || !std::isfinite(pt.s)) throw ValidationError("fit_length_scaler: non-finite point");
        s_mean += pt.s;
        p_mean += pt.p;
    }
    s_mean /= n;
    p_mean /= n;

    std::set<double> distinct;
    for (const auto& pt : points) {
        distinct.insert(pt.p);
        if (distinct.size() >= 3) break;
    }
    if (distinct.size() < 3) {
        m.fallback = true;
        m.fallback_q = s_mean;
        m.c = s_mean;
        m.gamma = s_mean;
        m.p_mean = p_mean;
        m.p_std = 0.0;
        return m;
    }

    double var = 0.0;
    for (const auto& pt : points) var += (pt.p - p_mean) * (pt.p - p_mean);
    const double p_std = std::sqrt(var / n);
    m.p_mean = p_mean;
    m.p_std = p_std;

    // normal equations in basis (z^2, z, 1)
    double s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0, t0 = 0, t1 = 0, t2 = 0;
    for (const auto& pt : points) {
        const double z = (pt.p - p_mean) / p_std;
        const double z2 = z * z;
        s0 += 1;
        s1 += z;
        s2 += z2;
        s3 += z2 * z;
        s4 += z2 * z2;
        t0 += pt.s;
        t1 += pt.s * z;
        t2 += pt.s * z2;
    }
    const auto coef = detail::solve3({{{s4, s3, s2}, {s3, s2, s1}, {s2, s1, s0}}}, {t2, t1, t0});
    m.alpha = coef[0];
    m.beta = coef[1];
    m.gamma = coef[2];

    // expand alpha z^2 + beta z + gamma with z = (p - mu)/sigma
    const double mu = p_mean, sg = p_std;
    m.a = m.alpha / (sg * sg);
    m.b = m.beta / sg - 2.0 * m.alpha * mu / (sg * sg);
    m.c = m.alpha * mu * mu / (sg * sg) - m.beta * mu / sg + m.gamma;
    return m;
}

struct CatdsValue {
    double q = 0.0;
    double catds = 0.0;
    bool clamped = false;
};

/// CATDS = S / max(q(p), epsilon); `clamped` records that the floor was used.
inline CatdsValue catds_score(double s, const QuadModel& model, double p) {
    if (!std::isfinite(s)) throw ValidationError("catds_score: non-finite similarity");
    CatdsValue v;
    v.q = model.predict(p);
    v.clamped = !(v.q >= model.epsilon);
    v.catds = s / (v.clamped ? model.epsilon : v.q);
    return v;
}

struct ScoredCorpus {
    std::vector<ScoreRecord> records;  // donor-file order, excluded clips omitted
    std::vector<std::string> excluded;  // clips with empty token sequences
    QuadModel model;
};

/// Score every donor clip against the target reference vector. The scaler is
/// fitted once over all (p, S) pairs of this corpus, taken in clip_id order.
inline ScoredCorpus score_corpus(const FreqVector& target_ref, const TokenFile& donor_tokens,
                                 double epsilon = kDefaultQEpsilon, unsigned threads = 1) {
    if (donor_tokens.empty()) throw ValidationError("score_corpus: donor corpus is empty");
    if (target_ref.is_zero()) throw ValidationError("score_corpus: target reference vector is zero");
    const auto vocab = static_cast<std::uint32_t>(target_ref.dim());

    std::vector<double> sims(donor_tokens.size(), 0.0);
    for (const auto& r : donor_tokens) {
        for (auto t : r.ids) {
            if (t >= vocab) {
                throw ValidationError("clip " + r.clip_id + ": token id " + std::to_string(t) + " out of range for V=" +
                                      std::to_string(vocab));
            }
        }
    }
    parallel_for(donor_tokens.size(), threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            if (donor_tokens[i].ids.empty()) continue;
            sims[i] = cosine_similarity(target_ref, build_frequency_vector(donor_tokens[i].ids, vocab));
        }
    });

    ScoredCorpus out;
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < donor_tokens.size(); ++i) {
        if (donor_tokens[i].ids.empty()) {
            out.excluded.push_back(donor_tokens[i].clip_id);
        } else {
            order.push_back(i);
        }
    }
    if (order.empty()) throw ValidationError("score_corpus: every donor clip has an empty token sequence");

    std::vector<std::size_t> by_id = order;
    std::sort(by_id.begin(), by_id.end(),
              [&](std::size_t a, std::size_t b) { return donor_tokens[a].clip_id < donor_tokens[b].clip_id; });
    std::vector<LengthPoint> pts;
    pts.reserve(by_id.size());
    for (auto i : by_id) pts.push_back({static_cast<double>(donor_tokens[i].ids.size()), sims[i]});
    out.model = fit_length_scaler(pts, epsilon);

    for (auto i : order) {
        ScoreRecord r;
        r.clip_id = donor_tokens[i].clip_id;
        r.token_count = donor_tokens[i].ids.size();
        r.raw_similarity = sims[i];
        const auto v = catds_score(sims[i], out.model, static_cast<double>(r.token_count));
        r.fitted_q = v.q;
        r.catds = v.catds;
        r.clamped = v.clamped;
        out.records.push_back(std::move(r));
    }
    return out;
}

}  // namespace catds

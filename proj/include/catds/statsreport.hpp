#pragma once

// Exact paired Wilcoxon signed-rank test, Pearson correlation, mean/std
// summaries and the TSV exports used for reporting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "catds/common.hpp"
#include "catds/corpusio.hpp"

namespace catds {

/// Null distribution used by the exact test when |differences| contain ties.
enum class TieNull {
    /// Mid-rank statistic, rounded toward the null mean, against the tie-free
    /// distribution of ranks 1..n (scipy's exact mode).
    UntiedRanks,
    /// Conditional distribution: enumerate sign flips over the actual mid-ranks.
    MidRanks,
};

struct WilcoxonOptions {
    TieNull tie_null = TieNull::UntiedRanks;
    std::size_t exact_max_n = 25;
    /// |d| values closer than this (relative) are treated as tied.
    double tie_rel_tol = 1e-9;
};

struct WilcoxonResult {
    double w_plus = 0.0;
    double w_minus = 0.0;
    double statistic = 0.0;  // min(W+, W-)
    double p_value = 1.0;    // two-tailed
    std::size_t n_eff = 0;   // pairs left after dropping zero differences
    bool exact = true;
    double z = 0.0;          // normal approximation only
};

namespace detail {

struct SignedRanks {
    std::vector<double> ranks;      // mid-ranks of |d|, in sorted order
    std::vector<bool> positive;
    std::vector<std::size_t> tie_sizes;
};

inline SignedRanks signed_ranks(std::span<const double> diffs, double rel_tol) {
    std::vector<double> d;
    for (double x : diffs) {
        if (x != 0.0) d.push_back(x);
    }
    std::sort(d.begin(), d.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
    SignedRanks out;
    out.ranks.resize(d.size());
    out.positive.resize(d.size());
    for (std::size_t i = 0; i < d.size();) {
        std::size_t j = i + 1;
        while (j < d.size() && std::abs(d[j]) - std::abs(d[j - 1]) <= rel_tol * std::abs(d[j])) ++j;
        const double mid = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t t = i; t < j; ++t) {
            out.ranks[t] = mid;
            out.positive[t] = d[t] > 0;
        }
        out.tie_sizes.push_back(j - i);
        i = j;
    }
    return out;
}

/// Number of sign assignments whose positive-rank sum (in half-rank units) is each value.
inline std::vector<double> rank_sum_counts(const std::vector<std::uint64_t>& doubled_ranks) {
    const std::uint64_t total = std::accumulate(doubled_ranks.begin(), doubled_ranks.end(), std::uint64_t{0});
    std::vector<double> ways(total + 1, 0.0);
    ways[0] = 1.0;
    std::uint64_t reach = 0;
    for (auto r : doubled_ranks) {
        reach += r;
        for (std::uint64_t s = reach; s >= r; --s) {
            ways[s] += ways[s - r];
            if (s == r) break;
        }
    }
    return ways;
}

inline double normal_two_tailed(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

}  // namespace detail

/// Paired signed-rank test on differences d_i = a_i - b_i. Zero differences are
/// dropped; tied |d| receive mid-ranks. Exact p for n_eff <= exact_max_n via
/// the rank-sum generating function (equivalent to enumerating all 2^n sign
/// patterns); tie-corrected normal approximation above.
inline WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                           const WilcoxonOptions& opts = {}) {
    if (a.size() != b.size()) throw ValidationError("wilcoxon: paired samples differ in length");
    std::vector<double> diffs(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!std::isfinite(a[i]) || !std::isfinite(b[i])) throw ValidationError("wilcoxon: non-finite value");
        diffs[i] = a[i] - b[i];
    }
    const auto sr = detail::signed_ranks(diffs, opts.tie_rel_tol);
    WilcoxonResult res;
    res.n_eff = sr.ranks.size();
    if (res.n_eff == 0) throw ValidationError("wilcoxon: all differences are zero");
    for (std::size_t i = 0; i < res.n_eff; ++i) (sr.positive[i] ? res.w_plus : res.w_minus) += sr.ranks[i];
    res.statistic = std::min(res.w_plus, res.w_minus);
    const double n = static_cast<double>(res.n_eff);

    if (res.n_eff <= opts.exact_max_n) {
        res.exact = true;
        std::vector<std::uint64_t> doubled;
        for (std::size_t i = 0; i < res.n_eff; ++i) {
            doubled.push_back(opts.tie_null == TieNull::MidRanks ? static_cast<std::uint64_t>(std::llround(2 * sr.ranks[i]))
                                                                 : 2 * (i + 1));
        }
        const auto ways = detail::rank_sum_counts(doubled);
        // A half-integer mid-rank statistic has no mass under the integer null;
        // round it toward the mean, as scipy's exact mode does.
        const double stat = opts.tie_null == TieNull::MidRanks ? res.statistic : std::ceil(res.statistic - 1e-9);
        const auto limit = static_cast<std::uint64_t>(std::floor(2 * stat + 1e-9));
        double tail = 0.0, all = 0.0;
        for (std::size_t s = 0; s < ways.size(); ++s) {
            all += ways[s];
            if (s <= limit) tail += ways[s];
        }
        res.p_value = std::min(1.0, 2.0 * tail / all);
        return res;
    }

    res.exact = false;
    const double mean = n * (n + 1) / 4.0;
    double var = n * (n + 1) * (2 * n + 1) / 24.0;
    for (auto t : sr.tie_sizes) {
        const double tt = static_cast<double>(t);
        var -= (tt * tt * tt - tt) / 48.0;
    }
    if (!(var > 0.0)) throw ValidationError("wilcoxon: degenerate variance");
    res.z = (res.w_plus - mean) / std::sqrt(var);
    res.p_value = std::min(1.0, detail::normal_two_tailed(res.z));
    return res;
}

/// Sample Pearson correlation.
inline double pearson_r(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw ValidationError("pearson_r: series differ in length");
    if (xs.size() < 2) throw ValidationError("pearson_r: need at least two points");
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw ValidationError("pearson_r: zero variance");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

struct Summary {
    double mean = 0.0;
    double std = 0.0;           // sample standard deviation (n - 1)
    std::size_t n = 0;
    bool std_undefined = false;  // n == 1: std reported as 0
};

inline Summary summarize(std::span<const double> values) {
    if (values.empty()) throw ValidationError("summarize: empty input");
    Summary s;
    s.n = values.size();
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
    if (s.n == 1) {
        s.std_undefined = true;
        return s;
    }
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
    return s;
}

/// Two-column TSV of (token_count, score) for plotting length dependence.
inline std::string export_scatter(const std::vector<ScoreRecord>& scores, bool scaled) {
    if (scores.empty()) throw ValidationError("export_scatter: no records");
    std::string out = scaled ? "token_count\tcatds\n" : "token_count\traw_similarity\n";
    for (const auto& r : scores) {
        out += std::to_string(r.token_count) + '\t' + detail::format_double(scaled ? r.catds : r.raw_similarity) + '\n';
    }
    return out;
}

// ---------------------------------------------------------------- results report

struct ResultRow {
    std::string condition;  // e.g. donor language
    std::string method;     // e.g. random, lid, catds, ucatds
    std::int64_t size = 0;
    double metric = 0.0;    // e.g. WER %
};

/// TSV with header "condition\tmethod\tsize\tmetric"; several rows per
/// (condition, method, size) cell are replicates.
inline std::vector<ResultRow> parse_results(std::string_view text, std::string_view source = "<results>") {
    std::vector<ResultRow> out;
    const auto all = detail::lines(text);
    if (all.empty() || all[0] != "condition\tmethod\tsize\tmetric") {
        throw FormatError(std::string(source) + ": expected header 'condition<TAB>method<TAB>size<TAB>metric'");
    }
    for (std::size_t i = 1; i < all.size(); ++i) {
        if (all[i].empty()) continue;
        const auto f = detail::split(all[i], '\t');
        if (f.size() != 4) throw FormatError(detail::at_line(source, i + 1) + "expected 4 columns");
        try {
            out.push_back({std::string(f[0]), std::string(f[1]), detail::parse_number<std::int64_t>(f[2], "size"),
                           detail::parse_number<double>(f[3], "metric")});
        } catch (const FormatError& ex) {
            throw FormatError(detail::at_line(source, i + 1) + ex.what());
        }
        if (!std::isfinite(out.back().metric)) throw ValidationError(detail::at_line(source, i + 1) + "non-finite metric");
    }
    return out;
}

struct MethodComparison {
    std::string method;
    std::string baseline;
    WilcoxonResult test;
};

struct Report {
    std::string summary_tsv;      // condition, method, size, n, mean, std
    std::string comparisons_tsv;  // method, baseline, n_pairs, n_eff, w_plus, w_minus, p_value, exact
    std::vector<MethodComparison> comparisons;
};

/// Per-cell mean/std, then one paired signed-rank test per non-baseline method
/// over the (condition, size) cells it shares with the baseline, comparing
/// baseline minus method on cell means.
inline Report build_report(const std::vector<ResultRow>& rows, const std::string& baseline = "random",
                           const WilcoxonOptions& opts = {}) {
    using Cell = std::tuple<std::string, std::int64_t>;
    std::map<std::string, std::map<Cell, std::vector<double>>> by_method;
    for (const auto& r : rows) by_method[r.method][{r.condition, r.size}].push_back(r.metric);

    Report rep;
    rep.summary_tsv = "condition\tmethod\tsize\tn\tmean\tstd\n";
    for (const auto& [method, cells] : by_method) {
        for (const auto& [cell, values] : cells) {
            const auto s = summarize(values);
            rep.summary_tsv += std::get<0>(cell) + '\t' + method + '\t' + std::to_string(std::get<1>(cell)) + '\t' +
                               std::to_string(s.n) + '\t' + detail::format_double(s.mean) + '\t' +
                               detail::format_double(s.std) + '\n';
        }
    }

    rep.comparisons_tsv = "method\tbaseline\tn_pairs\tn_eff\tw_plus\tw_minus\tp_value\texact\n";
    auto base_it = by_method.find(baseline);
    if (base_it == by_method.end()) return rep;
    for (const auto& [method, cells] : by_method) {
        if (method == baseline) continue;
        std::vector<double> base_vals, method_vals;
        for (const auto& [cell, values] : cells) {
            auto b = base_it->second.find(cell);
            if (b == base_it->second.end()) continue;
            base_vals.push_back(summarize(b->second).mean);
            method_vals.push_back(summarize(values).mean);
        }
        if (base_vals.empty()) continue;
        WilcoxonResult w;
        try {
            w = wilcoxon_signed_rank(base_vals, method_vals, opts);
        } catch (const ValidationError&) {
            continue;  // every paired difference is zero
        }
        rep.comparisons.push_back({method, baseline, w});
        rep.comparisons_tsv += method + '\t' + baseline + '\t' + std::to_string(base_vals.size()) + '\t' +
                               std::to_string(w.n_eff) + '\t' + detail::format_double(w.w_plus) + '\t' +
                               detail::format_double(w.w_minus) + '\t' + detail::format_double(w.p_value) + '\t' +
                               (w.exact ? "1" : "0") + '\n';
    }
    return rep;
}

}  // namespace catds

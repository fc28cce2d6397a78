#pragma once

// Subset schedule and the four donor selection strategies: random, LID rank,
// scaled CATDS and unscaled (raw cosine) CATDS.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "catds/common.hpp"
#include "catds/corpusio.hpp"

namespace catds {

/// [N - k*delta_n for k = 0..k_max]
inline std::vector<std::size_t> subset_sizes(std::int64_t n, std::int64_t delta_n, std::int64_t k_max) {
    if (n < 0 || delta_n <= 0 || k_max < 0) throw ValidationError("subset_sizes: need N >= 0, delta_N > 0, k_max >= 0");
    if (n - k_max * delta_n < 0) {
        throw ValidationError("subset_sizes: N - k_max*delta_N = " + std::to_string(n - k_max * delta_n) + " is negative");
    }
    std::vector<std::size_t> out;
    for (std::int64_t k = 0; k <= k_max; ++k) out.push_back(static_cast<std::size_t>(n - k * delta_n));
    return out;
}

namespace detail {

inline ClipManifest pick_in_manifest_order(const ClipManifest& manifest, const std::vector<std::size_t>& rows) {
    std::vector<std::size_t> sorted = rows;
    std::sort(sorted.begin(), sorted.end());
    ClipManifest out;
    out.entries.reserve(sorted.size());
    for (auto i : sorted) out.entries.push_back(manifest.entries[i]);
    return out;
}

inline std::unordered_map<std::string, std::size_t> row_index(const ClipManifest& manifest) {
    std::unordered_map<std::string, std::size_t> idx;
    idx.reserve(manifest.size());
    for (std::size_t i = 0; i < manifest.size(); ++i) idx.emplace(manifest.entries[i].clip_id, i);
    return idx;
}

}  // namespace detail

/// Uniform sample without replacement (partial Fisher-Yates), returned in manifest order.
inline ClipManifest select_random(const ClipManifest& manifest, std::size_t size, std::uint64_t seed) {
    if (size > manifest.size()) {
        throw ValidationError("select_random: size " + std::to_string(size) + " exceeds manifest size " +
                              std::to_string(manifest.size()));
    }
    std::vector<std::size_t> idx(manifest.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    for (std::size_t i = 0; i < size; ++i) {
        const std::size_t j = i + rng.uniform_below(idx.size() - i);
        std::swap(idx[i], idx[j]);
    }
    idx.resize(size);
    return detail::pick_in_manifest_order(manifest, idx);
}

/// Full LID ordering of the manifest: rank ascending, then probability
/// descending, then clip_id ascending.
inline std::vector<std::size_t> lid_order(const ClipManifest& manifest, const std::vector<LidRecord>& lid) {
    std::unordered_map<std::string, const LidRecord*> by_id;
    for (const auto& r : lid) by_id.emplace(r.clip_id, &r);
    std::vector<const LidRecord*> rec(manifest.size());
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        auto it = by_id.find(manifest.entries[i].clip_id);
        if (it == by_id.end()) throw ValidationError("select_by_lid: no LID score for clip " + manifest.entries[i].clip_id);
        rec[i] = it->second;
    }
    std::vector<std::size_t> order(manifest.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (rec[a]->rank != rec[b]->rank) return rec[a]->rank < rec[b]->rank;
        if (rec[a]->prob != rec[b]->prob) return rec[a]->prob > rec[b]->prob;
        return manifest.entries[a].clip_id < manifest.entries[b].clip_id;
    });
    return order;
}

inline ClipManifest select_by_lid(const ClipManifest& manifest, const std::vector<LidRecord>& lid, std::size_t size) {
    if (size > manifest.size()) throw ValidationError("select_by_lid: size exceeds manifest size");
    auto order = lid_order(manifest, lid);
    order.resize(size);
    return detail::pick_in_manifest_order(manifest, order);
}

/// Manifest rows of the scored clips, best first: descending catds (or raw
/// similarity when unscaled), ties by clip_id ascending.
inline std::vector<std::size_t> catds_order(const ClipManifest& manifest, const std::vector<ScoreRecord>& scores,
                                            bool scaled) {
    const auto idx = detail::row_index(manifest);
    std::vector<std::pair<std::size_t, double>> keyed;
    keyed.reserve(scores.size());
    std::unordered_set<std::string> seen;
    for (const auto& s : scores) {
        auto it = idx.find(s.clip_id);
        if (it == idx.end()) throw ValidationError("select_by_catds: scored clip " + s.clip_id + " is not in the manifest");
        if (!seen.insert(s.clip_id).second) throw ValidationError("select_by_catds: clip " + s.clip_id + " scored twice");
        const double key = scaled ? s.catds : s.raw_similarity;
        if (std::isnan(key)) throw ValidationError("select_by_catds: NaN score for clip " + s.clip_id);
        keyed.emplace_back(it->second, key);
    }
    std::sort(keyed.begin(), keyed.end(), [&](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return manifest.entries[a.first].clip_id < manifest.entries[b.first].clip_id;
    });
    std::vector<std::size_t> order;
    order.reserve(keyed.size());
    for (const auto& [row, key] : keyed) order.push_back(row);
    return order;
}

inline ClipManifest select_by_catds(const ClipManifest& manifest, const std::vector<ScoreRecord>& scores,
                                    std::size_t size, bool scaled) {
    auto order = catds_order(manifest, scores, scaled);
    if (size > order.size()) {
        throw ValidationError("select_by_catds: size " + std::to_string(size) + " exceeds the " +
                              std::to_string(order.size()) + " scored clips");
    }
    order.resize(size);
    return detail::pick_in_manifest_order(manifest, order);
}

// ---------------------------------------------------------------- experiment grid

enum class Strategy { Shared, Random, Lid, Catds, UnscaledCatds };

inline std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::Shared: return "shared";
        case Strategy::Random: return "random";
        case Strategy::Lid: return "lid";
        case Strategy::Catds: return "catds";
        case Strategy::UnscaledCatds: return "ucatds";
    }
    return "unknown";
}

struct DatasetConfig {
    Strategy strategy = Strategy::Shared;
    std::size_t k = 0;
    std::size_t size = 0;
    std::optional<std::uint32_t> replicate;  // 1-based, random strategy only

    std::string file_name(const std::string& language) const {
        std::string name = language + "_" + strategy_name(strategy) + "_" + std::to_string(size);
        if (replicate) name += "_seed" + std::to_string(*replicate);
        return name + ".jsonl";
    }
};

struct GridOptions {
    std::int64_t n = 20000;
    std::int64_t delta_n = 4000;
    std::int64_t k_max = 5;
    std::uint32_t random_replicates = 3;
    bool include_lid = true;
};

/// The full size (k = 0) and the empty set are identical under every strategy
/// and appear once as "shared"; every other size gets each strategy.
inline std::vector<DatasetConfig> plan_grid(const GridOptions& opts) {
    const auto sizes = subset_sizes(opts.n, opts.delta_n, opts.k_max);
    std::vector<DatasetConfig> out;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
        const auto size = sizes[k];
        if (size == static_cast<std::size_t>(opts.n) || size == 0) {
            out.push_back({Strategy::Shared, k, size, std::nullopt});
            continue;
        }
        for (std::uint32_t r = 1; r <= opts.random_replicates; ++r) out.push_back({Strategy::Random, k, size, r});
        if (opts.include_lid) out.push_back({Strategy::Lid, k, size, std::nullopt});
        out.push_back({Strategy::Catds, k, size, std::nullopt});
        out.push_back({Strategy::UnscaledCatds, k, size, std::nullopt});
    }
    return out;
}

struct GridInputs {
    std::string language;
    const ClipManifest* manifest = nullptr;
    const std::vector<ScoreRecord>* scores = nullptr;
    const std::vector<LidRecord>* lid = nullptr;  // may be null when include_lid is false
    std::uint64_t base_seed = 0;
};

struct GridOutput {
    DatasetConfig config;
    ClipManifest subset;
    std::uint64_t seed = 0;  // effective RNG seed, random strategy only
};

/// Materialize every planned configuration. Random replicate r draws with
/// seed base_seed + r at every size.
inline std::vector<GridOutput> build_grid(const GridInputs& in, const GridOptions& opts) {
    if (!in.manifest || !in.scores) throw ValidationError("build_grid: manifest and scores are required");
    if (opts.include_lid && !in.lid) throw ValidationError("build_grid: LID table required when include_lid is set");
    if (static_cast<std::int64_t>(in.manifest->size()) != opts.n) {
        throw ValidationError("build_grid: N=" + std::to_string(opts.n) + " but the donor manifest has " +
                              std::to_string(in.manifest->size()) + " clips");
    }
    const auto scaled_order = catds_order(*in.manifest, *in.scores, true);
    const auto unscaled_order = catds_order(*in.manifest, *in.scores, false);
    std::vector<std::size_t> lid_rows;
    if (opts.include_lid) lid_rows = lid_order(*in.manifest, *in.lid);

    auto take = [&](const std::vector<std::size_t>& order, std::size_t size, const char* what) {
        if (size > order.size()) {
            throw ValidationError(std::string("build_grid: ") + what + " ranking has only " + std::to_string(order.size()) +
                                  " clips, cannot take " + std::to_string(size));
        }
        return detail::pick_in_manifest_order(*in.manifest, {order.begin(), order.begin() + static_cast<std::ptrdiff_t>(size)});
    };

    std::vector<GridOutput> out;
    for (const auto& cfg : plan_grid(opts)) {
        GridOutput g{cfg, {}, 0};
        switch (cfg.strategy) {
            case Strategy::Shared:
                if (cfg.size != 0) g.subset = *in.manifest;
                break;
            case Strategy::Random:
                g.seed = in.base_seed + *cfg.replicate;
                g.subset = select_random(*in.manifest, cfg.size, g.seed);
                break;
            case Strategy::Lid: g.subset = take(lid_rows, cfg.size, "LID"); break;
            case Strategy::Catds: g.subset = take(scaled_order, cfg.size, "CATDS"); break;
            case Strategy::UnscaledCatds: g.subset = take(unscaled_order, cfg.size, "unscaled CATDS"); break;
        }
        out.push_back(std::move(g));
    }
    return out;
}

/// Writes one manifest per configuration plus grid.json with provenance
/// (strategy, size, seed, input table hashes).
inline nlohmann::ordered_json write_grid(const std::filesystem::path& out_dir, const GridInputs& in,
                                         const std::vector<GridOutput>& grid) {
    std::filesystem::create_directories(out_dir);
    auto hex = [](std::uint64_t h) {
        static constexpr char digits[] = "0123456789abcdef";
        std::string s(16, '0');
        for (int i = 15; i >= 0; --i, h >>= 4) s[static_cast<std::size_t>(i)] = digits[h & 0xF];
        return s;
    };
    nlohmann::ordered_json index;
    index["language"] = in.language;
    index["score_table_fnv1a64"] = hex(fnv1a64(format_score_table(*in.scores)));
    if (in.lid) index["lid_table_fnv1a64"] = hex(fnv1a64(format_lid_table(*in.lid)));
    index["base_seed"] = in.base_seed;
    auto configs = nlohmann::ordered_json::array();
    for (const auto& g : grid) {
        const auto name = g.config.file_name(in.language);
        write_manifest(out_dir / name, g.subset);
        nlohmann::ordered_json c;
        c["file"] = name;
        c["strategy"] = strategy_name(g.config.strategy);
        c["k"] = g.config.k;
        c["size"] = g.config.size;
        if (g.config.replicate) {
            c["replicate"] = *g.config.replicate;
            c["seed"] = g.seed;
        }
        configs.push_back(std::move(c));
    }
    index["configurations"] = std::move(configs);
    detail::write_all(out_dir / "grid.json", index.dump(1) + "\n");
    return index;
}

}  // namespace catds

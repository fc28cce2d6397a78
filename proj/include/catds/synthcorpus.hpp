#pragma once

// Markov-chain symbol sources for exercising the pipeline without speech data,
// plus Gaussian emitters that turn symbol streams into frame matrices.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "catds/common.hpp"
#include "catds/corpusio.hpp"
#include "catds/subword.hpp"

namespace catds {

struct LanguageSpec {
    std::uint32_t alphabet_size = 0;
    std::vector<std::vector<double>> transition;  // row-stochastic, alphabet_size x alphabet_size
    std::vector<double> initial;                  // alphabet_size
    std::size_t min_length = 1;
    std::size_t max_length = 1;
    std::uint64_t seed = 0;
};

inline void validate_spec(const LanguageSpec& s) {
    if (s.alphabet_size == 0) throw ValidationError("language spec: alphabet_size must be positive");
    if (s.min_length == 0 || s.min_length > s.max_length) throw ValidationError("language spec: need 1 <= min_length <= max_length");
    auto check_row = [&](const std::vector<double>& row, const std::string& what) {
        if (row.size() != s.alphabet_size) throw ValidationError("language spec: " + what + " has wrong length");
        double sum = 0.0;
        for (double p : row) {
            if (!(p >= 0.0) || !std::isfinite(p)) throw ValidationError("language spec: " + what + " has a negative entry");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("language spec: " + what + " does not sum to 1");
    };
    check_row(s.initial, "initial distribution");
    if (s.transition.size() != s.alphabet_size) throw ValidationError("language spec: transition must be square");
    for (std::size_t i = 0; i < s.transition.size(); ++i) check_row(s.transition[i], "transition row " + std::to_string(i));
}

/// Uniform transitions restricted to `support` (all symbols when empty).
inline LanguageSpec uniform_spec(std::uint32_t alphabet_size, std::vector<std::uint32_t> support, std::size_t min_length,
                                 std::size_t max_length, std::uint64_t seed) {
    if (support.empty()) {
        for (std::uint32_t i = 0; i < alphabet_size; ++i) support.push_back(i);
    }
    LanguageSpec s{alphabet_size, {}, std::vector<double>(alphabet_size, 0.0), min_length, max_length, seed};
    std::vector<double> row(alphabet_size, 0.0);
    for (auto sym : support) {
        if (sym >= alphabet_size) throw ValidationError("support symbol outside alphabet");
        row[sym] = 1.0 / static_cast<double>(support.size());
    }
    s.initial = row;
    s.transition.assign(alphabet_size, row);
    return s;
}

/// Random transition rows over `support`: each row is a normalized vector of
/// Exp(1) draws raised to `sharpness` (larger = peakier rows).
inline LanguageSpec random_spec(std::uint32_t alphabet_size, std::vector<std::uint32_t> support, double sharpness,
                                std::size_t min_length, std::size_t max_length, std::uint64_t seed,
                                std::uint64_t structure_seed) {
    auto s = uniform_spec(alphabet_size, support, min_length, max_length, seed);
    if (support.empty()) {
        for (std::uint32_t i = 0; i < alphabet_size; ++i) support.push_back(i);
    }
    Rng rng(structure_seed);
    for (auto& row : s.transition) {
        std::fill(row.begin(), row.end(), 0.0);
        double sum = 0.0;
        for (auto sym : support) {
            double u = rng.uniform01();
            while (u <= 0.0) u = rng.uniform01();
            row[sym] = std::pow(-std::log(u), sharpness);
            sum += row[sym];
        }
        for (auto& p : row) p /= sum;
    }
    return s;
}

/// Blend every transition row toward a fresh random row: (1 - strength) * row + strength * noise.
inline LanguageSpec perturb_spec(const LanguageSpec& base, double strength, std::uint64_t structure_seed,
                                 std::uint64_t seed) {
    if (!(strength >= 0.0 && strength <= 1.0)) throw ValidationError("perturb_spec: strength must be in [0,1]");
    LanguageSpec s = base;
    s.seed = seed;
    Rng rng(structure_seed);
    for (auto& row : s.transition) {
        std::vector<double> noise(row.size());
        double sum = 0.0;
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (row[j] == 0.0) continue;  // keep support
            double u = rng.uniform01();
            while (u <= 0.0) u = rng.uniform01();
            noise[j] = -std::log(u);
            sum += noise[j];
        }
        for (std::size_t j = 0; j < row.size(); ++j) row[j] = (1.0 - strength) * row[j] + strength * noise[j] / sum;
    }
    return s;
}

namespace detail {

inline std::uint32_t draw_categorical(const std::vector<double>& probs, Rng& rng) {
    const double u = rng.uniform01();
    double cum = 0.0;
    std::uint32_t last = 0;
    for (std::uint32_t i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        cum += probs[i];
        last = i;
        if (u < cum) return i;
    }
    return last;
}

}  // namespace detail

/// One sequence from the chain; clip `index` draws from seed spec.seed + index.
inline SymbolSeq generate_clip(const LanguageSpec& spec, std::uint64_t index) {
    Rng rng(spec.seed + index);
    const std::size_t len = spec.min_length + rng.uniform_below(spec.max_length - spec.min_length + 1);
    SymbolSeq seq;
    seq.reserve(len);
    seq.push_back(detail::draw_categorical(spec.initial, rng));
    while (seq.size() < len) seq.push_back(detail::draw_categorical(spec.transition[seq.back()], rng));
    return seq;
}

inline std::vector<SymbolSeq> generate_corpus(const LanguageSpec& spec, std::size_t n_clips, std::uint64_t first_index = 0) {
    validate_spec(spec);
    std::vector<SymbolSeq> out;
    out.reserve(n_clips);
    for (std::size_t i = 0; i < n_clips; ++i) out.push_back(generate_clip(spec, first_index + i));
    return out;
}

struct LabeledCorpus {
    std::vector<std::string> clip_ids;
    std::vector<SymbolSeq> clips;
    std::vector<bool> target_like;

    TokenFile as_token_file() const {
        TokenFile f;
        for (std::size_t i = 0; i < clips.size(); ++i) f.push_back({clip_ids[i], clips[i]});
        return f;
    }
};

/// n_target_like clips from target_spec (indices 0..n_t-1) and n_distractor
/// from distractor_spec (indices n_t..), shuffled and given ids "<prefix>NNNNNN".
inline LabeledCorpus make_mixture(const LanguageSpec& target_spec, const LanguageSpec& distractor_spec,
                                  std::size_t n_target_like, std::size_t n_distractor, const std::string& prefix = "m") {
    validate_spec(target_spec);
    validate_spec(distractor_spec);
    if (target_spec.alphabet_size != distractor_spec.alphabet_size) {
        throw ValidationError("make_mixture: target and distractor alphabets differ");
    }
    struct Item {
        SymbolSeq seq;
        bool target;
    };
    std::vector<Item> items;
    items.reserve(n_target_like + n_distractor);
    for (std::size_t i = 0; i < n_target_like; ++i) items.push_back({generate_clip(target_spec, i), true});
    for (std::size_t i = 0; i < n_distractor; ++i) {
        items.push_back({generate_clip(distractor_spec, n_target_like + i), false});
    }
    Rng rng(target_spec.seed ^ (distractor_spec.seed * 0x9E3779B97F4A7C15ULL) ^ 0x5EEDULL);
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[rng.uniform_below(i)]);

    LabeledCorpus out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        std::string n = std::to_string(i);
        out.clip_ids.push_back(prefix + std::string(n.size() < 6 ? 6 - n.size() : 0, '0') + n);
        out.clips.push_back(std::move(items[i].seq));
        out.target_like.push_back(items[i].target);
    }
    return out;
}

// ---------------------------------------------------------------- feature emission

/// alphabet_size x dim centres drawn from N(0, spread^2).
inline FrameMatrix make_emitter_centroids(std::uint32_t alphabet_size, std::size_t dim, double spread, std::uint64_t seed) {
    FrameMatrix c(alphabet_size, dim);
    Rng rng(seed);
    for (auto& v : c.data) v = static_cast<float>(spread * rng.normal());
    return c;
}

/// Each symbol emits between min_repeat and max_repeat frames around its
/// centre with isotropic Gaussian noise.
inline FrameMatrix emit_features(const SymbolSeq& symbols, const FrameMatrix& centroids, double noise_sd,
                                 std::size_t min_repeat, std::size_t max_repeat, std::uint64_t seed) {
    if (min_repeat == 0 || min_repeat > max_repeat) throw ValidationError("emit_features: need 1 <= min_repeat <= max_repeat");
    Rng rng(seed);
    std::vector<float> data;
    std::size_t rows = 0;
    for (auto s : symbols) {
        if (s >= centroids.rows) throw ValidationError("emit_features: symbol has no emitter");
        const std::size_t reps = min_repeat + rng.uniform_below(max_repeat - min_repeat + 1);
        for (std::size_t r = 0; r < reps; ++r) {
            const auto c = centroids.row(s);
            for (float v : c) data.push_back(static_cast<float>(v + noise_sd * rng.normal()));
            ++rows;
        }
    }
    return FrameMatrix(rows, centroids.cols, std::move(data));
}

// ---------------------------------------------------------------- JSON specs
//
// {"alphabet_size": 16, "length": [20, 200], "seed": 3,
//  "transition": [[...], ...] | "uniform" | "random",
//  "initial": [...]              (optional with generated transitions),
//  "support": [0, 1, ...]        (optional, generated transitions only),
//  "sharpness": 1.0, "structure_seed": 11   ("random" only)}

inline LanguageSpec spec_from_json(const nlohmann::json& j) {
    try {
        const auto alphabet = j.at("alphabet_size").get<std::uint32_t>();
        const auto length = j.at("length").get<std::vector<std::size_t>>();
        if (length.size() != 2) throw FormatError("length must be [min, max]");
        const auto seed = j.value("seed", std::uint64_t{0});
        const auto support = j.value("support", std::vector<std::uint32_t>{});
        LanguageSpec s;
        const auto& t = j.at("transition");
        if (t.is_string()) {
            const auto kind = t.get<std::string>();
            if (kind == "uniform") {
                s = uniform_spec(alphabet, support, length[0], length[1], seed);
            } else if (kind == "random") {
                s = random_spec(alphabet, support, j.value("sharpness", 1.0), length[0], length[1], seed,
                                j.value("structure_seed", std::uint64_t{1}));
            } else {
                throw FormatError("unknown transition kind '" + kind + "'");
            }
            if (j.contains("initial")) s.initial = j.at("initial").get<std::vector<double>>();
        } else {
            s.alphabet_size = alphabet;
            s.transition = t.get<std::vector<std::vector<double>>>();
            s.initial = j.at("initial").get<std::vector<double>>();
            s.min_length = length[0];
            s.max_length = length[1];
            s.seed = seed;
        }
        if (j.contains("perturb")) {
            const auto& p = j.at("perturb");
            s = perturb_spec(s, p.at("strength").get<double>(), p.value("structure_seed", std::uint64_t{2}), seed);
        }
        validate_spec(s);
        return s;
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError(std::string("malformed language spec: ") + ex.what());
    }
}

inline nlohmann::ordered_json spec_to_json(const LanguageSpec& s) {
    nlohmann::ordered_json j;
    j["alphabet_size"] = s.alphabet_size;
    j["length"] = {s.min_length, s.max_length};
    j["seed"] = s.seed;
    j["initial"] = s.initial;
    j["transition"] = s.transition;
    return j;
}

}  // namespace catds

#pragma once

// Stage composition: features -> cluster ids -> collapsed symbols -> tokens -> scores.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "catds/corpusio.hpp"
#include "catds/quantizer.hpp"
#include "catds/scorer.hpp"
#include "catds/selector.hpp"
#include "catds/subword.hpp"
#include "catds/symbolizer.hpp"

namespace catds {

inline SymbolSeq symbols_from_features(const Codebook& codebook, const FrameMatrix& frames, unsigned threads = 1) {
    return collapse_runs(assign(codebook, frames, threads));
}

inline TokenFile encode_all(const Tokenizer& model, const TokenFile& symbols, unsigned threads = 1) {
    TokenFile out(symbols.size());
    for (std::size_t i = 0; i < symbols.size(); ++i) out[i].clip_id = symbols[i].clip_id;
    std::vector<std::string> errors(symbols.size());
    parallel_for(symbols.size(), threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            try {
                out[i].ids = model.encode(symbols[i].ids);
            } catch (const Error& ex) {
                errors[i] = ex.what();
            }
        }
    });
    for (std::size_t i = 0; i < errors.size(); ++i) {
        if (!errors[i].empty()) throw ValidationError("clip " + symbols[i].clip_id + ": " + errors[i]);
    }
    return out;
}

struct SymbolScoring {
    BpeModel model;
    FreqVector reference;
    TokenFile donor_tokens;
    ScoredCorpus scored;
};

/// Train the tokenizer on the reference (target-language) symbols, aggregate
/// their tokens into the reference vector, then encode and score the donors.
inline SymbolScoring score_symbol_corpora(const std::vector<SymbolSeq>& reference, const TokenFile& donors,
                                          std::uint32_t alphabet_size, std::uint32_t vocab_size,
                                          double epsilon = kDefaultQEpsilon, unsigned threads = 1) {
    SymbolScoring out;
    out.model = train_tokenizer(reference, alphabet_size, vocab_size);
    std::vector<std::vector<std::uint32_t>> ref_tokens;
    ref_tokens.reserve(reference.size());
    for (const auto& s : reference) ref_tokens.push_back(out.model.encode(s));
    out.reference = build_frequency_vector(std::span<const std::vector<std::uint32_t>>(ref_tokens), out.model.vocab_size());
    out.donor_tokens = encode_all(out.model, donors, threads);
    out.scored = score_corpus(out.reference, out.donor_tokens, epsilon, threads);
    return out;
}

/// Fraction of the top-k clips (by catds, or raw similarity when unscaled) that are labeled positive.
inline double precision_at_k(const std::vector<ScoreRecord>& scores, const std::unordered_map<std::string, bool>& labels,
                             std::size_t k, bool scaled = true) {
    if (k == 0 || k > scores.size()) throw ValidationError("precision_at_k: k must be in [1, number of scores]");
    ClipManifest m;
    for (const auto& s : scores) m.entries.push_back({s.clip_id, "", 0.0, "", {}});
    const auto order = catds_order(m, scores, scaled);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < k; ++i) {
        auto it = labels.find(m.entries[order[i]].clip_id);
        if (it == labels.end()) throw ValidationError("precision_at_k: unlabeled clip " + m.entries[order[i]].clip_id);
        hits += it->second ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(k);
}

}  // namespace catds

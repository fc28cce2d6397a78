#pragma once

// Pairwise-merge subword tokenizer over a closed integer symbol alphabet.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <queue>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "catds/common.hpp"
#include "catds/corpusio.hpp"

namespace catds {

using SymbolSeq = std::vector<std::uint32_t>;
using TokenSeq = std::vector<std::uint32_t>;

/// Encode/decode contract shared by subword models.
class Tokenizer {
public:
    virtual ~Tokenizer() = default;
    virtual std::uint32_t vocab_size() const = 0;
    virtual TokenSeq encode(std::span<const std::uint32_t> symbols) const = 0;
    virtual SymbolSeq decode(std::span<const std::uint32_t> tokens) const = 0;
};

/// Base symbols occupy ids [0, alphabet_size); merge i creates token alphabet_size + i.
class BpeModel final : public Tokenizer {
public:
    using Pair = std::pair<std::uint32_t, std::uint32_t>;

    BpeModel() = default;

    BpeModel(std::uint32_t alphabet_size, std::uint32_t requested_vocab, std::vector<Pair> merges)
        : alphabet_size_(alphabet_size), requested_vocab_(requested_vocab), merges_(std::move(merges)) {
        if (alphabet_size_ == 0) throw ValidationError("tokenizer alphabet must be nonempty");
        pieces_.reserve(alphabet_size_ + merges_.size());
        for (std::uint32_t s = 0; s < alphabet_size_; ++s) pieces_.push_back({s});
        for (std::size_t i = 0; i < merges_.size(); ++i) {
            const auto [l, r] = merges_[i];
            const auto next_id = pieces_.size();
            if (l >= next_id || r >= next_id) {
                throw ValidationError("merge " + std::to_string(i) + " references a token that does not exist yet");
            }
            SymbolSeq piece = pieces_[l];
            piece.insert(piece.end(), pieces_[r].begin(), pieces_[r].end());
            pieces_.push_back(std::move(piece));
            if (!rank_.emplace(key(l, r), static_cast<std::uint32_t>(i)).second) {
                throw ValidationError("duplicate merge rule at position " + std::to_string(i));
            }
        }
    }

    std::uint32_t alphabet_size() const { return alphabet_size_; }
    std::uint32_t requested_vocab() const { return requested_vocab_; }
    std::uint32_t vocab_size() const override { return static_cast<std::uint32_t>(pieces_.size()); }
    const std::vector<Pair>& merges() const { return merges_; }
    const SymbolSeq& piece(std::uint32_t token) const { return pieces_.at(token); }

    /// True when training ran out of pairs occurring at least twice before reaching the requested size.
    bool underfilled() const { return vocab_size() < requested_vocab_; }

    /// Merge replay: repeatedly merge every left-to-right occurrence of the
    /// lowest-ranked adjacent pair, which applies merges in learned order.
    TokenSeq encode(std::span<const std::uint32_t> symbols) const override {
        TokenSeq seq(symbols.begin(), symbols.end());
        for (auto s : seq) {
            if (s >= alphabet_size_) {
                throw ValidationError("symbol " + std::to_string(s) + " is not in the tokenizer alphabet of size " +
                                      std::to_string(alphabet_size_));
            }
        }
        if (merges_.empty()) return seq;
        constexpr std::uint32_t kNone = UINT32_MAX;
        TokenSeq next;
        while (seq.size() >= 2) {
            std::uint32_t best = kNone;
            for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
                auto it = rank_.find(key(seq[i], seq[i + 1]));
                if (it != rank_.end() && it->second < best) best = it->second;
            }
            if (best == kNone) break;
            const auto [l, r] = merges_[best];
            const std::uint32_t merged = alphabet_size_ + best;
            next.clear();
            for (std::size_t i = 0; i < seq.size();) {
                if (i + 1 < seq.size() && seq[i] == l && seq[i + 1] == r) {
                    next.push_back(merged);
                    i += 2;
                } else {
                    next.push_back(seq[i]);
                    ++i;
                }
            }
            seq.swap(next);
        }
        return seq;
    }

    SymbolSeq decode(std::span<const std::uint32_t> tokens) const override {
        SymbolSeq out;
        for (auto t : tokens) {
            if (t >= pieces_.size()) {
                throw ValidationError("token id " + std::to_string(t) + " outside vocabulary of size " +
                                      std::to_string(pieces_.size()));
            }
            out.insert(out.end(), pieces_[t].begin(), pieces_[t].end());
        }
        return out;
    }

    static std::uint64_t key(std::uint32_t l, std::uint32_t r) { return (std::uint64_t{l} << 32) | r; }

private:
    std::uint32_t alphabet_size_ = 0;
    std::uint32_t requested_vocab_ = 0;
    std::vector<Pair> merges_;
    std::vector<SymbolSeq> pieces_;
    std::unordered_map<std::uint64_t, std::uint32_t> rank_;
};

namespace detail {

/// Merge candidate ordering: higher count first, then the lexicographically
/// smaller (left piece, right piece) in base symbols.
struct PairPriority {
    const std::vector<SymbolSeq>* pieces;

    struct Entry {
        std::int64_t count;
        std::uint32_t left;
        std::uint32_t right;
    };

    // true when a ranks below b (priority_queue keeps the maximum on top)
    bool operator()(const Entry& a, const Entry& b) const {
        if (a.count != b.count) return a.count < b.count;
        const auto& pa = (*pieces)[a.left];
        const auto& pb = (*pieces)[b.left];
        if (pa != pb) return pb < pa;
        return (*pieces)[b.right] < (*pieces)[a.right];
    }
};

}  // namespace detail

inline constexpr std::uint32_t kDefaultVocabSize = 10000;
inline constexpr std::int64_t kMinMergeCount = 2;

/// Greedy pair merging until the vocabulary holds `vocab_size` tokens or no
/// adjacent pair occurs at least twice. Pair counts are maintained
/// incrementally over a linked representation of the whole corpus.
inline BpeModel train_tokenizer(const std::vector<SymbolSeq>& corpus, std::uint32_t alphabet_size,
                                std::uint32_t vocab_size) {
    if (corpus.empty()) throw ValidationError("train_tokenizer: corpus is empty");
    if (alphabet_size == 0) throw ValidationError("train_tokenizer: alphabet must be nonempty");
    if (vocab_size < alphabet_size) {
        throw ValidationError("train_tokenizer: V=" + std::to_string(vocab_size) + " is smaller than the alphabet size " +
                              std::to_string(alphabet_size));
    }

    constexpr std::uint32_t kDead = UINT32_MAX;
    constexpr std::int64_t kNil = -1;
    std::vector<std::uint32_t> token;
    std::vector<std::int64_t> prev, next;
    for (const auto& seq : corpus) {
        const auto start = static_cast<std::int64_t>(token.size());
        for (std::size_t i = 0; i < seq.size(); ++i) {
            if (seq[i] >= alphabet_size) {
                throw ValidationError("train_tokenizer: symbol " + std::to_string(seq[i]) + " outside alphabet");
            }
            token.push_back(seq[i]);
            prev.push_back(i == 0 ? kNil : start + static_cast<std::int64_t>(i) - 1);
            next.push_back(i + 1 == seq.size() ? kNil : start + static_cast<std::int64_t>(i) + 1);
        }
    }

    std::vector<SymbolSeq> pieces;
    for (std::uint32_t s = 0; s < alphabet_size; ++s) pieces.push_back({s});

    std::unordered_map<std::uint64_t, std::int64_t> counts;
    std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> where;
    for (std::size_t i = 0; i < token.size(); ++i) {
        if (next[i] == kNil) continue;
        const auto k = BpeModel::key(token[i], token[next[i]]);
        ++counts[k];
        where[k].push_back(static_cast<std::uint32_t>(i));
    }

    using Entry = detail::PairPriority::Entry;
    std::priority_queue<Entry, std::vector<Entry>, detail::PairPriority> heap(detail::PairPriority{&pieces});
    // key order, independent of hash iteration order
    {
        std::vector<std::pair<std::uint64_t, std::int64_t>> initial(counts.begin(), counts.end());
        std::sort(initial.begin(), initial.end());
        for (const auto& [k, c] : initial) {
            heap.push({c, static_cast<std::uint32_t>(k >> 32), static_cast<std::uint32_t>(k & 0xFFFFFFFFu)});
        }
    }

    std::vector<BpeModel::Pair> merges;
    std::vector<std::uint64_t> touched;
    auto bump = [&](std::uint32_t l, std::uint32_t r, std::int64_t delta, std::int64_t left_pos) {
        const auto k = BpeModel::key(l, r);
        auto& c = counts[k];
        c += delta;
        if (delta > 0) where[k].push_back(static_cast<std::uint32_t>(left_pos));
        touched.push_back(k);
    };

    while (alphabet_size + merges.size() < vocab_size && !heap.empty()) {
        const Entry top = heap.top();
        heap.pop();
        const auto k = BpeModel::key(top.left, top.right);
        auto cit = counts.find(k);
        if (cit == counts.end() || cit->second != top.count) continue;  // stale
        if (top.count < kMinMergeCount) break;

        const auto merged = static_cast<std::uint32_t>(pieces.size());
        {
            SymbolSeq p = pieces[top.left];
            p.insert(p.end(), pieces[top.right].begin(), pieces[top.right].end());
            pieces.push_back(std::move(p));
        }
        merges.emplace_back(top.left, top.right);

        auto positions = std::move(where[k]);
        where.erase(k);
        std::sort(positions.begin(), positions.end());
        positions.erase(std::unique(positions.begin(), positions.end()), positions.end());
        touched.clear();
        for (const auto pos : positions) {
            if (token[pos] != top.left) continue;
            const auto j = next[pos];
            if (j == kNil || token[j] != top.right) continue;
            const auto p = prev[pos];
            const auto nn = next[j];
            if (p != kNil) bump(token[p], top.left, -1, p);
            bump(top.left, top.right, -1, pos);
            if (nn != kNil) bump(top.right, token[nn], -1, j);

            token[pos] = merged;
            token[j] = kDead;
            next[pos] = nn;
            if (nn != kNil) prev[nn] = pos;

            if (p != kNil) bump(token[p], merged, +1, p);
            if (nn != kNil) bump(merged, token[nn], +1, pos);
        }
        counts.erase(k);
        std::sort(touched.begin(), touched.end());
        touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
        for (const auto t : touched) {
            auto it = counts.find(t);
            if (it == counts.end()) continue;
            if (it->second <= 0) {
                counts.erase(it);
                continue;
            }
            heap.push({it->second, static_cast<std::uint32_t>(t >> 32), static_cast<std::uint32_t>(t & 0xFFFFFFFFu)});
        }
    }
    return BpeModel(alphabet_size, vocab_size, std::move(merges));
}

// ---------------------------------------------------------------- JSON persistence
//
// {"type": "bpe", "alphabet_size": k, "vocab_size": V,
//  "merges": [[[left base symbols...], [right base symbols...]], ...]}

inline nlohmann::ordered_json tokenizer_to_json(const BpeModel& model) {
    nlohmann::ordered_json j;
    j["type"] = "bpe";
    j["alphabet_size"] = model.alphabet_size();
    j["vocab_size"] = model.requested_vocab();
    auto merges = nlohmann::ordered_json::array();
    for (const auto& [l, r] : model.merges()) {
        merges.push_back(nlohmann::ordered_json::array({model.piece(l), model.piece(r)}));
    }
    j["merges"] = std::move(merges);
    return j;
}

inline BpeModel tokenizer_from_json(const nlohmann::json& j) {
    try {
        if (j.value("type", std::string{"bpe"}) != "bpe") throw FormatError("unsupported tokenizer type");
        const auto alphabet = j.at("alphabet_size").get<std::uint32_t>();
        const auto requested = j.at("vocab_size").get<std::uint32_t>();
        std::map<SymbolSeq, std::uint32_t> ids;
        for (std::uint32_t s = 0; s < alphabet; ++s) ids[{s}] = s;
        std::vector<BpeModel::Pair> merges;
        for (const auto& m : j.at("merges")) {
            const auto left = m.at(0).get<SymbolSeq>();
            const auto right = m.at(1).get<SymbolSeq>();
            auto li = ids.find(left);
            auto ri = ids.find(right);
            if (li == ids.end() || ri == ids.end()) throw FormatError("merge references an unknown piece");
            merges.emplace_back(li->second, ri->second);
            SymbolSeq joined = left;
            joined.insert(joined.end(), right.begin(), right.end());
            if (!ids.emplace(joined, static_cast<std::uint32_t>(alphabet + merges.size() - 1)).second) {
                throw FormatError("merge produces a duplicate piece");
            }
        }
        return BpeModel(alphabet, requested, std::move(merges));
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError(std::string("malformed tokenizer model: ") + ex.what());
    }
}

inline void write_tokenizer(const std::filesystem::path& path, const BpeModel& model) {
    detail::write_all(path, tokenizer_to_json(model).dump(1) + "\n");
}

inline BpeModel read_tokenizer(const std::filesystem::path& path) {
    try {
        return tokenizer_from_json(nlohmann::json::parse(detail::read_all(path)));
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError(path.string() + ": " + ex.what());
    }
}

}  // namespace catds

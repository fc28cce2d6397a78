#pragma once

// Persistent formats: JSON-lines manifests, CATF feature files, token/symbol
// files, score tables, LID tables and reference frequency vectors.

#include <array>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "catds/common.hpp"

namespace catds {

// ---------------------------------------------------------------- manifests

struct ClipEntry {
    std::string clip_id;
    std::string feature_path;
    double duration_s = 0.0;
    std::string language;
    std::vector<std::string> source_sample_ids;

    friend bool operator==(const ClipEntry&, const ClipEntry&) = default;
};

struct ClipManifest {
    std::vector<ClipEntry> entries;

    std::size_t size() const { return entries.size(); }
    bool empty() const { return entries.empty(); }

    friend bool operator==(const ClipManifest&, const ClipManifest&) = default;
};

namespace detail {

inline std::string read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_all(const std::filesystem::path& path, std::string_view bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + path.string());
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

inline std::vector<std::string_view> lines(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t pos = text.find('\n', start);
        if (pos == std::string_view::npos) pos = text.size();
        std::string_view line = text.substr(start, pos - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        out.push_back(line);
        start = pos + 1;
    }
    return out;
}

template <typename T>
T parse_number(std::string_view s, std::string_view what) {
    T value{};
    const auto* first = s.data();
    const auto* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last) {
        throw FormatError("invalid " + std::string(what) + ": '" + std::string(s) + "'");
    }
    return value;
}

/// Shortest decimal form that round-trips to the same double.
inline std::string format_double(double v) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return {buf.data(), ptr};
}

inline std::string at_line(std::string_view source, std::size_t line_no) {
    return std::string(source) + ":" + std::to_string(line_no) + ": ";
}

}  // namespace detail

inline void validate_manifest(const ClipManifest& m) {
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        const auto& e = m.entries[i];
        if (e.clip_id.empty()) throw ValidationError("manifest entry " + std::to_string(i) + " has empty clip_id");
        if (!(e.duration_s >= 0.0) || !std::isfinite(e.duration_s)) {
            throw ValidationError("clip " + e.clip_id + " has invalid duration");
        }
        if (!seen.insert(e.clip_id).second) throw ValidationError("duplicate clip_id " + e.clip_id);
    }
}

inline nlohmann::ordered_json to_json(const ClipEntry& e) {
    nlohmann::ordered_json j;
    j["clip_id"] = e.clip_id;
    j["feature_path"] = e.feature_path;
    j["duration_s"] = e.duration_s;
    j["language"] = e.language;
    j["source_sample_ids"] = e.source_sample_ids;
    return j;
}

inline ClipManifest parse_manifest(std::string_view text, std::string_view source = "<manifest>") {
    ClipManifest m;
    std::unordered_set<std::string> seen;
    const auto all = detail::lines(text);
    for (std::size_t i = 0; i < all.size(); ++i) {
        const std::size_t line_no = i + 1;
        const auto line = all[i];
        if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
        ClipEntry e;
        try {
            const auto j = nlohmann::json::parse(line);
            if (!j.is_object()) throw FormatError("expected a JSON object");
            e.clip_id = j.at("clip_id").get<std::string>();
            e.feature_path = j.value("feature_path", std::string{});
            e.duration_s = j.value("duration_s", 0.0);
            e.language = j.value("language", std::string{});
            if (j.contains("source_sample_ids")) {
                e.source_sample_ids = j.at("source_sample_ids").get<std::vector<std::string>>();
            }
        } catch (const nlohmann::json::exception& ex) {
            throw FormatError(detail::at_line(source, line_no) + "malformed manifest line: " + ex.what());
        } catch (const FormatError& ex) {
            throw FormatError(detail::at_line(source, line_no) + ex.what());
        }
        if (e.clip_id.empty()) throw ValidationError(detail::at_line(source, line_no) + "empty clip_id");
        if (!(e.duration_s >= 0.0) || !std::isfinite(e.duration_s)) {
            throw ValidationError(detail::at_line(source, line_no) + "negative or non-finite duration_s");
        }
        if (!seen.insert(e.clip_id).second) {
            throw ValidationError(detail::at_line(source, line_no) + "duplicate clip_id " + e.clip_id);
        }
        m.entries.push_back(std::move(e));
    }
    return m;
}

inline ClipManifest read_manifest(const std::filesystem::path& path) {
    return parse_manifest(detail::read_all(path), path.string());
}

inline std::string format_manifest(const ClipManifest& m) {
    validate_manifest(m);
    std::string out;
    for (const auto& e : m.entries) {
        out += to_json(e).dump();
        out += '\n';
    }
    return out;
}

inline void write_manifest(const std::filesystem::path& path, const ClipManifest& m) {
    detail::write_all(path, format_manifest(m));
}

// ---------------------------------------------------------------- CATF feature files
//
// Layout (little-endian):
//   bytes 0..3   magic "CATF"
//   bytes 4..5   u16 format version (1)
//   bytes 6..9   u32 dim
//   bytes 10..17 u64 n_frames
//   then n_frames*dim f32, row-major

using FeatureFile = FrameMatrix;

inline constexpr std::array<char, 4> kFeatureMagic{'C', 'A', 'T', 'F'};
inline constexpr std::uint16_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 18;

namespace detail {

template <typename T>
void put_le(std::string& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(std::string_view in, std::size_t offset) {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        v |= static_cast<T>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
    }
    return v;
}

inline void put_f32(std::string& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof bits);
    put_le<std::uint32_t>(out, bits);
}

inline float get_f32(std::string_view in, std::size_t offset) {
    const auto bits = get_le<std::uint32_t>(in, offset);
    float f;
    std::memcpy(&f, &bits, sizeof f);
    return f;
}

inline void put_f64(std::string& out, double f) {
    std::uint64_t bits;
    std::memcpy(&bits, &f, sizeof bits);
    put_le<std::uint64_t>(out, bits);
}

inline double get_f64(std::string_view in, std::size_t offset) {
    const auto bits = get_le<std::uint64_t>(in, offset);
    double f;
    std::memcpy(&f, &bits, sizeof f);
    return f;
}

}  // namespace detail

inline std::string encode_feature_file(const FrameMatrix& m) {
    if (m.cols < 1) throw ValidationError("feature matrix must have dim >= 1");
    if (m.data.size() != m.rows * m.cols) throw ValidationError("feature matrix payload size mismatch");
    if (!m.all_finite()) throw ValidationError("feature matrix contains non-finite values");
    if (m.cols > UINT32_MAX) throw ValidationError("feature dim exceeds u32");
    std::string out;
    out.reserve(kFeatureHeaderBytes + m.data.size() * 4);
    out.append(kFeatureMagic.data(), kFeatureMagic.size());
    detail::put_le<std::uint16_t>(out, kFeatureVersion);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols));
    detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows));
    for (float v : m.data) detail::put_f32(out, v);
    return out;
}

inline FrameMatrix decode_feature_file(std::string_view bytes, std::string_view source = "<catf>") {
    const std::string where(source);
    if (bytes.size() < kFeatureHeaderBytes) throw FormatError(where + ": file shorter than CATF header");
    if (std::memcmp(bytes.data(), kFeatureMagic.data(), 4) != 0) throw FormatError(where + ": bad magic, not a CATF file");
    const auto version = detail::get_le<std::uint16_t>(bytes, 4);
    if (version != kFeatureVersion) throw FormatError(where + ": unsupported CATF version " + std::to_string(version));
    const auto dim = detail::get_le<std::uint32_t>(bytes, 6);
    const auto n_frames = detail::get_le<std::uint64_t>(bytes, 10);
    if (dim == 0) throw FormatError(where + ": dim must be positive");
    const std::size_t payload = bytes.size() - kFeatureHeaderBytes;
    if (n_frames > payload / 4 / dim || payload != n_frames * dim * 4) {
        throw FormatError(where + ": header declares " + std::to_string(n_frames) + " frames x " + std::to_string(dim) +
                          " dims but payload holds " + std::to_string(payload) + " bytes (truncated or oversized)");
    }
    FrameMatrix m(static_cast<std::size_t>(n_frames), dim);
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        m.data[i] = detail::get_f32(bytes, kFeatureHeaderBytes + 4 * i);
        if (!std::isfinite(m.data[i])) throw FormatError(where + ": non-finite value in payload");
    }
    return m;
}

inline void write_feature_file(const std::filesystem::path& path, const FrameMatrix& m) {
    detail::write_all(path, encode_feature_file(m));
}

inline FeatureFile read_feature_file(const std::filesystem::path& path) {
    return decode_feature_file(detail::read_all(path), path.string());
}

// ---------------------------------------------------------------- token / symbol files
//
// Text, one clip per line: "clip_id\tt1 t2 t3 ...". Used for cluster ids, collapsed
// symbols and subword tokens alike.

struct TokenRecord {
    std::string clip_id;
    std::vector<std::uint32_t> ids;

    friend bool operator==(const TokenRecord&, const TokenRecord&) = default;
};

using TokenFile = std::vector<TokenRecord>;

inline std::string format_token_file(const TokenFile& records) {
    std::string out;
    for (const auto& r : records) {
        if (r.clip_id.empty() || r.clip_id.find_first_of("\t\n") != std::string::npos) {
            throw ValidationError("clip_id '" + r.clip_id + "' cannot be written to a token file");
        }
        out += r.clip_id;
        out += '\t';
        for (std::size_t i = 0; i < r.ids.size(); ++i) {
            if (i) out += ' ';
            out += std::to_string(r.ids[i]);
        }
        out += '\n';
    }
    return out;
}

/// `bound`, when given, is the exclusive upper limit on ids (vocabulary or alphabet size).
inline TokenFile parse_token_file(std::string_view text, std::optional<std::uint32_t> bound = std::nullopt,
                                  std::string_view source = "<tokens>") {
    TokenFile out;
    std::unordered_set<std::string> seen;
    const auto all = detail::lines(text);
    for (std::size_t i = 0; i < all.size(); ++i) {
        const auto line = all[i];
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string_view::npos || tab == 0) {
            throw FormatError(detail::at_line(source, i + 1) + "expected 'clip_id<TAB>ids'");
        }
        TokenRecord r;
        r.clip_id = std::string(line.substr(0, tab));
        if (!seen.insert(r.clip_id).second) {
            throw ValidationError(detail::at_line(source, i + 1) + "duplicate clip_id " + r.clip_id);
        }
        for (auto field : detail::split(line.substr(tab + 1), ' ')) {
            if (field.empty()) continue;
            std::uint32_t id;
            try {
                id = detail::parse_number<std::uint32_t>(field, "token id");
            } catch (const FormatError& ex) {
                throw FormatError(detail::at_line(source, i + 1) + ex.what());
            }
            if (bound && id >= *bound) {
                throw ValidationError(detail::at_line(source, i + 1) + "token id " + std::to_string(id) +
                                      " out of range [0, " + std::to_string(*bound) + ")");
            }
            r.ids.push_back(id);
        }
        out.push_back(std::move(r));
    }
    return out;
}

inline TokenFile read_token_file(const std::filesystem::path& path, std::optional<std::uint32_t> bound = std::nullopt) {
    return parse_token_file(detail::read_all(path), bound, path.string());
}

inline void write_token_file(const std::filesystem::path& path, const TokenFile& records) {
    detail::write_all(path, format_token_file(records));
}

// ---------------------------------------------------------------- score tables

struct ScoreRecord {
    std::string clip_id;
    std::uint64_t token_count = 0;
    double raw_similarity = 0.0;
    double fitted_q = 0.0;
    double catds = 0.0;
    bool clamped = false;

    friend bool operator==(const ScoreRecord&, const ScoreRecord&) = default;
};

inline constexpr std::string_view kScoreHeader = "clip_id\ttoken_count\traw_similarity\tfitted_q\tcatds\tclamped";

inline std::string format_score_table(const std::vector<ScoreRecord>& records) {
    std::string out(kScoreHeader);
    out += '\n';
    for (const auto& r : records) {
        out += r.clip_id + '\t' + std::to_string(r.token_count) + '\t' + detail::format_double(r.raw_similarity) + '\t' +
               detail::format_double(r.fitted_q) + '\t' + detail::format_double(r.catds) + '\t' +
               (r.clamped ? "1" : "0") + '\n';
    }
    return out;
}

inline std::vector<ScoreRecord> parse_score_table(std::string_view text, std::string_view source = "<scores>") {
    std::vector<ScoreRecord> out;
    const auto all = detail::lines(text);
    if (all.empty() || all[0] != kScoreHeader) throw FormatError(std::string(source) + ": missing score table header");
    for (std::size_t i = 1; i < all.size(); ++i) {
        if (all[i].empty()) continue;
        const auto f = detail::split(all[i], '\t');
        if (f.size() != 6) throw FormatError(detail::at_line(source, i + 1) + "expected 6 columns");
        try {
            ScoreRecord r;
            r.clip_id = std::string(f[0]);
            r.token_count = detail::parse_number<std::uint64_t>(f[1], "token_count");
            r.raw_similarity = detail::parse_number<double>(f[2], "raw_similarity");
            r.fitted_q = detail::parse_number<double>(f[3], "fitted_q");
            r.catds = detail::parse_number<double>(f[4], "catds");
            if (f[5] != "0" && f[5] != "1") throw FormatError("invalid clamped flag");
            r.clamped = f[5] == "1";
            out.push_back(std::move(r));
        } catch (const FormatError& ex) {
            throw FormatError(detail::at_line(source, i + 1) + ex.what());
        }
    }
    return out;
}

inline std::vector<ScoreRecord> read_score_table(const std::filesystem::path& path) {
    return parse_score_table(detail::read_all(path), path.string());
}

inline void write_score_table(const std::filesystem::path& path, const std::vector<ScoreRecord>& records) {
    detail::write_all(path, format_score_table(records));
}

// ---------------------------------------------------------------- LID tables

/// External language-identification result for one clip: rank of the target
/// language among predictions (1 = most likely) and its probability.
struct LidRecord {
    std::string clip_id;
    std::uint32_t rank = 1;
    double prob = 0.0;
};

/// TSV "clip_id\trank\tprob"; an optional header line starting with "clip_id" is skipped.
inline std::vector<LidRecord> parse_lid_table(std::string_view text, std::string_view source = "<lid>") {
    std::vector<LidRecord> out;
    std::unordered_set<std::string> seen;
    const auto all = detail::lines(text);
    for (std::size_t i = 0; i < all.size(); ++i) {
        const auto line = all[i];
        if (line.empty()) continue;
        if (i == 0 && line.starts_with("clip_id")) continue;
        const auto f = detail::split(line, '\t');
        if (f.size() != 3) throw FormatError(detail::at_line(source, i + 1) + "expected clip_id, rank, prob");
        LidRecord r;
        try {
            r.clip_id = std::string(f[0]);
            r.rank = detail::parse_number<std::uint32_t>(f[1], "rank");
            r.prob = detail::parse_number<double>(f[2], "prob");
        } catch (const FormatError& ex) {
            throw FormatError(detail::at_line(source, i + 1) + ex.what());
        }
        if (r.rank < 1) throw ValidationError(detail::at_line(source, i + 1) + "rank must be >= 1");
        if (!(r.prob >= 0.0 && r.prob <= 1.0)) throw ValidationError(detail::at_line(source, i + 1) + "prob outside [0,1]");
        if (!seen.insert(r.clip_id).second) throw ValidationError(detail::at_line(source, i + 1) + "duplicate clip_id " + r.clip_id);
        out.push_back(std::move(r));
    }
    return out;
}

inline std::vector<LidRecord> read_lid_table(const std::filesystem::path& path) {
    return parse_lid_table(detail::read_all(path), path.string());
}

inline std::string format_lid_table(const std::vector<LidRecord>& records) {
    std::string out = "clip_id\trank\tprob\n";
    for (const auto& r : records) {
        out += r.clip_id + '\t' + std::to_string(r.rank) + '\t' + detail::format_double(r.prob) + '\n';
    }
    return out;
}

// ---------------------------------------------------------------- frequency vectors

/// V-dimensional token count vector.
struct FreqVector {
    std::vector<std::uint64_t> counts;

    std::size_t dim() const { return counts.size(); }
    bool is_zero() const {
        return std::all_of(counts.begin(), counts.end(), [](std::uint64_t c) { return c == 0; });
    }
    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (auto c : counts) t += c;
        return t;
    }

    friend bool operator==(const FreqVector&, const FreqVector&) = default;
};

/// Sparse text form: first line "V\t<dim>", then "token_id\tcount" for each nonzero entry.
inline std::string format_freq_vector(const FreqVector& v) {
    std::string out = "V\t" + std::to_string(v.dim()) + '\n';
    for (std::size_t t = 0; t < v.counts.size(); ++t) {
        if (v.counts[t]) out += std::to_string(t) + '\t' + std::to_string(v.counts[t]) + '\n';
    }
    return out;
}

inline FreqVector parse_freq_vector(std::string_view text, std::string_view source = "<vec>") {
    const auto all = detail::lines(text);
    if (all.empty() || !all[0].starts_with("V\t")) throw FormatError(std::string(source) + ": missing 'V<TAB>dim' header");
    FreqVector v;
    const auto dim = detail::parse_number<std::uint64_t>(all[0].substr(2), "dim");
    v.counts.assign(dim, 0);
    for (std::size_t i = 1; i < all.size(); ++i) {
        if (all[i].empty()) continue;
        const auto f = detail::split(all[i], '\t');
        if (f.size() != 2) throw FormatError(detail::at_line(source, i + 1) + "expected token_id, count");
        const auto t = detail::parse_number<std::uint64_t>(f[0], "token id");
        if (t >= dim) throw ValidationError(detail::at_line(source, i + 1) + "token id out of range");
        v.counts[t] = detail::parse_number<std::uint64_t>(f[1], "count");
    }
    return v;
}

inline FreqVector read_freq_vector(const std::filesystem::path& path) {
    return parse_freq_vector(detail::read_all(path), path.string());
}

inline void write_freq_vector(const std::filesystem::path& path, const FreqVector& v) {
    detail::write_all(path, format_freq_vector(v));
}

// ---------------------------------------------------------------- clip assembly

struct AssembledClips {
    ClipManifest clips;
    /// Indices into clips.entries of singleton clips whose one sample exceeds the cap.
    std::vector<std::size_t> oversized;
};

/// Greedy first-fit concatenation of samples into clips, in manifest order.
/// A sample joins the open clip while the running total stays <= max_duration_s.
inline AssembledClips assemble_clips(const ClipManifest& samples, double max_duration_s,
                                     std::string_view clip_prefix = "clip") {
    if (!(max_duration_s > 0.0) || !std::isfinite(max_duration_s)) {
        throw ValidationError("max_duration_s must be positive");
    }
    validate_manifest(samples);
    AssembledClips out;
    ClipEntry current;
    bool open = false;

    auto close = [&] {
        if (!open) return;
        current.clip_id = std::string(clip_prefix) + "_" + [&] {
            std::string n = std::to_string(out.clips.entries.size());
            return std::string(n.size() < 6 ? 6 - n.size() : 0, '0') + n;
        }();
        if (current.source_sample_ids.size() == 1 && current.duration_s > max_duration_s) {
            out.oversized.push_back(out.clips.entries.size());
        }
        out.clips.entries.push_back(std::move(current));
        current = ClipEntry{};
        open = false;
    };

    for (const auto& s : samples.entries) {
        if (open && current.duration_s + s.duration_s > max_duration_s) close();
        if (!open) {
            current.language = s.language;
            open = true;
        }
        current.duration_s += s.duration_s;
        current.source_sample_ids.push_back(s.clip_id);
    }
    close();
    return out;
}

}  // namespace catds

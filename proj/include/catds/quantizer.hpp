#pragma once

// k-means codebook over frame embeddings and nearest-centroid assignment.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "catds/common.hpp"
#include "catds/corpusio.hpp"

namespace catds {

struct Codebook {
    std::size_t k = 0;
    std::size_t dim = 0;
    FrameMatrix centroids;  // k x dim
    std::uint64_t train_seed = 0;
    double inertia = 0.0;

    friend bool operator==(const Codebook&, const Codebook&) = default;
};

struct KMeansOptions {
    std::size_t k = 500;
    std::uint64_t seed = 0;
    std::size_t max_iters = 100;
    double rel_tol = 1e-6;
    unsigned threads = 1;
};

struct KMeansResult {
    Codebook codebook;
    /// Objective after each assignment pass; the last entry equals codebook.inertia.
    std::vector<double> objective_log;
    bool converged = false;
};

namespace detail {

struct Assignment {
    std::vector<std::uint32_t> labels;
    std::vector<double> distances;
    double objective = 0.0;
};

// centroids: k*dim doubles, row-major
inline Assignment assign_to(const FrameMatrix& frames, const std::vector<double>& centroids, std::size_t k,
                            unsigned threads) {
    const std::size_t dim = frames.cols;
    Assignment a;
    a.labels.assign(frames.rows, 0);
    a.distances.assign(frames.rows, 0.0);
    parallel_for(frames.rows, threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const auto x = frames.row(i);
            double best = std::numeric_limits<double>::infinity();
            std::uint32_t best_j = 0;
            for (std::size_t j = 0; j < k; ++j) {
                const double d = squared_distance(x, std::span<const double>(centroids.data() + j * dim, dim));
                if (d < best) {
                    best = d;
                    best_j = static_cast<std::uint32_t>(j);
                }
            }
            a.labels[i] = best_j;
            a.distances[i] = best;
        }
    });
    // fixed summation order
    for (double d : a.distances) a.objective += d;
    return a;
}

inline std::vector<double> kmeanspp_seed(const FrameMatrix& frames, std::size_t k, Rng& rng, unsigned threads) {
    const std::size_t n = frames.rows;
    const std::size_t dim = frames.cols;
    std::vector<double> centroids(k * dim);
    auto place = [&](std::size_t j, std::size_t row) {
        const auto x = frames.row(row);
        for (std::size_t d = 0; d < dim; ++d) centroids[j * dim + d] = x[d];
    };

    std::size_t first = rng.uniform_below(n);
    place(0, first);
    std::vector<double> nearest(n);
    parallel_for(n, threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) nearest[i] = squared_distance(frames.row(i), frames.row(first));
    });

    for (std::size_t j = 1; j < k; ++j) {
        double total = 0.0;
        for (double d : nearest) total += d;
        if (!(total > 0.0)) {
            throw ValidationError("k-means: frames contain fewer than k=" + std::to_string(k) + " distinct vectors");
        }
        const double target = rng.uniform01() * total;
        std::size_t pick = n;
        double cum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (nearest[i] <= 0.0) continue;
            cum += nearest[i];
            pick = i;
            if (cum > target) break;
        }
        place(j, pick);
        const std::span<const double> c(centroids.data() + j * dim, dim);
        parallel_for(n, threads, [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) nearest[i] = std::min(nearest[i], squared_distance(frames.row(i), c));
        });
    }
    return centroids;
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding.
///
/// The objective is recorded after every assignment pass and is non-increasing.
/// Training stops after max_iters passes or once the relative decrease drops
/// below rel_tol. A cluster left empty by an update is reseeded at the frame
/// farthest from its assigned centroid. Centroid sums are accumulated in frame
/// order, so the result is bit-identical for any thread count.
inline KMeansResult train_kmeans(const FrameMatrix& frames, const KMeansOptions& opts) {
    const std::size_t k = opts.k;
    const std::size_t n = frames.rows;
    const std::size_t dim = frames.cols;
    if (k == 0) throw ValidationError("k-means: k must be positive");
    if (dim == 0) throw ValidationError("k-means: frames must have dim >= 1");
    if (n < k) {
        throw ValidationError("k-means: need at least k=" + std::to_string(k) + " frames, got " + std::to_string(n));
    }
    if (!frames.all_finite()) throw ValidationError("k-means: non-finite input frame");
    if (opts.max_iters == 0) throw ValidationError("k-means: max_iters must be positive");
    if (!(opts.rel_tol >= 0.0)) throw ValidationError("k-means: rel_tol must be nonnegative");

    Rng rng(opts.seed);
    std::vector<double> centroids = detail::kmeanspp_seed(frames, k, rng, opts.threads);

    KMeansResult result;
    detail::Assignment a;
    for (std::size_t iter = 0;; ++iter) {
        a = detail::assign_to(frames, centroids, k, opts.threads);
        const bool has_prev = !result.objective_log.empty();
        const double prev = has_prev ? result.objective_log.back() : 0.0;
        result.objective_log.push_back(a.objective);
        if (a.objective == 0.0 || (has_prev && prev - a.objective <= opts.rel_tol * prev)) {
            result.converged = true;
            break;
        }
        if (iter + 1 >= opts.max_iters) break;

        std::vector<double> sums(k * dim, 0.0);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = a.labels[i];
            const auto x = frames.row(i);
            for (std::size_t d = 0; d < dim; ++d) sums[j * dim + d] += x[d];
            ++counts[j];
        }
        std::vector<bool> taken(n, false);
        for (std::size_t j = 0; j < k; ++j) {
            if (counts[j] > 0) {
                for (std::size_t d = 0; d < dim; ++d) {
                    centroids[j * dim + d] = sums[j * dim + d] / static_cast<double>(counts[j]);
                }
                continue;
            }
            std::size_t far = n;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (!taken[i] && a.distances[i] > far_d) {
                    far_d = a.distances[i];
                    far = i;
                }
            }
            taken[far] = true;
            const auto x = frames.row(far);
            for (std::size_t d = 0; d < dim; ++d) centroids[j * dim + d] = x[d];
        }
    }

    Codebook cb;
    cb.k = k;
    cb.dim = dim;
    cb.train_seed = opts.seed;
    cb.centroids = FrameMatrix(k, dim);
    for (std::size_t i = 0; i < k * dim; ++i) cb.centroids.data[i] = static_cast<float>(centroids[i]);
    cb.inertia = result.objective_log.back();
    result.codebook = std::move(cb);
    return result;
}

/// Index of the nearest centroid for every frame; ties go to the lowest index.
inline std::vector<std::uint32_t> assign(const Codebook& codebook, const FrameMatrix& frames, unsigned threads = 1) {
    if (frames.cols != codebook.dim) {
        throw ValidationError("assign: frame dim " + std::to_string(frames.cols) + " does not match codebook dim " +
                              std::to_string(codebook.dim));
    }
    std::vector<std::uint32_t> ids(frames.rows, 0);
    parallel_for(frames.rows, threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const auto x = frames.row(i);
            double best = std::numeric_limits<double>::infinity();
            std::uint32_t best_j = 0;
            for (std::size_t j = 0; j < codebook.k; ++j) {
                const double d = squared_distance(x, codebook.centroids.row(j));
                if (d < best) {
                    best = d;
                    best_j = static_cast<std::uint32_t>(j);
                }
            }
            ids[i] = best_j;
        }
    });
    return ids;
}

/// Uniform sample of at most `cap` rows without replacement, kept in input order.
inline FrameMatrix subsample_frames(const FrameMatrix& frames, std::size_t cap, std::size_t k, std::uint64_t seed) {
    if (cap < k) throw ValidationError("subsample_frames: cap " + std::to_string(cap) + " is below k=" + std::to_string(k));
    if (frames.rows <= cap) return frames;
    std::vector<std::size_t> idx(frames.rows);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    for (std::size_t i = 0; i < cap; ++i) {
        const std::size_t j = i + rng.uniform_below(idx.size() - i);
        std::swap(idx[i], idx[j]);
    }
    idx.resize(cap);
    std::sort(idx.begin(), idx.end());
    FrameMatrix out(cap, frames.cols);
    for (std::size_t i = 0; i < cap; ++i) {
        const auto src = frames.row(idx[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

// ---------------------------------------------------------------- CATK codebook files
//
//   "CATK", u16 version, u32 k, u32 dim, u64 seed, f64 inertia, k*dim f32 row-major

inline constexpr std::uint16_t kCodebookVersion = 1;
inline constexpr std::size_t kCodebookHeaderBytes = 4 + 2 + 4 + 4 + 8 + 8;

inline std::string encode_codebook(const Codebook& cb) {
    if (cb.k == 0 || cb.dim == 0 || cb.centroids.rows != cb.k || cb.centroids.cols != cb.dim) {
        throw ValidationError("codebook shape is inconsistent");
    }
    if (!cb.centroids.all_finite()) throw ValidationError("codebook contains non-finite centroids");
    std::string out = "CATK";
    detail::put_le<std::uint16_t>(out, kCodebookVersion);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(cb.k));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(cb.dim));
    detail::put_le<std::uint64_t>(out, cb.train_seed);
    detail::put_f64(out, cb.inertia);
    for (float v : cb.centroids.data) detail::put_f32(out, v);
    return out;
}

inline Codebook decode_codebook(std::string_view bytes, std::string_view source = "<catk>") {
    const std::string where(source);
    if (bytes.size() < kCodebookHeaderBytes) throw FormatError(where + ": file shorter than CATK header");
    if (bytes.substr(0, 4) != "CATK") throw FormatError(where + ": bad magic, not a CATK codebook");
    if (detail::get_le<std::uint16_t>(bytes, 4) != kCodebookVersion) throw FormatError(where + ": unsupported CATK version");
    Codebook cb;
    cb.k = detail::get_le<std::uint32_t>(bytes, 6);
    cb.dim = detail::get_le<std::uint32_t>(bytes, 10);
    cb.train_seed = detail::get_le<std::uint64_t>(bytes, 14);
    cb.inertia = detail::get_f64(bytes, 22);
    if (cb.k == 0 || cb.dim == 0) throw FormatError(where + ": k and dim must be positive");
    if (bytes.size() - kCodebookHeaderBytes != cb.k * cb.dim * 4) throw FormatError(where + ": payload size mismatch");
    cb.centroids = FrameMatrix(cb.k, cb.dim);
    for (std::size_t i = 0; i < cb.k * cb.dim; ++i) {
        cb.centroids.data[i] = detail::get_f32(bytes, kCodebookHeaderBytes + 4 * i);
    }
    if (!cb.centroids.all_finite()) throw FormatError(where + ": non-finite centroid");
    return cb;
}

inline void write_codebook(const std::filesystem::path& path, const Codebook& cb) {
    detail::write_all(path, encode_codebook(cb));
}

inline Codebook read_codebook(const std::filesystem::path& path) {
    return decode_codebook(detail::read_all(path), path.string());
}

}  // namespace catds

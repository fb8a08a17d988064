#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nomad/errors.hpp"
#include "nomad/stats.hpp"

namespace nomad {

// Product-quantization geometry for one attention head: the head dimension d
// is split into num_sub sub-vectors of sub_dim each, and every sub-vector is
// quantized against an independent 16-centroid codebook (4-bit codes, so a
// whole lookup table of 8-bit entries fits in one 128-bit register).
struct PqConfig {
    std::size_t head_dim = 0; // d
    std::size_t sub_dim = 0;  // d_sub
    std::size_t num_sub = 0;  // S = d / d_sub

    static constexpr std::size_t kNumCentroids = 16;
    // Keeps S * 255 below 2^16 so a 16-bit accumulator cannot overflow.
    static constexpr std::size_t kMaxSub = 256;

    PqConfig() = default;

    PqConfig(std::size_t head_dim_, std::size_t sub_dim_)
            : head_dim(head_dim_), sub_dim(sub_dim_) {
        if (head_dim == 0 || sub_dim == 0) {
            throw ConfigError("PqConfig: dimensions must be positive");
        }
        if (head_dim % sub_dim != 0) {
            throw ConfigError(
                    "PqConfig: sub_dim " + std::to_string(sub_dim) +
                    " does not divide head_dim " + std::to_string(head_dim));
        }
        num_sub = head_dim / sub_dim;
        if (num_sub > kMaxSub) {
            throw ConfigError(
                    "PqConfig: " + std::to_string(num_sub) +
                    " sub-quantizers exceed the 16-bit accumulation limit of " +
                    std::to_string(kMaxSub));
        }
    }

    bool operator==(const PqConfig&) const = default;
};

// 4-bit code of one key: one centroid index in [0, 15] per sub-quantizer.
using KeyCodes = std::vector<std::uint8_t>;

// Per-head centroid tables. centroids is laid out as num_sub tables of
// 16 rows of sub_dim floats.
struct Codebook {
    PqConfig config;
    std::vector<float> centroids;
    std::uint32_t layer_id = 0;
    std::uint32_t head_id = 0;

    const float* centroid(std::size_t s, std::size_t c) const {
        return centroids.data() +
                (s * PqConfig::kNumCentroids + c) * config.sub_dim;
    }
    float* centroid(std::size_t s, std::size_t c) {
        return centroids.data() +
                (s * PqConfig::kNumCentroids + c) * config.sub_dim;
    }
};

namespace detail {

inline float squared_l2(const float* a, const float* b, std::size_t dim) {
    float acc = 0.f;
    for (std::size_t i = 0; i < dim; ++i) {
        float diff = a[i] - b[i];
        acc += diff * diff;
    }
    return acc;
}

inline bool all_finite(std::span<const float> values) {
    for (float v : values) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

// Mixes a sub-quantizer index into the caller seed so each sub-quantizer
// clusters with an independent, reproducible stream.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Seeded k-means: k-means++ initialization, then Lloyd iterations until the
// relative distortion improvement drops below rel_tol or max_iter is hit.
// Empty clusters are re-seeded with the point farthest from its assigned
// centroid (each empty cluster claims a distinct point).
inline std::vector<float> kmeans(
        std::span<const float> points,
        std::size_t n,
        std::size_t dim,
        std::size_t k,
        std::uint64_t seed,
        std::size_t max_iter = 25,
        double rel_tol = 1e-4) {
    std::mt19937_64 rng(seed);
    auto next_index = [&](std::size_t bound) {
        return static_cast<std::size_t>(rng() % bound);
    };
    // Top 53 bits -> uniform double in [0, 1). Avoids distribution classes
    // whose output is implementation-defined.
    auto next_unit = [&] { return double(rng() >> 11) * 0x1.0p-53; };
    auto point = [&](std::size_t i) { return points.data() + i * dim; };

    std::vector<float> cent(k * dim);
    std::vector<double> best_d2(n, std::numeric_limits<double>::infinity());

    // k-means++ seeding
    std::size_t first = next_index(n);
    std::copy_n(point(first), dim, cent.begin());
    for (std::size_t j = 1; j < k; ++j) {
        const float* prev = cent.data() + (j - 1) * dim;
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double d2 = squared_l2(point(i), prev, dim);
            if (d2 < best_d2[i]) {
                best_d2[i] = d2;
            }
            total += best_d2[i];
        }
        std::size_t pick;
        if (total > 0.0) {
            double target = next_unit() * total;
            double cum = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                cum += best_d2[i];
                if (cum >= target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = next_index(n);
        }
        std::copy_n(point(pick), dim, cent.begin() + j * dim);
    }

    // Lloyd iterations
    std::vector<std::size_t> assign(n, 0);
    std::vector<double> sums(k * dim);
    std::vector<std::size_t> counts(k);
    double prev_distortion = std::numeric_limits<double>::infinity();
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        double distortion = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            float best = std::numeric_limits<float>::infinity();
            std::size_t best_j = 0;
            for (std::size_t j = 0; j < k; ++j) {
                float d2 = squared_l2(point(i), cent.data() + j * dim, dim);
                if (d2 < best) {
                    best = d2;
                    best_j = j;
                }
            }
            assign[i] = best_j;
            distortion += best;
        }

        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), std::size_t{0});
        for (std::size_t i = 0; i < n; ++i) {
            const float* p = point(i);
            double* s = sums.data() + assign[i] * dim;
            for (std::size_t c = 0; c < dim; ++c) {
                s[c] += p[c];
            }
            counts[assign[i]]++;
        }
        std::vector<bool> claimed(n, false);
        for (std::size_t j = 0; j < k; ++j) {
            if (counts[j] > 0) {
                float* c = cent.data() + j * dim;
                for (std::size_t d = 0; d < dim; ++d) {
                    c[d] = static_cast<float>(sums[j * dim + d] / double(counts[j]));
                }
            } else {
                // farthest point from its own centroid takes over this cluster
                double far_d2 = -1.0;
                std::size_t far_i = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (claimed[i]) {
                        continue;
                    }
                    double d2 = squared_l2(
                            point(i), cent.data() + assign[i] * dim, dim);
                    if (d2 > far_d2) {
                        far_d2 = d2;
                        far_i = i;
                    }
                }
                claimed[far_i] = true;
                std::copy_n(point(far_i), dim, cent.begin() + j * dim);
            }
        }

        if (std::isfinite(prev_distortion) && prev_distortion > 0.0 &&
            (prev_distortion - distortion) / prev_distortion < rel_tol) {
            break;
        }
        if (distortion == 0.0) {
            break;
        }
        prev_distortion = distortion;
    }
    return cent;
}

} // namespace detail

// Learns per-head codebooks by clustering the key sub-vectors of each
// sub-quantizer independently. Deterministic for a given (keys, config, seed).
inline Codebook learn_codebook(
        std::span<const float> keys,
        std::size_t num_keys,
        const PqConfig& config,
        std::uint64_t seed) {
    if (keys.size() != num_keys * config.head_dim) {
        throw InvalidInputError("learn_codebook: key matrix size mismatch");
    }
    if (num_keys < PqConfig::kNumCentroids) {
        throw InsufficientDataError(
                "learn_codebook: need at least 16 keys, got " +
                std::to_string(num_keys));
    }
    if (!detail::all_finite(keys)) {
        throw InvalidInputError("learn_codebook: non-finite key value");
    }

    Codebook cb;
    cb.config = config;
    cb.centroids.resize(config.num_sub * PqConfig::kNumCentroids * config.sub_dim);
    std::vector<float> slice(num_keys * config.sub_dim);
    for (std::size_t s = 0; s < config.num_sub; ++s) {
        for (std::size_t i = 0; i < num_keys; ++i) {
            const float* src = keys.data() + i * config.head_dim + s * config.sub_dim;
            std::copy_n(src, config.sub_dim, slice.begin() + i * config.sub_dim);
        }
        auto cent = detail::kmeans(
                slice, num_keys, config.sub_dim, PqConfig::kNumCentroids,
                detail::mix_seed(seed, s));
        std::copy(cent.begin(), cent.end(), cb.centroid(s, 0));
    }
    return cb;
}

// Maps a key to the index of the nearest centroid of every sub-quantizer
// (L2 distance, ties broken towards the lowest centroid index).
inline KeyCodes encode_key(std::span<const float> key, const Codebook& cb) {
    const PqConfig& cfg = cb.config;
    if (key.size() != cfg.head_dim) {
        throw InvalidInputError(
                "encode_key: key has dimension " + std::to_string(key.size()) +
                ", codebook expects " + std::to_string(cfg.head_dim));
    }
    if (!detail::all_finite(key)) {
        throw InvalidInputError("encode_key: non-finite key value");
    }
    KeyCodes codes(cfg.num_sub);
    for (std::size_t s = 0; s < cfg.num_sub; ++s) {
        const float* sub = key.data() + s * cfg.sub_dim;
        float best = std::numeric_limits<float>::infinity();
        std::size_t best_c = 0;
        for (std::size_t c = 0; c < PqConfig::kNumCentroids; ++c) {
            float d2 = detail::squared_l2(sub, cb.centroid(s, c), cfg.sub_dim);
            if (d2 < best) {
                best = d2;
                best_c = c;
            }
        }
        codes[s] = static_cast<std::uint8_t>(best_c);
    }
    stats::distance_computations += cfg.num_sub * PqConfig::kNumCentroids;
    return codes;
}

// Concatenates the centroids selected by codes back into a d-dimensional
// vector (the reconstruction the score kernel effectively sees).
inline std::vector<float> decode_key(const KeyCodes& codes, const Codebook& cb) {
    const PqConfig& cfg = cb.config;
    if (codes.size() != cfg.num_sub) {
        throw InvalidInputError("decode_key: code length mismatch");
    }
    std::vector<float> key(cfg.head_dim);
    for (std::size_t s = 0; s < cfg.num_sub; ++s) {
        if (codes[s] >= PqConfig::kNumCentroids) {
            throw InvalidInputError("decode_key: code out of range");
        }
        std::copy_n(cb.centroid(s, codes[s]), cfg.sub_dim,
                    key.begin() + s * cfg.sub_dim);
    }
    return key;
}

// Mean total squared reconstruction error of keys under the codebook.
inline double quantization_distortion(
        std::span<const float> keys, std::size_t num_keys, const Codebook& cb) {
    const PqConfig& cfg = cb.config;
    if (keys.size() != num_keys * cfg.head_dim) {
        throw InvalidInputError("quantization_distortion: key matrix size mismatch");
    }
    if (num_keys == 0) {
        return 0.0;
    }
    if (!detail::all_finite(keys)) {
        throw InvalidInputError("quantization_distortion: non-finite key value");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < num_keys; ++i) {
        std::span<const float> key = keys.subspan(i * cfg.head_dim, cfg.head_dim);
        KeyCodes codes = encode_key(key, cb);
        for (std::size_t s = 0; s < cfg.num_sub; ++s) {
            total += detail::squared_l2(
                    key.data() + s * cfg.sub_dim, cb.centroid(s, codes[s]),
                    cfg.sub_dim);
        }
    }
    return total / double(num_keys);
}

} // namespace nomad

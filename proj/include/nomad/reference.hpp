#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "nomad/errors.hpp"
#include "nomad/kernel.hpp"
#include "nomad/quantizer.hpp"
#include "nomad/stats.hpp"

namespace nomad {

// Plain float key cache of the exact attention baseline: one row per key,
// appended as decoding progresses.
class FloatKeyCache {
  public:
    explicit FloatKeyCache(std::size_t dim) : dim_(dim) {
        if (dim == 0) {
            throw ConfigError("FloatKeyCache: dim must be positive");
        }
    }

    void append(std::span<const float> key) {
        if (key.size() != dim_) {
            throw InvalidInputError("FloatKeyCache::append: dimension mismatch");
        }
        if (!detail::all_finite(key)) {
            throw InvalidInputError("FloatKeyCache::append: non-finite key value");
        }
        rows_.insert(rows_.end(), key.begin(), key.end());
    }

    const float* row(std::size_t i) const { return rows_.data() + i * dim_; }
    std::size_t size() const { return rows_.size() / dim_; }
    std::size_t dim() const { return dim_; }
    std::size_t byte_size() const { return rows_.size() * sizeof(float); }

  private:
    std::size_t dim_;
    std::vector<float> rows_;
};

// Exact multiply-add dot products q . k_i / sqrt(d) for every cached key.
inline std::vector<float> exact_logits(
        std::span<const float> query, const FloatKeyCache& cache) {
    if (query.size() != cache.dim()) {
        throw InvalidInputError("exact_logits: query dimension mismatch");
    }
    const std::size_t t = cache.size();
    const std::size_t d = cache.dim();
    const float inv_sqrt_d = 1.0f / std::sqrt(static_cast<float>(d));
    std::vector<float> logits(t);
    for (std::size_t i = 0; i < t; ++i) {
        const float* k = cache.row(i);
        float acc = 0.f;
        for (std::size_t j = 0; j < d; ++j) {
            acc += query[j] * k[j];
        }
        logits[i] = acc * inv_sqrt_d;
    }
    return logits;
}

inline ScoreVector exact_scores_cached(
        std::span<const float> query, const FloatKeyCache& cache) {
    return softmax(exact_logits(query, cache));
}

// Reference attention step: append the key, then softmax(q K^T / sqrt(d)).
inline ScoreVector exact_scores(
        std::span<const float> query,
        std::span<const float> key,
        FloatKeyCache& cache) {
    cache.append(key);
    return exact_scores_cached(query, cache);
}

// Convex combination of value rows with score weights.
inline std::vector<float> attention_output(
        std::span<const float> scores,
        std::span<const float> values,
        std::size_t value_dim) {
    if (value_dim == 0 || values.size() != scores.size() * value_dim) {
        throw InvalidInputError(
                "attention_output: scores length and value rows differ");
    }
    std::vector<double> acc(value_dim, 0.0);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const float* v = values.data() + i * value_dim;
        for (std::size_t j = 0; j < value_dim; ++j) {
            acc[j] += double(scores[i]) * double(v[j]);
        }
    }
    std::vector<float> out(value_dim);
    for (std::size_t j = 0; j < value_dim; ++j) {
        out[j] = static_cast<float>(acc[j]);
    }
    return out;
}

/*
 * 8-bit product-quantization baseline: 256 centroids per 2-dimensional
 * sub-quantizer, full-precision lookup tables in ordinary memory and
 * row-major code storage. It trades the register residency of the 4-bit
 * scheme for finer codebooks, which makes key encoding 16x more expensive.
 */

struct Pq8Codebook {
    static constexpr std::size_t kCentroids = 256;
    static constexpr std::size_t kSubDim = 2;

    std::size_t dim = 0;     // d, must be even
    std::size_t num_sub = 0; // d / 2
    std::vector<float> centroids; // num_sub tables of 256 x 2 floats

    const float* centroid(std::size_t s, std::size_t c) const {
        return centroids.data() + (s * kCentroids + c) * kSubDim;
    }
};

inline Pq8Codebook learn_pq8_codebook(
        std::span<const float> keys,
        std::size_t num_keys,
        std::size_t dim,
        std::uint64_t seed) {
    if (dim == 0 || dim % Pq8Codebook::kSubDim != 0) {
        throw InvalidInputError(
                "learn_pq8_codebook: dimension must be even, got " +
                std::to_string(dim));
    }
    if (keys.size() != num_keys * dim) {
        throw InvalidInputError("learn_pq8_codebook: key matrix size mismatch");
    }
    if (num_keys < Pq8Codebook::kCentroids) {
        throw InsufficientDataError(
                "learn_pq8_codebook: need at least 256 keys, got " +
                std::to_string(num_keys));
    }
    if (!detail::all_finite(keys)) {
        throw InvalidInputError("learn_pq8_codebook: non-finite key value");
    }
    Pq8Codebook cb;
    cb.dim = dim;
    cb.num_sub = dim / Pq8Codebook::kSubDim;
    cb.centroids.resize(cb.num_sub * Pq8Codebook::kCentroids * Pq8Codebook::kSubDim);
    std::vector<float> slice(num_keys * Pq8Codebook::kSubDim);
    for (std::size_t s = 0; s < cb.num_sub; ++s) {
        for (std::size_t i = 0; i < num_keys; ++i) {
            const float* src = keys.data() + i * dim + s * Pq8Codebook::kSubDim;
            std::copy_n(src, Pq8Codebook::kSubDim,
                        slice.begin() + i * Pq8Codebook::kSubDim);
        }
        auto cent = detail::kmeans(
                slice, num_keys, Pq8Codebook::kSubDim, Pq8Codebook::kCentroids,
                detail::mix_seed(seed, 0x8000 + s));
        std::copy(cent.begin(), cent.end(),
                  cb.centroids.begin() +
                          s * Pq8Codebook::kCentroids * Pq8Codebook::kSubDim);
    }
    return cb;
}

// Row-major code store: the codes of one key are contiguous, the layout a
// straightforward PQ implementation would use.
class Pq8KeyCache {
  public:
    explicit Pq8KeyCache(std::size_t num_sub) : num_sub_(num_sub) {
        if (num_sub == 0) {
            throw ConfigError("Pq8KeyCache: num_sub must be positive");
        }
    }

    void append(std::span<const std::uint8_t> codes) {
        if (codes.size() != num_sub_) {
            throw InvalidInputError("Pq8KeyCache::append: code length mismatch");
        }
        codes_.insert(codes_.end(), codes.begin(), codes.end());
    }

    const std::uint8_t* key_codes(std::size_t i) const {
        return codes_.data() + i * num_sub_;
    }
    std::size_t size() const { return codes_.size() / num_sub_; }
    std::size_t num_sub() const { return num_sub_; }

  private:
    std::size_t num_sub_;
    std::vector<std::uint8_t> codes_;
};

inline std::vector<std::uint8_t> pq8_encode_key(
        std::span<const float> key, const Pq8Codebook& cb) {
    if (key.size() != cb.dim) {
        throw InvalidInputError("pq8_encode_key: key dimension mismatch");
    }
    if (!detail::all_finite(key)) {
        throw InvalidInputError("pq8_encode_key: non-finite key value");
    }
    std::vector<std::uint8_t> codes(cb.num_sub);
    for (std::size_t s = 0; s < cb.num_sub; ++s) {
        const float* sub = key.data() + s * Pq8Codebook::kSubDim;
        float best = std::numeric_limits<float>::infinity();
        std::size_t best_c = 0;
        for (std::size_t c = 0; c < Pq8Codebook::kCentroids; ++c) {
            float d2 = detail::squared_l2(sub, cb.centroid(s, c),
                                          Pq8Codebook::kSubDim);
            if (d2 < best) {
                best = d2;
                best_c = c;
            }
        }
        codes[s] = static_cast<std::uint8_t>(best_c);
    }
    stats::distance_computations += cb.num_sub * Pq8Codebook::kCentroids;
    return codes;
}

// Full-precision dot products from the query sub-vectors to all 256
// centroids of each sub-quantizer, kept in plain memory.
inline std::vector<float> build_pq8_lut(
        std::span<const float> query, const Pq8Codebook& cb) {
    if (query.size() != cb.dim) {
        throw InvalidInputError("build_pq8_lut: query dimension mismatch");
    }
    if (!detail::all_finite(query)) {
        throw InvalidInputError("build_pq8_lut: non-finite query value");
    }
    std::vector<float> lut(cb.num_sub * Pq8Codebook::kCentroids);
    for (std::size_t s = 0; s < cb.num_sub; ++s) {
        const float* q = query.data() + s * Pq8Codebook::kSubDim;
        for (std::size_t c = 0; c < Pq8Codebook::kCentroids; ++c) {
            const float* cent = cb.centroid(s, c);
            lut[s * Pq8Codebook::kCentroids + c] =
                    q[0] * cent[0] + q[1] * cent[1];
        }
    }
    return lut;
}

// Scalar gather-accumulate over the memory-resident tables. Four partial
// sums keep the float additions off one serial dependency chain.
inline std::vector<float> pq8_logits(
        std::span<const float> query,
        const Pq8KeyCache& cache,
        const Pq8Codebook& cb) {
    if (cache.num_sub() != cb.num_sub) {
        throw InvalidInputError(
                "pq8_logits: cache and codebook sub-quantizer counts differ");
    }
    const std::vector<float> lut = build_pq8_lut(query, cb);
    const float inv_sqrt_d = 1.0f / std::sqrt(static_cast<float>(cb.dim));
    const std::size_t t = cache.size();
    const std::size_t ns = cb.num_sub;
    std::vector<float> logits(t);
    for (std::size_t i = 0; i < t; ++i) {
        const std::uint8_t* codes = cache.key_codes(i);
        float p0 = 0.f, p1 = 0.f, p2 = 0.f, p3 = 0.f;
        std::size_t s = 0;
        for (; s + 4 <= ns; s += 4) {
            p0 += lut[(s + 0) * Pq8Codebook::kCentroids + codes[s + 0]];
            p1 += lut[(s + 1) * Pq8Codebook::kCentroids + codes[s + 1]];
            p2 += lut[(s + 2) * Pq8Codebook::kCentroids + codes[s + 2]];
            p3 += lut[(s + 3) * Pq8Codebook::kCentroids + codes[s + 3]];
        }
        for (; s < ns; ++s) {
            p0 += lut[s * Pq8Codebook::kCentroids + codes[s]];
        }
        logits[i] = ((p0 + p1) + (p2 + p3)) * inv_sqrt_d;
    }
    return logits;
}

inline ScoreVector pq8_scores_cached(
        std::span<const float> query,
        const Pq8KeyCache& cache,
        const Pq8Codebook& cb) {
    return softmax(pq8_logits(query, cache, cb));
}

inline ScoreVector pq8_scores(
        std::span<const float> query,
        std::span<const float> key,
        Pq8KeyCache& cache,
        const Pq8Codebook& cb) {
    cache.append(pq8_encode_key(key, cb));
    return pq8_scores_cached(query, cache, cb);
}

} // namespace nomad

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "nomad/errors.hpp"
#include "nomad/quantizer.hpp"

namespace nomad {

// A dot-product range narrower than this counts as degenerate: the step is
// forced to zero and dequantization returns the exact per-sub minima.
inline constexpr float kDegenerateRange = 1e-12f;

// Per-query lookup tables: for each sub-quantizer, the 16 dot products from
// the query sub-vector to the centroids, quantized to 8 bits. All tables
// share one quantization step (taken from the widest per-sub range) so that
// a single 16-bit accumulator of table entries can be dequantized by one
// affine map: sum * shared_step + min_sum.
struct QuantizedLut {
    std::size_t num_sub = 0;
    std::vector<std::uint8_t> tables; // num_sub rows of 16 entries
    std::vector<float> per_sub_min;   // dp_min of each sub-quantizer
    float shared_step = 0.f;
    float min_sum = 0.f;

    const std::uint8_t* table(std::size_t s) const {
        return tables.data() + s * PqConfig::kNumCentroids;
    }
};

// Computes exact query-to-centroid dot products in full precision, then
// quantizes each to floor((dp - dp_min_s) / shared_step), clamped to [0, 255]
// (the global maximum lands exactly on 256 and is clamped down one step).
inline QuantizedLut build_lut(std::span<const float> query, const Codebook& cb) {
    const PqConfig& cfg = cb.config;
    if (query.size() != cfg.head_dim) {
        throw InvalidInputError(
                "build_lut: query has dimension " + std::to_string(query.size()) +
                ", codebook expects " + std::to_string(cfg.head_dim));
    }
    if (!detail::all_finite(query)) {
        throw InvalidInputError("build_lut: non-finite query value");
    }

    constexpr std::size_t kC = PqConfig::kNumCentroids;
    QuantizedLut lut;
    lut.num_sub = cfg.num_sub;
    lut.tables.assign(cfg.num_sub * kC, 0);
    lut.per_sub_min.resize(cfg.num_sub);

    std::vector<float> dp(cfg.num_sub * kC);
    float max_range = 0.f;
    for (std::size_t s = 0; s < cfg.num_sub; ++s) {
        const float* q = query.data() + s * cfg.sub_dim;
        float mn = std::numeric_limits<float>::infinity();
        float mx = -std::numeric_limits<float>::infinity();
        for (std::size_t c = 0; c < kC; ++c) {
            const float* cent = cb.centroid(s, c);
            float acc = 0.f;
            for (std::size_t j = 0; j < cfg.sub_dim; ++j) {
                acc += q[j] * cent[j];
            }
            dp[s * kC + c] = acc;
            mn = std::min(mn, acc);
            mx = std::max(mx, acc);
        }
        lut.per_sub_min[s] = mn;
        max_range = std::max(max_range, mx - mn);
    }

    if (max_range >= kDegenerateRange) {
        lut.shared_step = max_range / 256.f;
        for (std::size_t s = 0; s < cfg.num_sub; ++s) {
            for (std::size_t c = 0; c < kC; ++c) {
                float q = std::floor(
                        (dp[s * kC + c] - lut.per_sub_min[s]) / lut.shared_step);
                lut.tables[s * kC + c] =
                        static_cast<std::uint8_t>(std::clamp(q, 0.f, 255.f));
            }
        }
    }

    double min_sum = 0.0;
    for (float m : lut.per_sub_min) {
        min_sum += m;
    }
    lut.min_sum = static_cast<float>(min_sum);
    return lut;
}

// Maps an accumulated sum of table entries back to a dot-product estimate.
// Monotone non-decreasing in the accumulator.
inline float dequantize_sum(std::uint16_t accumulated, const QuantizedLut& lut) {
    return static_cast<float>(
            double(accumulated) * double(lut.shared_step) + double(lut.min_sum));
}

} // namespace nomad

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <span>
#include <vector>

#include "nomad/errors.hpp"
#include "nomad/key_code_cache.hpp"
#include "nomad/lut.hpp"
#include "nomad/quantizer.hpp"

#if defined(__x86_64__) || defined(_M_X64) || defined(__i386__)
#define NOMAD_KERNEL_X86 1
#include <immintrin.h>
#elif defined(__aarch64__) && defined(__ARM_NEON)
#define NOMAD_KERNEL_NEON 1
#include <arm_neon.h>
#endif

namespace nomad {

// 16-bit accumulators for one block of 32 keys. With at most 256
// sub-quantizers and 8-bit table entries the sum stays below 2^16.
using AccumulatorBatch = std::array<std::uint16_t, kBlockKeys>;

// Attention scores over context positions (softmax output).
using ScoreVector = std::vector<float>;

enum class ScorePath {
    scalar,     // portable nibble-unpack and table-index loop
    shuffle128, // 128-bit register-resident tables, byte-shuffle lookups
};

inline const char* to_string(ScorePath path) {
    return path == ScorePath::shuffle128 ? "simd128" : "scalar";
}

// Whether the processor can run the 128-bit byte-shuffle path.
inline bool shuffle128_supported() {
#if defined(NOMAD_KERNEL_X86) && (defined(__GNUC__) || defined(__clang__))
    return __builtin_cpu_supports("ssse3");
#elif defined(NOMAD_KERNEL_NEON)
    return true;
#else
    return false;
#endif
}

// Picks the fastest available path. The override argument and the
// NOMAD_FORCE_SCALAR environment variable both force the scalar path.
inline ScorePath detect_fast_path(bool force_scalar = false) {
    if (force_scalar) {
        return ScorePath::scalar;
    }
    if (const char* env = std::getenv("NOMAD_FORCE_SCALAR");
        env != nullptr && env[0] != '\0' && !(env[0] == '0' && env[1] == '\0')) {
        return ScorePath::scalar;
    }
    return shuffle128_supported() ? ScorePath::shuffle128 : ScorePath::scalar;
}

namespace detail {

inline AccumulatorBatch accumulate_block_scalar(
        const BlockView& block, const QuantizedLut& lut) {
    AccumulatorBatch acc{};
    for (std::size_t s = 0; s < block.num_sub; ++s) {
        const std::uint8_t* row = block.data + s * kRowBytes;
        const std::uint8_t* tab = lut.table(s);
        for (std::size_t j = 0; j < kRowBytes; ++j) {
            acc[j] += tab[row[j] >> 4];
            acc[kRowBytes + j] += tab[row[j] & 0x0F];
        }
    }
    return acc;
}

#if defined(NOMAD_KERNEL_X86) && (defined(__GNUC__) || defined(__clang__))
// One LUT row is held in a 128-bit register; the row of packed codes is
// split into its high nibbles (keys 0..15) and low nibbles (keys 16..31),
// each fed to a byte shuffle that fetches 16 table entries at once. Entries
// are widened to 16 bits and accumulated across sub-quantizers.
__attribute__((target("ssse3"))) inline AccumulatorBatch
accumulate_block_shuffle(const BlockView& block, const QuantizedLut& lut) {
    const __m128i low_mask = _mm_set1_epi8(0x0F);
    const __m128i zero = _mm_setzero_si128();
    __m128i acc0 = zero; // keys 0..7
    __m128i acc1 = zero; // keys 8..15
    __m128i acc2 = zero; // keys 16..23
    __m128i acc3 = zero; // keys 24..31
    for (std::size_t s = 0; s < block.num_sub; ++s) {
        const __m128i table = _mm_loadu_si128(
                reinterpret_cast<const __m128i*>(lut.table(s)));
        const __m128i row = _mm_loadu_si128(
                reinterpret_cast<const __m128i*>(block.data + s * kRowBytes));
        const __m128i hi_codes = _mm_and_si128(_mm_srli_epi16(row, 4), low_mask);
        const __m128i lo_codes = _mm_and_si128(row, low_mask);
        const __m128i hi_vals = _mm_shuffle_epi8(table, hi_codes);
        const __m128i lo_vals = _mm_shuffle_epi8(table, lo_codes);
        acc0 = _mm_add_epi16(acc0, _mm_unpacklo_epi8(hi_vals, zero));
        acc1 = _mm_add_epi16(acc1, _mm_unpackhi_epi8(hi_vals, zero));
        acc2 = _mm_add_epi16(acc2, _mm_unpacklo_epi8(lo_vals, zero));
        acc3 = _mm_add_epi16(acc3, _mm_unpackhi_epi8(lo_vals, zero));
    }
    AccumulatorBatch acc;
    _mm_storeu_si128(reinterpret_cast<__m128i*>(acc.data() + 0), acc0);
    _mm_storeu_si128(reinterpret_cast<__m128i*>(acc.data() + 8), acc1);
    _mm_storeu_si128(reinterpret_cast<__m128i*>(acc.data() + 16), acc2);
    _mm_storeu_si128(reinterpret_cast<__m128i*>(acc.data() + 24), acc3);
    return acc;
}
#elif defined(NOMAD_KERNEL_NEON)
inline AccumulatorBatch accumulate_block_shuffle(
        const BlockView& block, const QuantizedLut& lut) {
    uint16x8_t acc0 = vdupq_n_u16(0);
    uint16x8_t acc1 = vdupq_n_u16(0);
    uint16x8_t acc2 = vdupq_n_u16(0);
    uint16x8_t acc3 = vdupq_n_u16(0);
    for (std::size_t s = 0; s < block.num_sub; ++s) {
        const uint8x16_t table = vld1q_u8(lut.table(s));
        const uint8x16_t row = vld1q_u8(block.data + s * kRowBytes);
        const uint8x16_t hi_codes = vshrq_n_u8(row, 4);
        const uint8x16_t lo_codes = vandq_u8(row, vdupq_n_u8(0x0F));
        const uint8x16_t hi_vals = vqtbl1q_u8(table, hi_codes);
        const uint8x16_t lo_vals = vqtbl1q_u8(table, lo_codes);
        acc0 = vaddw_u8(acc0, vget_low_u8(hi_vals));
        acc1 = vaddw_u8(acc1, vget_high_u8(hi_vals));
        acc2 = vaddw_u8(acc2, vget_low_u8(lo_vals));
        acc3 = vaddw_u8(acc3, vget_high_u8(lo_vals));
    }
    AccumulatorBatch acc;
    vst1q_u16(acc.data() + 0, acc0);
    vst1q_u16(acc.data() + 8, acc1);
    vst1q_u16(acc.data() + 16, acc2);
    vst1q_u16(acc.data() + 24, acc3);
    return acc;
}
#endif

} // namespace detail

// Sums the table entries selected by one block of key codes, one 16-bit
// accumulator per key. Scalar and shuffle paths are bit-identical.
inline AccumulatorBatch accumulate_block(
        const BlockView& block, const QuantizedLut& lut, ScorePath path) {
    if (block.num_sub != lut.num_sub) {
        throw InvalidInputError(
                "accumulate_block: block and LUT sub-quantizer counts differ");
    }
    if (path == ScorePath::shuffle128) {
#if (defined(NOMAD_KERNEL_X86) && (defined(__GNUC__) || defined(__clang__))) || \
        defined(NOMAD_KERNEL_NEON)
        if (shuffle128_supported()) {
            return detail::accumulate_block_shuffle(block, lut);
        }
#endif
        throw ConfigError(
                "accumulate_block: 128-bit shuffle path not supported on this "
                "processor");
    }
    return detail::accumulate_block_scalar(block, lut);
}

// Max-subtracted softmax. A constant input yields the uniform distribution.
inline ScoreVector softmax(std::span<const float> logits) {
    ScoreVector scores(logits.size());
    if (logits.empty()) {
        return scores;
    }
    float max_logit = logits[0];
    for (float v : logits) {
        max_logit = std::max(max_logit, v);
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        float e = std::exp(logits[i] - max_logit);
        scores[i] = e;
        sum += e;
    }
    const float inv = static_cast<float>(1.0 / sum);
    for (float& s : scores) {
        s *= inv;
    }
    return scores;
}

// Dot-product estimates for every cached key, scaled by 1/sqrt(d). The tail
// block is accumulated whole and masked, so padding codes never leak into
// the result.
inline std::vector<float> nomad_logits(
        std::span<const float> query,
        const KeyCodeCache& cache,
        const Codebook& cb,
        ScorePath path = detect_fast_path()) {
    if (cache.num_sub() != cb.config.num_sub) {
        throw InvalidInputError(
                "nomad_logits: cache and codebook sub-quantizer counts differ");
    }
    const QuantizedLut lut = build_lut(query, cb);
    const float inv_sqrt_d =
            1.0f / std::sqrt(static_cast<float>(cb.config.head_dim));
    const std::size_t t = cache.num_keys();
    std::vector<float> logits(t);
    for (std::size_t b = 0; b < cache.num_blocks(); ++b) {
        const AccumulatorBatch acc = accumulate_block(cache.block(b), lut, path);
        const std::size_t base = b * kBlockKeys;
        const std::size_t limit = std::min(kBlockKeys, t - base);
        for (std::size_t l = 0; l < limit; ++l) {
            logits[base + l] = dequantize_sum(acc[l], lut) * inv_sqrt_d;
        }
    }
    return logits;
}

// Scores the current cache contents without appending.
inline ScoreVector nomad_scores_cached(
        std::span<const float> query,
        const KeyCodeCache& cache,
        const Codebook& cb,
        ScorePath path = detect_fast_path()) {
    return softmax(nomad_logits(query, cache, cb, path));
}

// One decode step: encodes the incoming key, appends its codes to the cache
// and returns softmax scores over all t cached positions.
inline ScoreVector nomad_scores(
        std::span<const float> query,
        std::span<const float> key,
        KeyCodeCache& cache,
        const Codebook& cb,
        ScorePath path = detect_fast_path()) {
    cache.append(encode_key(key, cb));
    return nomad_scores_cached(query, cache, cb, path);
}

} // namespace nomad

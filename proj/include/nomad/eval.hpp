#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "nomad/errors.hpp"
#include "nomad/kernel.hpp"
#include "nomad/quantizer.hpp"
#include "nomad/reference.hpp"

namespace nomad {

// Fidelity of lookup-based scores against the exact baseline, measured on a
// test split never seen during codebook learning.
struct QualityReport {
    std::size_t head_dim = 0;
    std::size_t sub_dim = 0;
    std::size_t num_learn_keys = 0;
    std::size_t num_test_keys = 0;
    std::size_t num_queries = 0;
    double mean_abs_logit_err = 0.0;
    double max_abs_logit_err = 0.0;
    double mean_score_l1 = 0.0;
    double top1_agreement = 0.0;
    double top8_agreement = 0.0;
    // Key-cache size ratio vs 32-bit floats: 8 * d_sub.
    double compression_factor = 0.0;
};

namespace detail {

// Indices of the k largest values, ordered by value descending and index
// ascending on ties.
inline std::vector<std::size_t> top_indices(
        std::span<const float> values, std::size_t k) {
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    k = std::min(k, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (values[a] != values[b]) {
                              return values[a] > values[b];
                          }
                          return a < b;
                      });
    idx.resize(k);
    return idx;
}

} // namespace detail

// Learns a codebook on the first floor(learn_frac * n) keys, fills one
// lookup cache and one float cache with the remaining keys and compares
// lookup-based scores against exact scores for every query.
inline QualityReport run_quality(
        std::span<const float> keys,
        std::size_t num_keys,
        std::span<const float> queries,
        std::size_t num_queries,
        const PqConfig& config,
        double learn_frac,
        std::uint64_t seed,
        ScorePath path = detect_fast_path()) {
    const std::size_t d = config.head_dim;
    if (keys.size() != num_keys * d) {
        throw InvalidInputError("run_quality: key matrix size mismatch");
    }
    if (queries.size() != num_queries * d || num_queries == 0) {
        throw InvalidInputError("run_quality: query matrix size mismatch");
    }
    const std::size_t num_learn =
            static_cast<std::size_t>(learn_frac * double(num_keys));
    if (num_learn == 0 || num_learn >= num_keys) {
        throw InvalidInputError("run_quality: learn/test split is empty");
    }

    const Codebook cb =
            learn_codebook(keys.first(num_learn * d), num_learn, config, seed);

    const std::size_t num_test = num_keys - num_learn;
    KeyCodeCache code_cache(config.num_sub);
    FloatKeyCache float_cache(d);
    for (std::size_t i = num_learn; i < num_keys; ++i) {
        std::span<const float> key = keys.subspan(i * d, d);
        code_cache.append(encode_key(key, cb));
        float_cache.append(key);
    }

    QualityReport report;
    report.head_dim = d;
    report.sub_dim = config.sub_dim;
    report.num_learn_keys = num_learn;
    report.num_test_keys = num_test;
    report.num_queries = num_queries;
    report.compression_factor = 8.0 * double(config.sub_dim);

    double sum_abs_err = 0.0;
    double sum_l1 = 0.0;
    double sum_top8 = 0.0;
    std::size_t top1_hits = 0;
    for (std::size_t qi = 0; qi < num_queries; ++qi) {
        std::span<const float> query = queries.subspan(qi * d, d);
        const std::vector<float> approx = nomad_logits(query, code_cache, cb, path);
        const std::vector<float> exact = exact_logits(query, float_cache);
        for (std::size_t i = 0; i < num_test; ++i) {
            const double err = std::abs(double(approx[i]) - double(exact[i]));
            sum_abs_err += err;
            report.max_abs_logit_err = std::max(report.max_abs_logit_err, err);
        }
        const ScoreVector approx_scores = softmax(approx);
        const ScoreVector exact_scores = softmax(exact);
        double l1 = 0.0;
        for (std::size_t i = 0; i < num_test; ++i) {
            l1 += std::abs(double(approx_scores[i]) - double(exact_scores[i]));
        }
        sum_l1 += l1;

        const auto top1_a = detail::top_indices(approx, 1);
        const auto top1_e = detail::top_indices(exact, 1);
        top1_hits += (top1_a == top1_e) ? 1 : 0;
        const std::size_t k8 = std::min<std::size_t>(8, num_test);
        auto top8_a = detail::top_indices(approx, k8);
        auto top8_e = detail::top_indices(exact, k8);
        std::sort(top8_a.begin(), top8_a.end());
        std::sort(top8_e.begin(), top8_e.end());
        std::vector<std::size_t> common;
        std::set_intersection(top8_a.begin(), top8_a.end(), top8_e.begin(),
                              top8_e.end(), std::back_inserter(common));
        sum_top8 += double(common.size()) / double(k8);
    }

    report.mean_abs_logit_err = sum_abs_err / double(num_queries * num_test);
    report.mean_score_l1 = sum_l1 / double(num_queries);
    report.top1_agreement = double(top1_hits) / double(num_queries);
    report.top8_agreement = sum_top8 / double(num_queries);
    return report;
}

} // namespace nomad

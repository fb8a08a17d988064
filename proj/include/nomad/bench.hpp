#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "nomad/errors.hpp"
#include "nomad/kernel.hpp"
#include "nomad/quantizer.hpp"
#include "nomad/reference.hpp"
#include "nomad/synthetic.hpp"

namespace nomad {

enum class Backend { exact, pq8, nomad };

inline const char* to_string(Backend b) {
    switch (b) {
        case Backend::exact:
            return "exact";
        case Backend::pq8:
            return "pq8";
        default:
            return "nomad";
    }
}

inline std::optional<Backend> parse_backend(std::string_view name) {
    if (name == "exact") {
        return Backend::exact;
    }
    if (name == "pq8") {
        return Backend::pq8;
    }
    if (name == "nomad") {
        return Backend::nomad;
    }
    return std::nullopt;
}

struct LatencyRow {
    Backend backend = Backend::exact;
    std::size_t context_length = 0;
    double score_us = 0.0; // per-query attention-score latency, median
    double cache_us = 0.0; // per-key caching latency, median
};

struct LatencyReport {
    std::size_t head_dim = 0;
    std::size_t sub_dim = 0;
    std::size_t threads = 1;
    std::size_t reps = 0;
    ScorePath path = ScorePath::scalar;
    std::vector<LatencyRow> rows; // one per backend x context length
};

namespace detail {

inline constexpr std::size_t kBenchWarmup = 3;
inline constexpr std::size_t kBenchCacheBatch = 64; // appends per timing sample
inline constexpr std::size_t kBenchLearnKeys = 4096;

inline double median(std::vector<double> samples) {
    std::sort(samples.begin(), samples.end());
    const std::size_t n = samples.size();
    return n % 2 == 1 ? samples[n / 2]
                      : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
}

inline double elapsed_us(
        std::chrono::steady_clock::time_point begin,
        std::chrono::steady_clock::time_point end) {
    return std::chrono::duration<double, std::micro>(end - begin).count();
}

// Keeps results observable so timed calls cannot be optimized away.
inline volatile float bench_sink = 0.f;

// Measures one backend at one context length on independent per-call state.
inline LatencyRow measure_backend(
        Backend backend,
        std::size_t length,
        std::size_t d,
        const Codebook& cb,
        const Pq8Codebook& pq8_cb,
        std::size_t reps,
        ScorePath path,
        std::uint64_t seed) {
    using clock = std::chrono::steady_clock;
    const std::size_t total_keys =
            length + (reps + kBenchWarmup) * kBenchCacheBatch;
    const std::vector<float> keys = sample_gaussian_mixture(
            total_keys, d, MixtureConfig{16, 1.0, 0.5}, mix_seed(seed, length));
    const std::vector<float> queries = sample_gaussian(
            reps + kBenchWarmup, d, 1.0, mix_seed(seed, length + 1));

    LatencyRow row;
    row.backend = backend;
    row.context_length = length;
    std::vector<double> score_samples;
    std::vector<double> cache_samples;

    auto run = [&](auto& cache, auto score_one, auto append_one) {
        for (std::size_t i = 0; i < length; ++i) {
            append_one(std::span<const float>(keys.data() + i * d, d));
        }
        for (std::size_t r = 0; r < reps + kBenchWarmup; ++r) {
            std::span<const float> query(queries.data() + r * d, d);
            const auto begin = clock::now();
            const ScoreVector scores = score_one(query);
            const auto end = clock::now();
            bench_sink = bench_sink + scores.front() + scores.back();
            if (r >= kBenchWarmup) {
                score_samples.push_back(elapsed_us(begin, end));
            }
        }
        std::size_t next = length;
        for (std::size_t r = 0; r < reps + kBenchWarmup; ++r) {
            const auto begin = clock::now();
            for (std::size_t i = 0; i < kBenchCacheBatch; ++i, ++next) {
                append_one(std::span<const float>(keys.data() + next * d, d));
            }
            const auto end = clock::now();
            if (r >= kBenchWarmup) {
                cache_samples.push_back(
                        elapsed_us(begin, end) / double(kBenchCacheBatch));
            }
        }
    };

    switch (backend) {
        case Backend::exact: {
            FloatKeyCache cache(d);
            run(cache,
                [&](std::span<const float> q) {
                    return exact_scores_cached(q, cache);
                },
                [&](std::span<const float> k) { cache.append(k); });
            break;
        }
        case Backend::pq8: {
            Pq8KeyCache cache(pq8_cb.num_sub);
            run(cache,
                [&](std::span<const float> q) {
                    return pq8_scores_cached(q, cache, pq8_cb);
                },
                [&](std::span<const float> k) {
                    cache.append(pq8_encode_key(k, pq8_cb));
                });
            break;
        }
        case Backend::nomad: {
            KeyCodeCache cache(cb.config.num_sub);
            run(cache,
                [&](std::span<const float> q) {
                    return nomad_scores_cached(q, cache, cb, path);
                },
                [&](std::span<const float> k) {
                    cache.append(encode_key(k, cb));
                });
            break;
        }
    }
    row.score_us = median(score_samples);
    row.cache_us = median(cache_samples);
    return row;
}

} // namespace detail

// Latency sweep over context lengths and backends. Codebooks are learned
// once up front; every (backend, length) cell is prefilled to the context
// length, then per-query score latency and per-key caching latency are
// measured separately as medians over reps (after 3 warm-up rounds).
// threads > 1 runs that many independent single-head workers and pools
// their samples; the default matches the single-thread protocol.
inline LatencyReport run_latency(
        std::span<const std::size_t> context_lengths,
        std::size_t d,
        std::size_t d_sub,
        std::span<const Backend> backends,
        std::size_t reps,
        bool force_scalar = false,
        std::size_t threads = 1,
        std::uint64_t seed = 0x5EED) {
    if (context_lengths.empty()) {
        throw InvalidInputError("run_latency: no context lengths given");
    }
    for (std::size_t len : context_lengths) {
        if (len == 0) {
            throw InvalidInputError("run_latency: context lengths must be positive");
        }
    }
    if (backends.empty()) {
        throw ConfigError("run_latency: no backends selected");
    }
    if (reps == 0) {
        throw InvalidInputError("run_latency: reps must be positive");
    }
    if (threads == 0) {
        throw InvalidInputError("run_latency: threads must be positive");
    }
    const PqConfig config(d, d_sub); // validates divisibility

    const bool wants_pq8 =
            std::find(backends.begin(), backends.end(), Backend::pq8) !=
            backends.end();
    if (wants_pq8 && d % Pq8Codebook::kSubDim != 0) {
        throw ConfigError("run_latency: pq8 backend requires an even dimension");
    }

    LatencyReport report;
    report.head_dim = d;
    report.sub_dim = d_sub;
    report.threads = threads;
    report.reps = reps;
    report.path = detect_fast_path(force_scalar);

    const std::vector<float> learn_keys = sample_gaussian_mixture(
            detail::kBenchLearnKeys, d, MixtureConfig{16, 1.0, 0.5},
            detail::mix_seed(seed, 0xC0DE));
    const Codebook cb =
            learn_codebook(learn_keys, detail::kBenchLearnKeys, config, seed);
    Pq8Codebook pq8_cb;
    if (wants_pq8) {
        pq8_cb = learn_pq8_codebook(learn_keys, detail::kBenchLearnKeys, d, seed);
    }

    for (Backend backend : backends) {
        for (std::size_t length : context_lengths) {
            if (threads == 1) {
                report.rows.push_back(detail::measure_backend(
                        backend, length, d, cb, pq8_cb, reps, report.path, seed));
                continue;
            }
            std::vector<LatencyRow> rows(threads);
            std::vector<std::thread> workers;
            workers.reserve(threads);
            for (std::size_t w = 0; w < threads; ++w) {
                workers.emplace_back([&, w] {
                    rows[w] = detail::measure_backend(
                            backend, length, d, cb, pq8_cb, reps, report.path,
                            detail::mix_seed(seed, w));
                });
            }
            for (auto& worker : workers) {
                worker.join();
            }
            std::vector<double> score_meds, cache_meds;
            for (const LatencyRow& r : rows) {
                score_meds.push_back(r.score_us);
                cache_meds.push_back(r.cache_us);
            }
            LatencyRow row;
            row.backend = backend;
            row.context_length = length;
            row.score_us = detail::median(score_meds);
            row.cache_us = detail::median(cache_meds);
            report.rows.push_back(row);
        }
    }
    return report;
}

} // namespace nomad

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "nomad/errors.hpp"

namespace nomad {

// Seeded Gaussian-mixture generator for keys. Mode centers are drawn once
// from N(0, mode_scale^2) and every sample is a center plus N(0, spread^2)
// noise, mimicking the clustered structure of attention key embeddings.
struct MixtureConfig {
    std::size_t num_modes = 16;
    double mode_scale = 1.0;
    double spread = 0.05;
};

inline std::vector<float> sample_gaussian_mixture(
        std::size_t n,
        std::size_t dim,
        const MixtureConfig& config,
        std::uint64_t seed) {
    if (config.num_modes == 0) {
        throw InvalidInputError("sample_gaussian_mixture: need at least one mode");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<float> centers(config.num_modes * dim);
    for (float& c : centers) {
        c = static_cast<float>(normal(rng) * config.mode_scale);
    }
    std::vector<float> out(n * dim);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t mode = rng() % config.num_modes;
        const float* center = centers.data() + mode * dim;
        float* row = out.data() + i * dim;
        for (std::size_t j = 0; j < dim; ++j) {
            row[j] = center[j] + static_cast<float>(normal(rng) * config.spread);
        }
    }
    return out;
}

inline std::vector<float> sample_gaussian(
        std::size_t n, std::size_t dim, double sigma, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, sigma);
    std::vector<float> out(n * dim);
    for (float& v : out) {
        v = static_cast<float>(normal(rng));
    }
    return out;
}

// Queries correlated with the cached keys: each query is a randomly chosen
// key plus isotropic noise, modeling attention that retrieves a matching
// context position.
inline std::vector<float> sample_probe_queries(
        std::span<const float> keys,
        std::size_t num_keys,
        std::size_t dim,
        std::size_t num_queries,
        double noise,
        std::uint64_t seed) {
    if (num_keys == 0 || keys.size() != num_keys * dim) {
        throw InvalidInputError("sample_probe_queries: bad key matrix");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, noise);
    std::vector<float> out(num_queries * dim);
    for (std::size_t i = 0; i < num_queries; ++i) {
        const float* key = keys.data() + (rng() % num_keys) * dim;
        float* row = out.data() + i * dim;
        for (std::size_t j = 0; j < dim; ++j) {
            row[j] = key[j] + static_cast<float>(normal(rng));
        }
    }
    return out;
}

} // namespace nomad

#pragma once

#include <cstdint>

namespace nomad::stats {

// Thread-local count of centroid distance evaluations performed by the key
// encoders. Lets benchmarks and tests compare the caching cost of backends
// (16 distances per sub-quantizer for 4-bit codes vs 256 for 8-bit codes).
inline thread_local std::uint64_t distance_computations = 0;

inline void reset_distance_computations() {
    distance_computations = 0;
}

} // namespace nomad::stats

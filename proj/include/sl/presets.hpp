#pragma once

#include <cstdint>
#include <utility>

#include "sl/measures.hpp"

namespace sl {

// Built-in experiment generators. All are i.i.d. samplers, deterministic
// given the seed; supports are uniform-weight point clouds.

// n points from Unif([-1,1]²).
DiscreteMeasure gen_uniform_square(int n, std::uint64_t seed);

// Three-component mixture: ½·N((0,0), 0.1·I) + 3/10·N((1,0), 0.1·I)
// + 1/5·N((0,1), 0.1·I).
DiscreteMeasure gen_mixture3(int n, std::uint64_t seed);

// Pair of four-component ring mixtures (covariance 0.1·I, equal weights):
// first has means at radius 4 and angles 45°·i, the second the same ring
// rotated by 45°.
std::pair<DiscreteMeasure, DiscreteMeasure> gen_mixture4_ring(int n, std::uint64_t seed);

// Pair of annulus-supported measures: Unif(1.5 ≤ ‖x‖ ≤ 2) against
// ½·Unif(0.5 ≤ ‖x‖ ≤ 1) + ½·Unif(0.2 ≤ ‖x - (0,-4)‖ ≤ 0.4).
std::pair<DiscreteMeasure, DiscreteMeasure> gen_annuli(int n, std::uint64_t seed);

// (x, y) ∈ [-1,1]² ↦ (e^{0.5x+y}, -e^{x-0.5y}, x+2y²).
Vector manifold3d_map(double x, double y);

// n samples of the pushforward of Unif([-1,1]²) under manifold3d_map.
DiscreteMeasure gen_manifold3d(int n, std::uint64_t seed);

}  // namespace sl

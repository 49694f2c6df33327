#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sl/joint_sl.hpp"

namespace sl {

/// Discrete weight measure for the time-weighted distance: node times with
/// nonnegative masses, a quadrature form of ∫ E‖a_t - b_t‖² w(dt).
struct WeightMeasure {
    std::vector<double> nodes;   // strictly increasing, positive
    std::vector<double> masses;  // nonnegative, positive total

    void validate() const;
};

// E[‖a_∞ - b_∞‖²]^{1/2} under the joint power-control coupling; composition
// of sample_coupling and transport_cost_estimate.
DistanceEstimate sl_distance(const DiscreteMeasure& mu, const DiscreteMeasure& nu, double alpha,
                             double delta, const SimConfig& cfg, int num_traj,
                             std::uint64_t seed, int workers = 0);

// Per-trajectory quadrature Σ_i mass_i·‖a_{t_i} - b_{t_i}‖² with node times
// snapped to the dt grid; mean/CI over trajectories.
DistanceEstimate weighted_sl_distance(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                      double alpha, double delta, const WeightMeasure& w,
                                      const SimConfig& cfg, int num_traj, std::uint64_t seed,
                                      int workers = 0);

struct KlEstimate {
    double estimate = 0.0;
    double std_err = 0.0;
    double tail_mass = 0.0;  // weight mass beyond the truncation, 1/(1+T_max)
    int num_paths = 0;
};

// KL(μ ‖ N(0, I)) via the identity-control joint run on the Gaussian-analytic
// backend: ½∫ E‖(1+t)(a_t - b_t) - ∫₀ᵗ(a_s - b_s)ds‖² dt/(1+t)², trapezoid
// quadrature on the dt grid, truncated at T_max (tail reported, not
// extrapolated).
KlEstimate kl_via_sl(const GaussianMeasure& mu, int num_paths, double dt, double t_max,
                     std::uint64_t seed, int workers = 0);

// Exact squared 2-Wasserstein distance between equal-cardinality
// uniform-weight supports: assignment problem on ‖x_i - y_j‖² costs,
// O(N³) shortest augmenting path.
double exact_w2_discrete(const DiscreteMeasure& mu, const DiscreteMeasure& nu);

// Internal solver, exposed for testing: minimal total cost over perfect
// matchings of a square cost matrix.
double solve_assignment(const Matrix& cost);

// ‖a₀-b₀‖² + tr(Σ₀ + Λ₀ - 2(Σ₀^{1/2}Λ₀Σ₀^{1/2})^{1/2}), exact closed form.
double gaussian_w2(const GaussianMeasure& mu, const GaussianMeasure& nu);

// ‖a₀-b₀‖² + tr(Σ₀+Λ₀) - 2√(κ·λ_min(Λ₀))·tr(Σ₀): the strongly log-concave
// vs Gaussian upper bound on the coupling cost.
double bound_002(const Vector& a0, const Vector& b0, const SymMatrix& sigma0,
                 const SymMatrix& lambda0, double kappa);

struct W2TableRow {
    std::string coupling;
    double bound_w2 = 0.0;  // sqrt scale
    double ci_lo = 0.0;     // 95% CI, also sqrt scale; <0 marks NA
    double ci_hi = 0.0;
    double mean_sq = 0.0;
    int num_samples = 0;
};

// One row per policy plus exact ("optimal") and independence baselines.
std::vector<W2TableRow> w2_bound_table(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                       const std::vector<JointPolicy>& policies,
                                       const SimConfig& cfg, int num_traj, std::uint64_t seed,
                                       int workers = 0);

}  // namespace sl

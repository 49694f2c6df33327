#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "sl/measures.hpp"

namespace sl {

/// Control process choice for a single localization run.
/// Alpha(α, δ) uses C_t = (Σ_t + δ^{1/α}·I)^{-α}; Identity is the α = 0 case.
struct ControlPolicy {
    double alpha = 0.0;
    double delta = 1e-3;

    static ControlPolicy identity() { return ControlPolicy{0.0, 1e-3}; }
    static ControlPolicy eldan(double alpha, double delta) {
        if (alpha > 0.0 && delta <= 0.0) throw InvalidInput("ControlPolicy: delta must be > 0");
        if (alpha < 0.0 || alpha > 1.0) throw InvalidInput("ControlPolicy: alpha in [0,1]");
        return ControlPolicy{alpha, delta};
    }
};

/// Evolving posterior over a fixed finite support: time, log-weights and
/// cached moments. Support points never change during a run.
struct SLState {
    double t = 0.0;
    Matrix points;        // N×d support, fixed
    Vector log_weights;   // normalized (logsumexp == 0)
    MomentSummary moments;

    DiscreteMeasure measure() const {
        return DiscreteMeasure::from_log_weights(points, log_weights);
    }
    int argmax_index() const {
        int idx = 0;
        log_weights.maxCoeff(&idx);
        return idx;
    }
    Vector argmax_point() const { return points.row(argmax_index()); }
};

struct SimConfig {
    double dt = 0.05;
    double horizon = 10.0;
    double loc_tol = 0.0;  // <= 0: auto, resolved to 1e-8·max(1, tr Σ₀) at run start
    std::uint64_t seed = 0;

    void validate() const {
        if (dt <= 0.0 || horizon <= 0.0 || dt > horizon) {
            throw InvalidInput("SimConfig: need 0 < dt <= T");
        }
    }
    double resolve_loc_tol(double trace0) const {
        return loc_tol > 0.0 ? loc_tol : 1e-8 * std::max(1.0, trace0);
    }
};

struct RateCurve {
    std::vector<double> times;
    std::vector<double> mean_trace;
    std::vector<double> std_err;
};

struct Trajectory {
    Vector a_final;       // posterior mean at stop time
    Vector argmax_point;  // max-weight support point at stop time
    bool localized = false;
    double stop_time = 0.0;
    std::vector<double> times;
    std::vector<double> trace_path;
    std::vector<Vector> mean_path;
};

SLState sl_init(const DiscreteMeasure& mu);

// One Euler–Maruyama step of the log-density dynamics: per support point
// Δlog w = <x - a_t, C·ΔW> - ½‖Cᵀ(x - a_t)‖²·dt, then logsumexp renormalize
// and recompute moments. C is a general d×d matrix (affine-transported
// controls are not symmetric). Throws NumericalBlowup if weights lose
// precision (non-finite log-weight, or the winning point's increment scale
// ‖Cᵀ(x - a)‖²·dt exceeds 50).
SLState sl_step(const SLState& s, const Matrix& control, const Vector& dw, double dt);

Matrix control_of(const SLState& s, const ControlPolicy& policy);

// Arbitrary state-dependent control, evaluated at step start.
using ControlFn = std::function<Matrix(const SLState&)>;

Trajectory run_localization(const DiscreteMeasure& mu, const ControlPolicy& policy,
                            const SimConfig& cfg, std::uint64_t traj_seed,
                            bool record_path = false);

Trajectory run_localization(const DiscreteMeasure& mu, const ControlFn& control,
                            const SimConfig& cfg, std::uint64_t traj_seed,
                            bool record_path = false, bool early_stop = true);

// Average of tr Σ_t over M trajectories per policy, one curve per policy.
// Trajectory seeds are shared across policies (common random numbers).
std::vector<RateCurve> localization_rate_curve(const DiscreteMeasure& mu,
                                               const std::vector<ControlPolicy>& policies,
                                               const SimConfig& cfg, int num_traj,
                                               int workers = 0);

/// Closed-form backend for the identity-control scheme on a Gaussian prior.
/// The posterior given θ_t is Gaussian with Σ_t = (Σ₀⁻¹ + tI)⁻¹ and
/// a_t = Σ_t(Σ₀⁻¹ m + θ_t).
struct GaussianAnalyticState {
    double t = 0.0;
    GaussianMeasure prior;
    Vector theta;          // observation process
    Vector running_int_a;  // ∫₀ᵗ a_s ds, trapezoid-accumulated

    explicit GaussianAnalyticState(const GaussianMeasure& prior_);
};

MomentSummary gaussian_posterior(const GaussianMeasure& prior, const Vector& theta, double t);

// Δθ = a_t·dt + ΔW (identity control).
GaussianAnalyticState gaussian_observation_step(const GaussianAnalyticState& s, const Vector& dw,
                                                double dt);

// Runs fn(j) for j in [0, n) over a bounded number of threads; each call
// writes only to its own output slot, so reductions done afterwards in index
// order are independent of the worker count. workers <= 0 picks the hardware
// concurrency.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

}  // namespace sl

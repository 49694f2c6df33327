#pragma once

#include <cstdint>
#include <vector>

#include "sl/sl_engine.hpp"

namespace sl {

/// Control choice for a joint run over k measures sharing one Brownian motion.
/// JointAlpha applies the per-measure regularized power control to every
/// marginal; Extrapolation (k = 2 only) uses C = (Σ†)^{1/2},
/// D = Σ^{1/2}[(Σ^{1/2}ΛΣ^{1/2})†]^{1/2} with δ² regularization inside both
/// pseudoinverse powers.
struct JointPolicy {
    enum class Kind { JointAlpha, Extrapolation };
    Kind kind = Kind::JointAlpha;
    double alpha = 0.5;
    double delta = 1e-3;

    static JointPolicy joint_alpha(double alpha, double delta) {
        if (delta <= 0.0) throw InvalidInput("JointPolicy: delta must be > 0");
        if (alpha < 0.0 || alpha > 1.0) throw InvalidInput("JointPolicy: alpha in [0,1]");
        return JointPolicy{Kind::JointAlpha, alpha, delta};
    }
    static JointPolicy extrapolation(double delta) {
        if (delta <= 0.0) throw InvalidInput("JointPolicy: delta must be > 0");
        return JointPolicy{Kind::Extrapolation, 0.5, delta};
    }
    std::string name() const;
};

struct JointSLState {
    double t = 0.0;
    std::vector<SLState> states;  // all at equal t and dimension; supports may differ
};

JointSLState joint_init(const std::vector<DiscreteMeasure>& measures);

// Advance every marginal with the same ΔW; each marginal evolves exactly as
// sl_step would under its own control.
JointSLState joint_step(const JointSLState& j, const JointPolicy& policy, const Vector& dw,
                        double dt);

/// One Monte Carlo draw of the coupling: terminal means, argmax support
/// points and localization flags for the pair (first two measures).
struct CouplingSample {
    Vector a, b;              // terminal posterior means
    Vector a_point, b_point;  // argmax support points
    bool a_localized = false;
    bool b_localized = false;
};

/// Full terminal state of one joint trajectory (any k), plus optional
/// per-node path records used by the weighted distance.
struct JointTrajectory {
    std::vector<Vector> means;
    std::vector<Vector> argmax_points;
    std::vector<int> argmax_indices;
    std::vector<bool> localized;
    double stop_time = 0.0;
    // ‖a_t - b_t‖² recorded at requested node steps (pair runs only).
    std::vector<double> node_sq_dists;
};

struct JointRunOptions {
    bool early_stop = true;             // stop once every marginal localizes
    std::vector<double> node_times;     // snap-to-grid times for path records
    int workers = 0;
};

JointTrajectory run_joint_trajectory(const std::vector<DiscreteMeasure>& measures,
                                     const JointPolicy& policy, const SimConfig& cfg,
                                     std::uint64_t traj_seed,
                                     const std::vector<double>& node_times = {},
                                     bool early_stop = true);

std::vector<CouplingSample> sample_coupling(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                            const JointPolicy& policy, const SimConfig& cfg,
                                            int num_traj, std::uint64_t master_seed,
                                            int workers = 0);

std::vector<JointTrajectory> run_joint_trajectories(const std::vector<DiscreteMeasure>& measures,
                                                    const JointPolicy& policy,
                                                    const SimConfig& cfg, int num_traj,
                                                    std::uint64_t master_seed,
                                                    const JointRunOptions& opts = {});

struct DistanceEstimate {
    double mean_sq = 0.0;
    double std_err = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    int num_samples = 0;
    double distance = 0.0;  // sqrt(max(mean_sq, 0))
};

DistanceEstimate estimate_from_sq_values(const std::vector<double>& sq_values);

enum class EndpointUse { Mean, Argmax };

// Monte Carlo mean of ‖a-b‖² with normal-approximation 95% CI.
DistanceEstimate transport_cost_estimate(const std::vector<CouplingSample>& samples,
                                         EndpointUse use = EndpointUse::Mean);

void save_coupling_csv(const std::vector<CouplingSample>& samples, const std::string& path,
                       const std::string& config_echo = "");

}  // namespace sl

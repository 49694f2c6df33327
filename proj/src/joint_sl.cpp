#include "sl/joint_sl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>

#include "sl/rng.hpp"

namespace sl {

std::string JointPolicy::name() const {
    if (kind == Kind::Extrapolation) return "extrapolation";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "joint-eldan-%g", alpha);
    return buf;
}

JointSLState joint_init(const std::vector<DiscreteMeasure>& measures) {
    if (measures.size() < 2) throw InvalidInput("joint_init: k >= 2 measures required");
    const int d = measures.front().dim();
    JointSLState j;
    for (const auto& m : measures) {
        if (m.dim() != d) throw InvalidInput("joint_init: dimension mismatch");
        j.states.push_back(sl_init(m));
    }
    return j;
}

namespace {

std::vector<Matrix> joint_controls(const JointSLState& j, const JointPolicy& policy) {
    std::vector<Matrix> controls;
    controls.reserve(j.states.size());
    if (policy.kind == JointPolicy::Kind::JointAlpha) {
        const ControlPolicy single = ControlPolicy::eldan(policy.alpha, policy.delta);
        for (const auto& s : j.states) controls.push_back(control_of(s, single));
        return controls;
    }
    if (j.states.size() != 2) {
        throw InvalidInput("joint_step: extrapolation requires exactly k = 2 measures");
    }
    const auto cd = extrapolation_control(j.states[0].moments.cov, j.states[1].moments.cov,
                                          policy.delta);
    controls.push_back(cd.c.mat());
    controls.push_back(cd.d);
    return controls;
}

}  // namespace

JointSLState joint_step(const JointSLState& j, const JointPolicy& policy, const Vector& dw,
                        double dt) {
    const std::vector<Matrix> controls = joint_controls(j, policy);
    JointSLState out;
    out.t = j.t + dt;
    out.states.reserve(j.states.size());
    for (size_t i = 0; i < j.states.size(); ++i) {
        try {
            out.states.push_back(sl_step(j.states[i], controls[i], dw, dt));
        } catch (NumericalBlowup& e) {
            e.measure_index = static_cast<int>(i);
            throw;
        }
    }
    return out;
}

JointTrajectory run_joint_trajectory(const std::vector<DiscreteMeasure>& measures,
                                     const JointPolicy& policy, const SimConfig& cfg,
                                     std::uint64_t traj_seed,
                                     const std::vector<double>& node_times, bool early_stop) {
    cfg.validate();
    JointSLState j = joint_init(measures);
    const int d = measures.front().dim();
    const int k = static_cast<int>(j.states.size());

    std::vector<double> tol(k);
    for (int i = 0; i < k; ++i) tol[i] = cfg.resolve_loc_tol(j.states[i].moments.trace_cov);

    // Snap node times to the dt grid (nearest step).
    const int steps = static_cast<int>(std::llround(cfg.horizon / cfg.dt));
    std::vector<int> node_steps;
    for (double tn : node_times) {
        if (tn > cfg.horizon + 0.5 * cfg.dt) {
            throw InvalidInput("run_joint_trajectory: node beyond horizon");
        }
        node_steps.push_back(std::clamp(static_cast<int>(std::llround(tn / cfg.dt)), 0, steps));
    }

    JointTrajectory out;
    out.node_sq_dists.assign(node_steps.size(), 0.0);
    GaussianStream rng(traj_seed);

    auto record_nodes = [&](int step) {
        for (size_t q = 0; q < node_steps.size(); ++q) {
            if (node_steps[q] == step) {
                out.node_sq_dists[q] =
                    (j.states[0].moments.mean - j.states[1].moments.mean).squaredNorm();
            }
        }
    };
    auto all_localized = [&]() {
        for (int i = 0; i < k; ++i) {
            if (j.states[i].moments.trace_cov >= tol[i]) return false;
        }
        return true;
    };

    record_nodes(0);
    for (int step = 1; step <= steps; ++step) {
        if (early_stop && node_steps.empty() && all_localized()) break;
        const Vector dw = rng.brownian_increment(d, cfg.dt);
        j = joint_step(j, policy, dw, cfg.dt);
        record_nodes(step);
    }

    out.stop_time = j.t;
    for (int i = 0; i < k; ++i) {
        out.means.push_back(j.states[i].moments.mean);
        out.argmax_indices.push_back(j.states[i].argmax_index());
        out.argmax_points.push_back(j.states[i].argmax_point());
        out.localized.push_back(j.states[i].moments.trace_cov < tol[i]);
    }
    return out;
}

std::vector<JointTrajectory> run_joint_trajectories(const std::vector<DiscreteMeasure>& measures,
                                                    const JointPolicy& policy,
                                                    const SimConfig& cfg, int num_traj,
                                                    std::uint64_t master_seed,
                                                    const JointRunOptions& opts) {
    if (num_traj < 1) throw InvalidInput("run_joint_trajectories: M >= 1 required");
    std::vector<JointTrajectory> out(num_traj);
    std::exception_ptr first_error = nullptr;
    std::mutex err_mutex;
    parallel_for(num_traj, opts.workers, [&](int jdx) {
        try {
            out[jdx] = run_joint_trajectory(measures, policy, cfg,
                                            trajectory_seed(master_seed, jdx), opts.node_times,
                                            opts.early_stop);
        } catch (NumericalBlowup& e) {
            e.trajectory = jdx;
            std::lock_guard<std::mutex> lock(err_mutex);
            if (!first_error) first_error = std::make_exception_ptr(e);
        } catch (...) {
            std::lock_guard<std::mutex> lock(err_mutex);
            if (!first_error) first_error = std::current_exception();
        }
    });
    if (first_error) std::rethrow_exception(first_error);
    return out;
}

std::vector<CouplingSample> sample_coupling(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                            const JointPolicy& policy, const SimConfig& cfg,
                                            int num_traj, std::uint64_t master_seed,
                                            int workers) {
    JointRunOptions opts;
    opts.workers = workers;
    const auto trajectories =
        run_joint_trajectories({mu, nu}, policy, cfg, num_traj, master_seed, opts);
    std::vector<CouplingSample> samples;
    samples.reserve(trajectories.size());
    for (const auto& tr : trajectories) {
        CouplingSample s;
        s.a = tr.means[0];
        s.b = tr.means[1];
        s.a_point = tr.argmax_points[0];
        s.b_point = tr.argmax_points[1];
        s.a_localized = tr.localized[0];
        s.b_localized = tr.localized[1];
        samples.push_back(std::move(s));
    }
    return samples;
}

DistanceEstimate estimate_from_sq_values(const std::vector<double>& sq_values) {
    if (sq_values.size() < 2) {
        throw InvalidInput("DistanceEstimate: at least 2 samples required");
    }
    const int m = static_cast<int>(sq_values.size());
    double mean = 0.0;
    for (double v : sq_values) mean += v;
    mean /= m;
    double var = 0.0;
    for (double v : sq_values) var += (v - mean) * (v - mean);
    var /= (m - 1);

    DistanceEstimate est;
    est.mean_sq = mean;
    est.std_err = std::sqrt(var / m);
    est.ci_lo = mean - 1.96 * est.std_err;
    est.ci_hi = mean + 1.96 * est.std_err;
    est.num_samples = m;
    est.distance = std::sqrt(std::max(mean, 0.0));
    return est;
}

DistanceEstimate transport_cost_estimate(const std::vector<CouplingSample>& samples,
                                         EndpointUse use) {
    std::vector<double> sq;
    sq.reserve(samples.size());
    for (const auto& s : samples) {
        sq.push_back(use == EndpointUse::Mean ? (s.a - s.b).squaredNorm()
                                              : (s.a_point - s.b_point).squaredNorm());
    }
    return estimate_from_sq_values(sq);
}

void save_coupling_csv(const std::vector<CouplingSample>& samples, const std::string& path,
                       const std::string& config_echo) {
    std::ofstream os(path);
    if (!os) throw InvalidInput("save_coupling_csv: cannot open " + path);
    if (!config_echo.empty()) os << "# " << config_echo << "\n";
    if (samples.empty()) return;
    const int d = static_cast<int>(samples.front().a.size());
    os << "trajectory_id";
    for (int j = 0; j < d; ++j) os << ",a_" << (j + 1);
    for (int j = 0; j < d; ++j) os << ",b_" << (j + 1);
    os << ",a_localized,b_localized\n";
    os.precision(17);
    for (size_t i = 0; i < samples.size(); ++i) {
        os << i;
        for (int j = 0; j < d; ++j) os << "," << samples[i].a[j];
        for (int j = 0; j < d; ++j) os << "," << samples[i].b[j];
        os << "," << (samples[i].a_localized ? 1 : 0) << "," << (samples[i].b_localized ? 1 : 0)
           << "\n";
    }
}

}  // namespace sl

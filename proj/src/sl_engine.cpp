#include "sl/sl_engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

#include "sl/rng.hpp"

namespace sl {

SLState sl_init(const DiscreteMeasure& mu) {
    SLState s;
    s.t = 0.0;
    s.points = mu.points();
    s.log_weights = mu.log_weights();
    s.moments = mean_cov(s.points, s.log_weights);
    return s;
}

SLState sl_step(const SLState& s, const Matrix& control, const Vector& dw, double dt) {
    const int n = static_cast<int>(s.points.rows());
    const int d = static_cast<int>(s.points.cols());
    if (control.rows() != d || control.cols() != d) {
        throw InvalidInput("sl_step: control must be d×d");
    }
    if (dw.size() != d || !dw.allFinite()) throw InvalidInput("sl_step: bad increment");
    if (dt <= 0.0) throw InvalidInput("sl_step: dt must be > 0");

    const Matrix centered = s.points.rowwise() - s.moments.mean.transpose();
    const Vector cdw = control * dw;                       // C·ΔW
    const Matrix ctx = centered * control;                 // rows are (Cᵀ(x-a))ᵀ
    SLState out;
    out.t = s.t + dt;
    out.points = s.points;
    out.log_weights = s.log_weights;
    for (int i = 0; i < n; ++i) {
        const double quad = ctx.row(i).squaredNorm();
        out.log_weights[i] += centered.row(i).dot(cdw) - 0.5 * quad * dt;
    }

    if (!out.log_weights.allFinite()) {
        // -inf from fully decayed weights is fine; NaN/+inf is not.
        for (int i = 0; i < n; ++i) {
            const double lw = out.log_weights[i];
            if (std::isnan(lw) || lw == std::numeric_limits<double>::infinity()) {
                throw NumericalBlowup("sl_step: non-finite log-weight", s.t,
                                      control.norm());
            }
        }
    }
    out.log_weights.array() -= logsumexp(out.log_weights);

    // Huge increments on dying points are harmless absorption, but if the point
    // that wins the step carries an increment of scale > 50 the surviving
    // dynamics are untrustworthy.
    int winner = 0;
    out.log_weights.maxCoeff(&winner);
    if (ctx.row(winner).squaredNorm() * dt > 50.0) {
        throw NumericalBlowup("sl_step: argmax log-weight increment exceeds 50", s.t,
                              control.norm());
    }

    out.moments = mean_cov(out.points, out.log_weights);
    return out;
}

Matrix control_of(const SLState& s, const ControlPolicy& policy) {
    const int d = static_cast<int>(s.points.cols());
    if (policy.alpha == 0.0) return Matrix::Identity(d, d);
    return regularized_control(s.moments.cov, policy.alpha, policy.delta).mat();
}

Trajectory run_localization(const DiscreteMeasure& mu, const ControlPolicy& policy,
                            const SimConfig& cfg, std::uint64_t traj_seed, bool record_path) {
    return run_localization(
        mu, [&policy](const SLState& s) { return control_of(s, policy); }, cfg, traj_seed,
        record_path);
}

Trajectory run_localization(const DiscreteMeasure& mu, const ControlFn& control,
                            const SimConfig& cfg, std::uint64_t traj_seed, bool record_path,
                            bool early_stop) {
    cfg.validate();
    SLState s = sl_init(mu);
    const double tol = cfg.resolve_loc_tol(s.moments.trace_cov);
    GaussianStream rng(traj_seed);

    Trajectory out;
    if (record_path) {
        out.times.push_back(0.0);
        out.trace_path.push_back(s.moments.trace_cov);
        out.mean_path.push_back(s.moments.mean);
    }
    const int steps = static_cast<int>(std::llround(cfg.horizon / cfg.dt));
    for (int k = 0; k < steps; ++k) {
        if (early_stop && s.moments.trace_cov < tol) break;
        const Matrix c = control(s);
        const Vector dw = rng.brownian_increment(static_cast<int>(mu.dim()), cfg.dt);
        s = sl_step(s, c, dw, cfg.dt);
        if (record_path) {
            out.times.push_back(s.t);
            out.trace_path.push_back(s.moments.trace_cov);
            out.mean_path.push_back(s.moments.mean);
        }
    }
    out.a_final = s.moments.mean;
    out.argmax_point = s.argmax_point();
    out.localized = s.moments.trace_cov < tol;
    out.stop_time = s.t;
    return out;
}

std::vector<RateCurve> localization_rate_curve(const DiscreteMeasure& mu,
                                               const std::vector<ControlPolicy>& policies,
                                               const SimConfig& cfg, int num_traj, int workers) {
    cfg.validate();
    if (num_traj < 2) throw InvalidInput("localization_rate_curve: M >= 2 required");

    const int steps = static_cast<int>(std::llround(cfg.horizon / cfg.dt));
    std::vector<RateCurve> curves;
    for (const auto& policy : policies) {
        // Full horizon, no early stop: curves share a common time grid.
        Matrix traces(num_traj, steps + 1);
        std::exception_ptr first_error = nullptr;
        std::mutex err_mutex;
        parallel_for(num_traj, workers, [&](int j) {
            try {
                const Trajectory tr = run_localization(
                    mu, [&policy](const SLState& s) { return control_of(s, policy); }, cfg,
                    trajectory_seed(cfg.seed, static_cast<std::uint64_t>(j)), true, false);
                for (int k = 0; k <= steps; ++k) traces(j, k) = tr.trace_path[k];
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
        if (first_error) std::rethrow_exception(first_error);

        RateCurve curve;
        curve.times.resize(steps + 1);
        curve.mean_trace.resize(steps + 1);
        curve.std_err.resize(steps + 1);
        for (int k = 0; k <= steps; ++k) {
            curve.times[k] = k * cfg.dt;
            const double mean = traces.col(k).mean();
            const double var =
                (traces.col(k).array() - mean).square().sum() / (num_traj - 1);
            curve.mean_trace[k] = mean;
            curve.std_err[k] = std::sqrt(var / num_traj);
        }
        curves.push_back(std::move(curve));
    }
    return curves;
}

GaussianAnalyticState::GaussianAnalyticState(const GaussianMeasure& prior_)
    : prior(prior_),
      theta(Vector::Zero(prior_.dim())),
      running_int_a(Vector::Zero(prior_.dim())) {}

MomentSummary gaussian_posterior(const GaussianMeasure& prior, const Vector& theta, double t) {
    if (t < 0.0) throw InvalidInput("gaussian_posterior: t >= 0 required");
    if (theta.size() != prior.dim()) throw InvalidInput("gaussian_posterior: theta dim mismatch");
    const auto eig = spectral_decompose(prior.cov);
    if (eig.eigenvalues.minCoeff() <= 0.0) {
        throw NotPSD("gaussian_posterior: prior covariance must be nonsingular");
    }
    // In the prior eigenbasis: Σ_t = diag(λ/(1+tλ)), a_t = Σ_t(m/λ + θ̃).
    const Vector m_t = eig.eigenvectors.transpose() * prior.mean;
    const Vector th_t = eig.eigenvectors.transpose() * theta;
    Vector post_lam(eig.eigenvalues.size()), post_mean(eig.eigenvalues.size());
    for (int i = 0; i < eig.eigenvalues.size(); ++i) {
        const double lam = eig.eigenvalues[i];
        post_lam[i] = lam / (1.0 + t * lam);
        post_mean[i] = post_lam[i] * (m_t[i] / lam + th_t[i]);
    }
    MomentSummary out;
    out.mean = eig.eigenvectors * post_mean;
    out.cov = SymMatrix(eig.eigenvectors * post_lam.asDiagonal() * eig.eigenvectors.transpose());
    out.trace_cov = out.cov.trace();
    return out;
}

GaussianAnalyticState gaussian_observation_step(const GaussianAnalyticState& s, const Vector& dw,
                                                double dt) {
    if (dt <= 0.0) throw InvalidInput("gaussian_observation_step: dt must be > 0");
    const Vector a_old = gaussian_posterior(s.prior, s.theta, s.t).mean;
    GaussianAnalyticState out = s;
    out.t = s.t + dt;
    out.theta = s.theta + a_old * dt + dw;
    const Vector a_new = gaussian_posterior(out.prior, out.theta, out.t).mean;
    out.running_int_a = s.running_int_a + 0.5 * dt * (a_old + a_new);
    return out;
}

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
    if (workers <= 0) {
        workers = static_cast<int>(std::thread::hardware_concurrency());
        if (workers <= 0) workers = 4;
    }
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (int j = 0; j < n; ++j) fn(j);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            for (int j = next.fetch_add(1); j < n; j = next.fetch_add(1)) fn(j);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace sl

#include "sl/fit.hpp"

#include <atomic>
#include <cmath>
#include <iostream>

#include "sl/rng.hpp"

namespace sl {

LegendreBasis::LegendreBasis(std::vector<int> degs) : degrees(std::move(degs)) {
    if (degrees.empty()) throw InvalidInput("LegendreBasis: latent dim >= 1 required");
    for (int d : degrees) {
        if (d < 0) throw InvalidInput("LegendreBasis: degrees must be >= 0");
    }
}

LegendreBasis LegendreBasis::uniform(int latent_dim, int max_degree) {
    if (latent_dim < 1) throw InvalidInput("LegendreBasis: latent dim >= 1 required");
    return LegendreBasis(std::vector<int>(latent_dim, max_degree));
}

int LegendreBasis::feature_count() const {
    int j = 1;
    for (int d : degrees) j *= d + 1;
    return j;
}

int LegendreBasis::linear_feature_index(int j) const {
    if (j < 0 || j >= latent_dim()) throw InvalidInput("linear_feature_index: bad dimension");
    if (degrees[j] < 1) throw InvalidInput("linear_feature_index: degree >= 1 required");
    int stride = 1;
    for (int l = latent_dim() - 1; l > j; --l) stride *= degrees[l] + 1;
    return stride;
}

namespace {

// P̃_0..P̃_deg at x, orthonormal on [-1,1].
void normalized_legendre(double x, int deg, std::vector<double>& out) {
    out.resize(deg + 1);
    double pm1 = 1.0, p = x;
    for (int n = 0; n <= deg; ++n) {
        double pn;
        if (n == 0) {
            pn = 1.0;
        } else if (n == 1) {
            pn = x;
        } else {
            pn = ((2.0 * n - 1.0) * x * p - (n - 1.0) * pm1) / n;
            pm1 = p;
            p = pn;
        }
        out[n] = std::sqrt((2.0 * n + 1.0) / 2.0) * pn;
    }
}

std::atomic<bool> g_clamp_warned{false};

}  // namespace

Vector legendre_features(const LegendreBasis& basis, const Vector& z) {
    const int k = basis.latent_dim();
    if (z.size() != k) throw InvalidInput("legendre_features: latent dim mismatch");

    std::vector<std::vector<double>> per_dim(k);
    std::vector<double> tmp;
    for (int j = 0; j < k; ++j) {
        double x = z[j];
        if (x < -1.0 || x > 1.0) {
            if (!g_clamp_warned.exchange(true)) {
                std::cerr << "legendre_features: latent point outside [-1,1], clamped\n";
            }
            x = std::clamp(x, -1.0, 1.0);
        }
        normalized_legendre(x, basis.degrees[j], tmp);
        per_dim[j] = tmp;
    }

    Vector phi(basis.feature_count());
    std::vector<int> idx(k, 0);
    for (int f = 0; f < phi.size(); ++f) {
        double v = 1.0;
        for (int j = 0; j < k; ++j) v *= per_dim[j][idx[j]];
        phi[f] = v;
        for (int j = k - 1; j >= 0; --j) {  // last dimension fastest
            if (++idx[j] <= basis.degrees[j]) break;
            idx[j] = 0;
        }
    }
    return phi;
}

ParametricMap::ParametricMap(const LegendreBasis& b, const Matrix& th, const Matrix& z)
    : basis(b), theta(th), latents(z) {
    if (theta.rows() != basis.feature_count()) {
        throw InvalidInput("ParametricMap: theta rows must equal feature count");
    }
    if (!theta.allFinite()) throw InvalidInput("ParametricMap: non-finite theta");
    if (latents.cols() != basis.latent_dim()) {
        throw InvalidInput("ParametricMap: latent dim mismatch");
    }
}

Vector ParametricMap::evaluate(const Vector& z) const {
    return theta.transpose() * legendre_features(basis, z);
}

Matrix ParametricMap::image() const {
    Matrix out(latents.rows(), output_dim());
    for (int i = 0; i < latents.rows(); ++i) {
        out.row(i) = evaluate(latents.row(i)).transpose();
    }
    return out;
}

DiscreteMeasure model_pushforward(const ParametricMap& map) {
    return DiscreteMeasure::uniform(map.image());
}

DiscreteMeasure model_pushforward(const ParametricMap& map, const Matrix& latents) {
    ParametricMap m(map.basis, map.theta, latents);
    return model_pushforward(m);
}

namespace {

struct TrajectoryEndpoint {
    double sq_dist = 0.0;
    int latent_index = -1;
};

// Latent index of the model-side localized point. The image rows usually map
// one-to-one onto latent rows; if θ collapses several latents onto one point
// the first exact match is taken.
int locate_latent(const Matrix& image, const Vector& point) {
    for (int i = 0; i < image.rows(); ++i) {
        if ((image.row(i).transpose() - point).cwiseAbs().maxCoeff() == 0.0) return i;
    }
    throw InvalidInput("locate_latent: localized point not in model image");
}

std::vector<TrajectoryEndpoint> run_fit_trajectories(const DiscreteMeasure& data,
                                                     const ParametricMap& map,
                                                     const FitConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const Matrix image = map.image();
    const DiscreteMeasure model = DiscreteMeasure::uniform(image);
    JointRunOptions opts;
    opts.workers = cfg.workers;
    const auto trajectories =
        run_joint_trajectories({data, model}, JointPolicy::joint_alpha(cfg.alpha, cfg.delta),
                               cfg.sim, cfg.num_traj, seed, opts);
    std::vector<TrajectoryEndpoint> out(trajectories.size());
    for (size_t j = 0; j < trajectories.size(); ++j) {
        const Vector& a = trajectories[j].argmax_points[0];
        const Vector& b = trajectories[j].argmax_points[1];
        out[j].sq_dist = (a - b).squaredNorm();
        out[j].latent_index = locate_latent(image, b);
    }
    return out;
}

}  // namespace

LossEval fit_loss(const DiscreteMeasure& data, const ParametricMap& map, const FitConfig& cfg,
                  std::uint64_t seed) {
    const auto endpoints = run_fit_trajectories(data, map, cfg, seed);
    LossEval out;
    for (const auto& e : endpoints) {
        out.loss += e.sq_dist;
        out.profile.push_back(e.latent_index);
    }
    out.loss /= static_cast<double>(endpoints.size());
    return out;
}

LossGradHess loss_grad_hess(const DiscreteMeasure& data, const ParametricMap& map,
                            const FitConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const Matrix image = map.image();
    const DiscreteMeasure model = DiscreteMeasure::uniform(image);
    JointRunOptions opts;
    opts.workers = cfg.workers;
    const auto trajectories =
        run_joint_trajectories({data, model}, JointPolicy::joint_alpha(cfg.alpha, cfg.delta),
                               cfg.sim, cfg.num_traj, seed, opts);

    const int feat = map.basis.feature_count();
    const int d = map.output_dim();
    LossGradHess out;
    out.grad = Matrix::Zero(feat, d);
    Matrix phi_outer = Matrix::Zero(feat, feat);

    for (const auto& tr : trajectories) {
        const Vector& a = tr.argmax_points[0];
        const Vector& b = tr.argmax_points[1];
        const int latent = locate_latent(image, b);
        out.profile.push_back(latent);
        out.loss += (a - b).squaredNorm();

        const Vector phi = legendre_features(map.basis, map.latents.row(latent));
        out.grad.noalias() += 2.0 * phi * (b - a).transpose();
        phi_outer.noalias() += phi * phi.transpose();
    }
    const double m = static_cast<double>(trajectories.size());
    out.loss /= m;
    out.grad /= m;
    phi_outer *= 2.0 / m;

    // Gauss-Newton term only: f is linear in θ so D²f = 0.
    out.hess = Matrix::Zero(feat * d, feat * d);
    for (int f1 = 0; f1 < feat; ++f1) {
        for (int f2 = 0; f2 < feat; ++f2) {
            for (int l = 0; l < d; ++l) {
                out.hess(f1 * d + l, f2 * d + l) = phi_outer(f1, f2);
            }
        }
    }
    return out;
}

Matrix residual_sq_hessian(const Vector& residual, const Matrix& jac,
                           const std::vector<Matrix>& d2f) {
    const int p = static_cast<int>(jac.cols());
    Matrix h = 2.0 * jac.transpose() * jac;
    if (!d2f.empty()) {
        if (static_cast<int>(d2f.size()) != residual.size()) {
            throw InvalidInput("residual_sq_hessian: one curvature block per output dim");
        }
        for (int l = 0; l < residual.size(); ++l) {
            if (d2f[l].rows() != p || d2f[l].cols() != p) {
                throw InvalidInput("residual_sq_hessian: curvature block size mismatch");
            }
            h += 2.0 * residual[l] * d2f[l];
        }
    }
    return h;
}

FitReport fit(const DiscreteMeasure& data, const ParametricMap& init, const FitConfig& cfg,
              std::uint64_t seed) {
    cfg.validate();
    const int feat = init.basis.feature_count();
    const int d = init.output_dim();
    const int n_params = feat * d;

    Matrix theta = init.theta;
    double lambda = cfg.damping0;
    FitReport report;
    report.converged = false;

    auto flatten = [&](const Matrix& m) {
        Vector v(n_params);
        for (int f = 0; f < feat; ++f)
            for (int l = 0; l < d; ++l) v[f * d + l] = m(f, l);
        return v;
    };
    auto unflatten = [&](const Vector& v) {
        Matrix m(feat, d);
        for (int f = 0; f < feat; ++f)
            for (int l = 0; l < d; ++l) m(f, l) = v[f * d + l];
        return m;
    };

    int iter = 0;
    for (; iter < cfg.max_iter; ++iter) {
        const std::uint64_t iter_seed =
            cfg.noise == NoisePolicy::Frozen
                ? seed
                : splitmix64(seed ^ (0x51edULL + static_cast<std::uint64_t>(iter)));
        const ParametricMap cur(init.basis, theta, init.latents);
        const LossGradHess lgh = loss_grad_hess(data, cur, cfg, iter_seed);
        if (iter == 0) report.loss_history.push_back(lgh.loss);

        const Vector g = flatten(lgh.grad);
        bool accepted = false;
        double accepted_loss = lgh.loss;
        for (int attempt = 0; attempt < 25 && !accepted; ++attempt) {
            Vector step;
            const Matrix damped = lgh.hess + lambda * Matrix::Identity(n_params, n_params);
            Eigen::LDLT<Matrix> solver(damped);
            if (solver.info() == Eigen::Success) {
                step = solver.solve(-g);
            }
            if (step.size() != n_params || !step.allFinite()) {
                // Gradient fallback with a conservative scale.
                const double gnorm = g.norm();
                step = gnorm > 0 ? Vector(-g / (gnorm * (1.0 + lambda))) : Vector::Zero(n_params);
            }
            const ParametricMap trial(init.basis, theta + unflatten(step), init.latents);
            const double trial_loss = fit_loss(data, trial, cfg, iter_seed).loss;
            if (trial_loss < lgh.loss) {
                theta += unflatten(step);
                lambda = std::max(lambda * 0.5, 1e-12);
                accepted = true;
                accepted_loss = trial_loss;
            } else {
                lambda *= 3.0;
                if (lambda > 1e14) break;
            }
        }
        report.loss_history.push_back(accepted_loss);

        if (!accepted || std::abs(lgh.loss - accepted_loss) <= 1e-14 * (1.0 + lgh.loss)) {
            report.converged = true;
            ++iter;
            break;
        }
    }
    report.iterations = iter;
    report.theta_final = theta;
    return report;
}

ParametricMap informed_init(const DiscreteMeasure& data, const Matrix& latents,
                            const LegendreBasis& basis) {
    const int k = basis.latent_dim();
    if (latents.cols() != k) throw InvalidInput("informed_init: latent dim mismatch");
    const PcaResult p = pca(data, k);

    const Vector z_bar = latents.colwise().mean();
    // Tensor feature values: constant feature (1/√2)^k, linear feature
    // √(3/2)·(1/√2)^{k-1} per unit coordinate.
    const double c0 = std::pow(1.0 / std::sqrt(2.0), k);
    const double c1 = std::sqrt(1.5) * std::pow(1.0 / std::sqrt(2.0), k - 1);

    Matrix theta = Matrix::Zero(basis.feature_count(), data.dim());
    theta.row(0) = ((p.mean - p.components * z_bar) / c0).transpose();
    for (int j = 0; j < k; ++j) {
        theta.row(basis.linear_feature_index(j)) = (p.components.col(j) / c1).transpose();
    }
    return ParametricMap(basis, theta, latents);
}

}  // namespace sl

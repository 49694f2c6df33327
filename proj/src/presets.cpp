#include "sl/presets.hpp"

#include <cmath>

#include "sl/rng.hpp"

namespace sl {

DiscreteMeasure gen_uniform_square(int n, std::uint64_t seed) {
    if (n < 1) throw InvalidInput("gen_uniform_square: n >= 1");
    GaussianStream rng(seed);
    Matrix pts(n, 2);
    for (int i = 0; i < n; ++i) {
        pts(i, 0) = 2.0 * rng.uniform() - 1.0;
        pts(i, 1) = 2.0 * rng.uniform() - 1.0;
    }
    return DiscreteMeasure::uniform(pts);
}

namespace {

Matrix sample_gaussian_mixture(const std::vector<Vector>& means,
                               const std::vector<double>& weights, double var, int n,
                               GaussianStream& rng) {
    const int d = static_cast<int>(means.front().size());
    const double sd = std::sqrt(var);
    Matrix pts(n, d);
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        double acc = 0.0;
        size_t comp = weights.size() - 1;
        for (size_t c = 0; c < weights.size(); ++c) {
            acc += weights[c];
            if (u < acc) {
                comp = c;
                break;
            }
        }
        pts.row(i) = (means[comp] + sd * rng.standard_normal(d)).transpose();
    }
    return pts;
}

Vector vec2(double x, double y) {
    Vector v(2);
    v << x, y;
    return v;
}

// Uniform draw from the annulus r0 <= ‖x - center‖ <= r1.
Vector annulus_point(const Vector& center, double r0, double r1, GaussianStream& rng) {
    const double r = std::sqrt(rng.uniform() * (r1 * r1 - r0 * r0) + r0 * r0);
    const double phi = 2.0 * M_PI * rng.uniform();
    return center + vec2(r * std::cos(phi), r * std::sin(phi));
}

}  // namespace

DiscreteMeasure gen_mixture3(int n, std::uint64_t seed) {
    if (n < 1) throw InvalidInput("gen_mixture3: n >= 1");
    GaussianStream rng(seed);
    const std::vector<Vector> means = {vec2(0, 0), vec2(1, 0), vec2(0, 1)};
    const std::vector<double> weights = {0.5, 0.3, 0.2};
    return DiscreteMeasure::uniform(sample_gaussian_mixture(means, weights, 0.1, n, rng));
}

std::pair<DiscreteMeasure, DiscreteMeasure> gen_mixture4_ring(int n, std::uint64_t seed) {
    if (n < 1) throw InvalidInput("gen_mixture4_ring: n >= 1");
    GaussianStream rng(seed);
    Matrix rot(2, 2);
    const double c = 1.0 / std::sqrt(2.0);
    rot << c, -c, c, c;

    std::vector<Vector> mu_means, nu_means;
    Vector a = vec2(4.0, 0.0);
    Vector b = vec2(2.0 * std::sqrt(2.0), 2.0 * std::sqrt(2.0));
    for (int i = 0; i < 4; ++i) {
        a = rot * a;
        b = rot * b;
        mu_means.push_back(a);
        nu_means.push_back(b);
    }
    const std::vector<double> w = {0.25, 0.25, 0.25, 0.25};
    const Matrix mu_pts = sample_gaussian_mixture(mu_means, w, 0.1, n, rng);
    const Matrix nu_pts = sample_gaussian_mixture(nu_means, w, 0.1, n, rng);
    return {DiscreteMeasure::uniform(mu_pts), DiscreteMeasure::uniform(nu_pts)};
}

std::pair<DiscreteMeasure, DiscreteMeasure> gen_annuli(int n, std::uint64_t seed) {
    if (n < 1) throw InvalidInput("gen_annuli: n >= 1");
    GaussianStream rng(seed);
    Matrix mu_pts(n, 2), nu_pts(n, 2);
    const Vector origin = vec2(0, 0);
    const Vector shifted = vec2(0, -4.0);
    for (int i = 0; i < n; ++i) {
        mu_pts.row(i) = annulus_point(origin, 1.5, 2.0, rng).transpose();
        if (rng.uniform() < 0.5) {
            nu_pts.row(i) = annulus_point(origin, 0.5, 1.0, rng).transpose();
        } else {
            nu_pts.row(i) = annulus_point(shifted, 0.2, 0.4, rng).transpose();
        }
    }
    return {DiscreteMeasure::uniform(mu_pts), DiscreteMeasure::uniform(nu_pts)};
}

Vector manifold3d_map(double x, double y) {
    Vector v(3);
    v << std::exp(0.5 * x + y), -std::exp(x - 0.5 * y), x + 2.0 * y * y;
    return v;
}

DiscreteMeasure gen_manifold3d(int n, std::uint64_t seed) {
    if (n < 1) throw InvalidInput("gen_manifold3d: n >= 1");
    GaussianStream rng(seed);
    Matrix pts(n, 3);
    for (int i = 0; i < n; ++i) {
        const double x = 2.0 * rng.uniform() - 1.0;
        const double y = 2.0 * rng.uniform() - 1.0;
        pts.row(i) = manifold3d_map(x, y).transpose();
    }
    return DiscreteMeasure::uniform(pts);
}

}  // namespace sl

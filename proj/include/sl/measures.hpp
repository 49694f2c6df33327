#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sl/linalg.hpp"

namespace sl {

/// Finite-support measure: support points (rows) plus normalized log-weights.
/// Weights live in the log domain so the extreme exponential tilting of the
/// localization dynamics at large t stays representable.
class DiscreteMeasure {
  public:
    // Accepts linear weights (need not be normalized; must be >= 0, sum > 0).
    DiscreteMeasure(const Matrix& points, const Vector& weights);

    // log_weights are normalized via logsumexp. Duplicate support rows are
    // merged by summing weights.
    static DiscreteMeasure from_log_weights(const Matrix& points, const Vector& log_weights);

    static DiscreteMeasure point_mass(const Vector& x);
    static DiscreteMeasure uniform(const Matrix& points);

    int size() const { return static_cast<int>(points_.rows()); }
    int dim() const { return static_cast<int>(points_.cols()); }
    const Matrix& points() const { return points_; }
    const Vector& log_weights() const { return log_weights_; }
    Vector weights() const { return log_weights_.array().exp(); }

  private:
    DiscreteMeasure() = default;
    Matrix points_;
    Vector log_weights_;
};

struct GaussianMeasure {
    Vector mean;
    SymMatrix cov;

    GaussianMeasure(const Vector& m, const SymMatrix& c);
    int dim() const { return static_cast<int>(mean.size()); }
};

struct MomentSummary {
    Vector mean;
    SymMatrix cov;
    double trace_cov = 0.0;
};

// a = Σ w_i x_i, Σ = Σ w_i (x_i - a)(x_i - a)ᵀ
MomentSummary mean_cov(const DiscreteMeasure& m);

// Re-centred mean/cov for a log-weight vector over fixed support points;
// avoids re-validating the measure inside simulation loops.
MomentSummary mean_cov(const Matrix& points, const Vector& log_weights);

// Third centered tensorial moment M³[i,j,k] = Σ w (x-a)_i (x-a)_j (x-a)_k,
// returned as a vector of d symmetric slices M³[·,·,k].
std::vector<SymMatrix> third_moment(const DiscreteMeasure& m);

// n equal-weight i.i.d. draws; deterministic given seed.
DiscreteMeasure discretize_gaussian(const GaussianMeasure& g, int n, std::uint64_t seed);

// Generalized Halton sequence (per-dimension prime bases, 1-based index, no
// scrambling), rescaled to [-1,1]^k. Pure function of (n, k).
Matrix low_discrepancy(int n, int k);

// E‖Z_μ - Z_ν‖² for independent Z_μ ~ μ, Z_ν ~ ν:
// ‖a_μ - a_ν‖² + tr(Σ_μ + Σ_ν). Exact, no sampling.
double independence_cost(const DiscreteMeasure& mu, const DiscreteMeasure& nu);
double independence_cost(const GaussianMeasure& mu, const GaussianMeasure& nu);

struct PcaResult {
    Matrix components;  // d×k, orthonormal columns, descending eigenvalue order
    Vector mean;
    Vector explained_variance;  // top-k covariance eigenvalues
};
PcaResult pca(const DiscreteMeasure& m, int k);

// CSV columns x_1..x_d, weight (linear weights, renormalized on load).
void save_csv(const DiscreteMeasure& m, const std::string& path);
DiscreteMeasure load_measure_csv(const std::string& path);

// JSON object {"mean": [...], "cov": [[...]]}.
void save_json(const GaussianMeasure& g, const std::string& path);
GaussianMeasure load_gaussian_json(const std::string& path);

// logsumexp of a vector (max-shifted).
double logsumexp(const Vector& v);

}  // namespace sl

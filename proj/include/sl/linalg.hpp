#pragma once

#include <Eigen/Dense>

#include "sl/errors.hpp"

namespace sl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Square real symmetric matrix. Symmetrized on construction, so the
/// entries[i][j] == entries[j][i] invariant holds exactly under accumulation
/// of rounding error in products.
class SymMatrix {
  public:
    SymMatrix() = default;

    explicit SymMatrix(const Matrix& m);

    static SymMatrix identity(int dim) { return SymMatrix(Matrix::Identity(dim, dim)); }
    static SymMatrix zero(int dim) { return SymMatrix(Matrix::Zero(dim, dim)); }

    int dim() const { return static_cast<int>(m_.rows()); }
    const Matrix& mat() const { return m_; }
    double operator()(int i, int j) const { return m_(i, j); }
    double trace() const { return m_.trace(); }

  private:
    Matrix m_;
};

struct SpectralDecomposition {
    Vector eigenvalues;   // descending
    Matrix eigenvectors;  // orthonormal columns, matching order

    Matrix reconstruct() const {
        return eigenvectors * eigenvalues.asDiagonal() * eigenvectors.transpose();
    }
};

// Default clip: eigenvalues within 1e-12·max(1, λ_max) of zero are treated as
// exactly zero before powering (floating-point PSD inputs drift slightly negative).
double default_clip_tol(const Vector& eigenvalues);

SpectralDecomposition spectral_decompose(const SymMatrix& s);

// Eigenvalue power with pseudoinverse semantics: eigenvalues in
// [-clip_tol, clip_tol] are zeroed first and 0^p := 0 for p < 0.
// Throws NotPSD if an eigenvalue lies below -clip_tol and p is non-integer.
SymMatrix psd_power(const SymMatrix& s, double p, double clip_tol);

// psd_power with the default clip tolerance.
SymMatrix psd_power(const SymMatrix& s, double p);

// C = (Σ + δ^{1/α}·I)^{-α}; the α = 0 convention returns the identity.
// Spectral norm of the result is bounded by 1/δ.
SymMatrix regularized_control(const SymMatrix& sigma, double alpha, double delta);

// Joint control pair C = (Σ†)^{1/2}, D = Σ^{1/2}·[(Σ^{1/2}ΛΣ^{1/2})†]^{1/2}.
// For δ > 0 each pseudoinverse power (·)^{-1/2} is computed as
// ((·) + δ²·I)^{-1/2}; δ = 0 selects the clip-based pure pseudoinverse.
// D is not symmetric unless Σ and Λ commute, hence the plain Matrix.
struct ExtrapolationControls {
    SymMatrix c;
    Matrix d;
};
ExtrapolationControls extrapolation_control(const SymMatrix& sigma, const SymMatrix& lambda,
                                            double delta);

}  // namespace sl

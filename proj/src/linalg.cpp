#include "sl/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace sl {

SymMatrix::SymMatrix(const Matrix& m) {
    if (m.rows() != m.cols() || m.rows() < 1) {
        throw InvalidInput("SymMatrix: square matrix with dim >= 1 required");
    }
    if (!m.allFinite()) {
        throw InvalidInput("SymMatrix: non-finite entries");
    }
    m_ = 0.5 * (m + m.transpose());
}

double default_clip_tol(const Vector& eigenvalues) {
    const double lmax = eigenvalues.size() ? eigenvalues.cwiseAbs().maxCoeff() : 0.0;
    return 1e-12 * std::max(1.0, lmax);
}

SpectralDecomposition spectral_decompose(const SymMatrix& s) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(s.mat());
    if (solver.info() != Eigen::Success) {
        throw InvalidInput("spectral_decompose: eigensolver failed");
    }
    const int d = s.dim();
    SpectralDecomposition out;
    out.eigenvalues.resize(d);
    out.eigenvectors.resize(d, d);
    // Eigen returns ascending order; flip to descending.
    for (int i = 0; i < d; ++i) {
        out.eigenvalues[i] = solver.eigenvalues()[d - 1 - i];
        out.eigenvectors.col(i) = solver.eigenvectors().col(d - 1 - i);
    }
    return out;
}

namespace {

bool is_integer(double p) { return std::abs(p - std::round(p)) < 1e-12; }

double scalar_power(double lambda, double p) {
    if (lambda == 0.0) {
        return p > 0.0 ? 0.0 : (p < 0.0 ? 0.0 : 1.0);  // 0^p := 0 for p < 0
    }
    return std::pow(lambda, p);
}

}  // namespace

SymMatrix psd_power(const SymMatrix& s, double p, double clip_tol) {
    if (!std::isfinite(p)) throw InvalidInput("psd_power: p must be finite");
    if (clip_tol < 0.0) throw InvalidInput("psd_power: clip_tol must be >= 0");

    SpectralDecomposition eig = spectral_decompose(s);
    Vector lam = eig.eigenvalues;
    for (int i = 0; i < lam.size(); ++i) {
        if (std::abs(lam[i]) <= clip_tol) {
            lam[i] = 0.0;
        } else if (lam[i] < 0.0 && !is_integer(p)) {
            throw NotPSD("psd_power: negative eigenvalue " + std::to_string(lam[i]) +
                         " with non-integer exponent");
        }
        lam[i] = scalar_power(lam[i], p);
    }
    return SymMatrix(eig.eigenvectors * lam.asDiagonal() * eig.eigenvectors.transpose());
}

SymMatrix psd_power(const SymMatrix& s, double p) {
    return psd_power(s, p, default_clip_tol(spectral_decompose(s).eigenvalues));
}

SymMatrix regularized_control(const SymMatrix& sigma, double alpha, double delta) {
    if (delta <= 0.0) throw InvalidInput("regularized_control: delta must be > 0");
    if (alpha < 0.0 || alpha > 1.0) throw InvalidInput("regularized_control: alpha in [0,1]");
    if (alpha == 0.0) return SymMatrix::identity(sigma.dim());

    const double shift = std::pow(delta, 1.0 / alpha);
    SpectralDecomposition eig = spectral_decompose(sigma);
    const double clip = default_clip_tol(eig.eigenvalues);
    Vector lam = eig.eigenvalues;
    for (int i = 0; i < lam.size(); ++i) {
        double l = std::abs(lam[i]) <= clip ? 0.0 : lam[i];
        if (l < 0.0) {
            throw NotPSD("regularized_control: covariance not PSD (eigenvalue " +
                         std::to_string(l) + ")");
        }
        lam[i] = std::pow(l + shift, -alpha);
    }
    return SymMatrix(eig.eigenvectors * lam.asDiagonal() * eig.eigenvectors.transpose());
}

ExtrapolationControls extrapolation_control(const SymMatrix& sigma, const SymMatrix& lambda,
                                            double delta) {
    if (sigma.dim() != lambda.dim()) {
        throw InvalidInput("extrapolation_control: dimension mismatch");
    }
    if (delta < 0.0) throw InvalidInput("extrapolation_control: delta must be >= 0");

    // delta > 0: (X)^{-1/2} computed as (X + δ²I)^{-1/2}; delta == 0: clipped pseudoinverse.
    const double shift = delta * delta;
    const auto inv_sqrt = [&](const SymMatrix& x) -> SymMatrix {
        if (delta > 0.0) {
            const Matrix shifted = x.mat() + shift * Matrix::Identity(x.dim(), x.dim());
            return psd_power(SymMatrix(shifted), -0.5, 0.0);
        }
        return psd_power(x, -0.5);
    };

    ExtrapolationControls out;
    out.c = inv_sqrt(sigma);
    const SymMatrix sigma_half = psd_power(sigma, 0.5);
    const SymMatrix inner = SymMatrix(sigma_half.mat() * lambda.mat() * sigma_half.mat());
    out.d = sigma_half.mat() * inv_sqrt(inner).mat();
    return out;
}

}  // namespace sl

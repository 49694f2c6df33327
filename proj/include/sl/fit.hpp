#pragma once

#include <cstdint>
#include <vector>

#include "sl/joint_sl.hpp"

namespace sl {

/// Tensor products of L²([-1,1])-orthonormal Legendre polynomials,
/// P̃_n = √((2n+1)/2)·P_n. Feature count J = Π(degree_j + 1); multi-indices
/// enumerate with the last latent dimension fastest, so the constant feature
/// is index 0.
struct LegendreBasis {
    std::vector<int> degrees;  // max degree per latent dimension

    explicit LegendreBasis(std::vector<int> degs);
    static LegendreBasis uniform(int latent_dim, int max_degree);

    int latent_dim() const { return static_cast<int>(degrees.size()); }
    int feature_count() const;
    // Index of the feature linear in latent coordinate j (all other degrees 0).
    int linear_feature_index(int j) const;
};

Vector legendre_features(const LegendreBasis& basis, const Vector& z);

/// Pushforward family f(z; θ) = θᵀφ(z), linear in θ, over a fixed latent set.
struct ParametricMap {
    LegendreBasis basis;
    Matrix theta;    // J×d coefficients
    Matrix latents;  // n×k latent points in [-1,1]^k

    ParametricMap(const LegendreBasis& b, const Matrix& th, const Matrix& z);
    int output_dim() const { return static_cast<int>(theta.cols()); }
    Vector evaluate(const Vector& z) const;
    // n×d image of the latent set.
    Matrix image() const;
};

// Uniform weights 1/n on θᵀφ(z_i); exactly duplicate outputs merge.
DiscreteMeasure model_pushforward(const ParametricMap& map);
DiscreteMeasure model_pushforward(const ParametricMap& map, const Matrix& latents);

enum class NoisePolicy { Frozen, ResamplePerIteration };

struct FitConfig {
    int num_traj = 2000;  // trajectories per loss evaluation
    SimConfig sim;
    double alpha = 0.5;
    double delta = 1e-3;
    int max_iter = 20;
    double damping0 = 1e-3;
    NoisePolicy noise = NoisePolicy::ResamplePerIteration;
    int workers = 0;

    void validate() const {
        if (num_traj < 1 || max_iter < 1) throw InvalidInput("FitConfig: M >= 1, max_iter >= 1");
        sim.validate();
    }
};

struct LossEval {
    double loss = 0.0;
    std::vector<int> profile;  // localized latent index per trajectory
};

struct LossGradHess {
    double loss = 0.0;
    Matrix grad;               // J×d
    Matrix hess;               // (J·d)×(J·d), row-major flattening θ[f,l] -> f·d+l
    std::vector<int> profile;  // localized latent index per trajectory
};

// Coupling loss between the data and the model pushforward under the joint
// power-control scheme with common random numbers: per trajectory the squared
// distance between the two localized points, averaged over trajectories.
LossEval fit_loss(const DiscreteMeasure& data, const ParametricMap& map, const FitConfig& cfg,
                  std::uint64_t seed);

// Loss plus the localization-profile gradient 2·φ(z_{i_j})(b-a)ᵀ and the
// Gauss-Newton Hessian 2·(φφᵀ ⊗ I_d), both averaged over trajectories.
// Valid where the localization profile is locally constant in θ.
LossGradHess loss_grad_hess(const DiscreteMeasure& data, const ParametricMap& map,
                            const FitConfig& cfg, std::uint64_t seed);

// Hessian of θ ↦ ‖f(θ) - a‖² for a general map with jacobian jac = Df (d×P)
// and optional per-output-coordinate second derivatives d2f[l] (P×P):
// 2·jacᵀjac + 2·Σ_l residual_l·d2f[l]. The curvature term vanishes for maps
// linear in θ.
Matrix residual_sq_hessian(const Vector& residual, const Matrix& jac,
                           const std::vector<Matrix>& d2f = {});

struct FitReport {
    std::vector<double> loss_history;  // length iterations + 1
    Matrix theta_final;
    int iterations = 0;
    bool converged = false;
};

// Damped Newton on the flattened parameter: solve (H + λI)Δ = -g, accept a
// step when the loss under the iteration's frozen noise decreases, otherwise
// raise λ (×3 reject, ×0.5 accept).
FitReport fit(const DiscreteMeasure& data, const ParametricMap& init, const FitConfig& cfg,
              std::uint64_t seed);

// θ mapping the latent set to the data's top-k principal subspace, matched in
// mean to the data. Needs degree >= 1 in every latent dimension.
ParametricMap informed_init(const DiscreteMeasure& data, const Matrix& latents,
                            const LegendreBasis& basis);

}  // namespace sl

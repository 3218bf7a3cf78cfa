#pragma once
// Predictive distribution of a policy ensemble under a stochastic latent input.
//
// For an observation x: draw N latents z_n ~ q(z|x); for each z_n evaluate all
// M members and collapse their Gaussians into one (inner mixture); collapse the
// N inner results into the final Gaussian (outer mixture). Collapsing uses
// uniform-mixture moment matching, so the nested result equals the flat
// mixture over all N*M components.

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "uqnav/perception.hpp"
#include "uqnav/policy.hpp"
#include "uqnav/rng.hpp"

namespace uqnav::uq {

using policy::GaussianPrediction;

struct PredictiveResult {
    Eigen::VectorXd mean;
    Eigen::VectorXd std;
    Eigen::VectorXd aleatoric_var;  // mean of component variances
    Eigen::VectorXd epistemic_var;  // variance of component means
    std::size_t n_latent = 0;
    std::size_t n_members = 0;
};

/// Moments of the uniform mixture: mean = avg(mu_k),
/// var = avg(var_k + mu_k^2) - mean^2 (evaluated as avg(var_k) + avg((mu_k - mean)^2)).
GaussianPrediction mixture_moments(std::span<const GaussianPrediction> components);

struct UncertaintyDecomposition {
    Eigen::VectorXd aleatoric_var;
    Eigen::VectorXd epistemic_var;
};

UncertaintyDecomposition decompose_uncertainty(std::span<const GaussianPrediction> components);

/// Nested aggregation over a latent x member grid: grid[n][i] is member i's
/// prediction for latent sample n. Every row must have the same length.
PredictiveResult aggregate_grid(const std::vector<std::vector<GaussianPrediction>>& grid);

/// Latent samples z_1..z_N drawn in order from `rng` (a stream prefix is stable
/// as N grows).
Eigen::MatrixXd sample_latents(const perception::LatentDistribution& dist, std::size_t n, Rng& rng);

/// Full procedure: encode, sample N latents, evaluate every member, aggregate.
PredictiveResult predict_stochastic_input(const perception::CmvaeParams& encoder, const policy::EnsembleParams& ensemble,
                                          const perception::Observation& obs, std::size_t n_latent, Rng& rng);

/// Same, starting from an already computed latent distribution.
PredictiveResult predict_from_latent(const perception::LatentDistribution& dist, const policy::EnsembleParams& ensemble,
                                     std::size_t n_latent, Rng& rng);

}  // namespace uqnav::uq

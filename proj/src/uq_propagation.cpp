#include "uqnav/uq_propagation.hpp"

#include <string>

#include "uqnav/errors.hpp"

namespace uqnav::uq {
namespace {

void check_components(std::span<const GaussianPrediction> components, const char* who) {
    if (components.empty()) throw ContractViolation(std::string(who) + ": no components");
    const Eigen::Index dim = components.front().mean.size();
    for (const auto& c : components) {
        if (c.mean.size() != dim || c.variance.size() != dim) {
            throw ContractViolation(std::string(who) + ": components differ in dimension");
        }
        if (!c.mean.allFinite() || !c.variance.allFinite() || (c.variance.array() < 0.0).any()) {
            throw ContractViolation(std::string(who) + ": invalid component");
        }
    }
}

// Running sums in index order.
Eigen::VectorXd mean_of_means(std::span<const GaussianPrediction> components) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(components.front().mean.size());
    for (const auto& c : components) sum += c.mean;
    return sum / static_cast<double>(components.size());
}

}  // namespace

GaussianPrediction mixture_moments(std::span<const GaussianPrediction> components) {
    check_components(components, "mixture_moments");
    const auto d = decompose_uncertainty(components);
    GaussianPrediction out{mean_of_means(components), d.aleatoric_var + d.epistemic_var};
    out.variance = out.variance.cwiseMax(0.0);
    return out;
}

UncertaintyDecomposition decompose_uncertainty(std::span<const GaussianPrediction> components) {
    check_components(components, "decompose_uncertainty");
    const Eigen::Index dim = components.front().mean.size();
    const double inv_k = 1.0 / static_cast<double>(components.size());
    const Eigen::VectorXd mean = mean_of_means(components);
    Eigen::VectorXd var_sum = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd spread_sum = Eigen::VectorXd::Zero(dim);
    for (const auto& c : components) {
        var_sum += c.variance;
        spread_sum += (c.mean - mean).cwiseAbs2();
    }
    return {var_sum * inv_k, spread_sum * inv_k};
}

PredictiveResult aggregate_grid(const std::vector<std::vector<GaussianPrediction>>& grid) {
    if (grid.empty()) throw ContractViolation("aggregate_grid: no latent samples");
    const std::size_t members = grid.front().size();
    if (members == 0) throw ContractViolation("aggregate_grid: no members");

    std::vector<GaussianPrediction> per_latent;
    std::vector<GaussianPrediction> flat;
    per_latent.reserve(grid.size());
    flat.reserve(grid.size() * members);
    for (const auto& row : grid) {
        if (row.size() != members) throw ContractViolation("aggregate_grid: ragged grid");
        per_latent.push_back(mixture_moments(row));
        flat.insert(flat.end(), row.begin(), row.end());
    }
    const GaussianPrediction total = mixture_moments(per_latent);
    auto parts = decompose_uncertainty(flat);

    PredictiveResult r;
    r.mean = total.mean;
    r.std = total.variance.cwiseSqrt();
    r.aleatoric_var = std::move(parts.aleatoric_var);
    r.epistemic_var = std::move(parts.epistemic_var);
    r.n_latent = grid.size();
    r.n_members = members;
    return r;
}

Eigen::MatrixXd sample_latents(const perception::LatentDistribution& dist, std::size_t n, Rng& rng) {
    Eigen::MatrixXd z(dist.mean.size(), static_cast<Eigen::Index>(n));
    for (std::size_t k = 0; k < n; ++k) z.col(static_cast<Eigen::Index>(k)) = perception::reparameterize_sample(dist, rng).z;
    return z;
}

PredictiveResult predict_from_latent(const perception::LatentDistribution& dist, const policy::EnsembleParams& ensemble,
                                     std::size_t n_latent, Rng& rng) {
    if (n_latent == 0) throw ContractViolation("predict_stochastic_input: N must be at least 1");
    if (ensemble.members.empty()) throw ContractViolation("predict_stochastic_input: empty ensemble");
    dist.validate();
    const Eigen::MatrixXd latents = sample_latents(dist, n_latent, rng);

    std::vector<std::vector<GaussianPrediction>> grid(n_latent, std::vector<GaussianPrediction>(ensemble.size()));
    for (std::size_t i = 0; i < ensemble.size(); ++i) {
        auto preds = policy::policy_forward_batch(ensemble.members[i], latents);
        for (std::size_t n = 0; n < n_latent; ++n) grid[n][i] = std::move(preds[n]);
    }
    return aggregate_grid(grid);
}

PredictiveResult predict_stochastic_input(const perception::CmvaeParams& encoder, const policy::EnsembleParams& ensemble,
                                          const perception::Observation& obs, std::size_t n_latent, Rng& rng) {
    if (n_latent == 0) throw ContractViolation("predict_stochastic_input: N must be at least 1");
    return predict_from_latent(perception::encode(encoder, obs), ensemble, n_latent, rng);
}

}  // namespace uqnav::uq

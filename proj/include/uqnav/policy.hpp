#pragma once
// Latent -> velocity-command policies: the heteroscedastic ensemble and the
// deterministic behaviour-cloning baseline. Outputs are in normalized units
// (see VelocityCommand::normalized).

#include <cstddef>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "uqnav/command.hpp"
#include "uqnav/dataset.hpp"
#include "uqnav/perception.hpp"
#include "uqnav/rng.hpp"
#include "uqnav/tensor_nn.hpp"

namespace uqnav::policy {

inline constexpr std::size_t kCommandDim = 4;

struct GaussianPrediction {
    Eigen::VectorXd mean;
    Eigen::VectorXd variance;
};

struct EnsembleParams {
    std::vector<nn::MlpParams> members;

    std::size_t size() const noexcept { return members.size(); }
    /// Non-empty, shared architecture, latent -> 2 * kCommandDim.
    void validate() const;
};

struct BaselinePolicyParams {
    nn::MlpParams net;  // latent -> kCommandDim
};

struct PolicyArchitecture {
    std::size_t latent_dim = perception::kLatentDim;
    std::vector<std::size_t> hidden{64, 64};
};

nn::MlpParams init_member(const PolicyArchitecture& arch, Rng rng);
nn::MlpParams init_baseline(const PolicyArchitecture& arch, Rng rng);

/// variance = exp(clamp(log-variance head, -10, 10)).
GaussianPrediction policy_forward(const nn::MlpParams& member, const perception::LatentSample& z);

/// One prediction per column of `latents`.
std::vector<GaussianPrediction> policy_forward_batch(const nn::MlpParams& member, const Eigen::MatrixXd& latents);

/// Deterministic baseline output (normalized command).
Eigen::VectorXd baseline_forward(const BaselinePolicyParams& baseline, const perception::LatentSample& z);

/// (1/D) sum_d [ 0.5 ln var_d + (y_d - mu_d)^2 / (2 var_d) ].
double heteroscedastic_nll(const GaussianPrediction& pred, const Eigen::Ref<const Eigen::VectorXd>& target);

// ---------------------------------------------------------------------------

struct PolicyTrainConfig {
    PolicyArchitecture architecture;
    nn::AdamConfig adam;
    std::size_t epochs = 40;
    std::size_t batch_size = 64;
    std::size_t min_records = 1000;
    std::size_t threads = 0;  // 0: hardware concurrency
};

struct MemberReport {
    double initial_held_out = 0.0;
    double final_held_out = 0.0;
};

struct EnsembleTrainResult {
    EnsembleParams ensemble;
    std::vector<MemberReport> reports;
};

struct BaselineTrainResult {
    BaselinePolicyParams baseline;
    MemberReport report;  // held-out MSE
};

/// Each member gets its own init seed and data order; every epoch draws a
/// fresh latent sample per example from the frozen encoder.
EnsembleTrainResult train_ensemble(const perception::CmvaeParams& encoder, const Dataset& data, std::size_t members,
                                   const PolicyTrainConfig& config, Rng rng);

/// Single deterministic net, MSE on the mean, one latent sample per example.
BaselineTrainResult train_baseline_bc(const perception::CmvaeParams& encoder, const Dataset& data,
                                      const PolicyTrainConfig& config, Rng rng);

void save_ensemble(const EnsembleParams& ensemble, const std::filesystem::path& dir);
EnsembleParams load_ensemble(const std::filesystem::path& dir, std::size_t members);
std::filesystem::path member_path(const std::filesystem::path& dir, std::size_t index);

}  // namespace uqnav::policy

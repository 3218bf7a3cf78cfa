#pragma once
// Cross-modal VAE perception: image -> latent Gaussian -> (image, gate pose).

#include <cstddef>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "uqnav/dataset.hpp"
#include "uqnav/rng.hpp"
#include "uqnav/tensor_nn.hpp"

namespace uqnav::perception {

inline constexpr std::size_t kImageSide = 16;
inline constexpr std::size_t kObsDim = kImageSide * kImageSide;
inline constexpr std::size_t kLatentDim = 10;
inline constexpr std::size_t kPoseDim = 4;

/// Flattened row-major grayscale image, every pixel in [0, 1].
struct Observation {
    Eigen::VectorXd pixels;

    /// Throws ContractViolation unless the length matches and pixels lie in [0,1].
    void validate(std::size_t expected_dim = kObsDim) const;
};

/// Diagonal Gaussian q(z | x).
struct LatentDistribution {
    Eigen::VectorXd mean;
    Eigen::VectorXd std;

    void validate() const;
};

struct LatentSample {
    Eigen::VectorXd z;
};

/// Pose of the next gate in the drone body frame.
struct GateRelativePose {
    double r = 0.0;      // distance, m
    double theta = 0.0;  // azimuth, rad
    double phi = 0.0;    // elevation, rad
    double psi = 0.0;    // relative gate yaw, rad

    Eigen::Vector4d as_vector() const { return {r, theta, phi, psi}; }
    static GateRelativePose from_vector(const Eigen::Ref<const Eigen::VectorXd>& v) { return {v(0), v(1), v(2), v(3)}; }
};

struct CmvaeArchitecture {
    std::size_t obs_dim = kObsDim;
    std::size_t latent_dim = kLatentDim;
    std::vector<std::size_t> encoder_hidden{128, 64};
    std::vector<std::size_t> decoder_hidden{64, 128};
    std::vector<std::size_t> pose_hidden{32};
};

struct CmvaeParams {
    nn::MlpParams encoder;        // obs -> [mean (L); log-variance (L)]
    nn::MlpParams image_decoder;  // L -> obs logits
    nn::MlpParams pose_head;      // L -> pre-squash pose

    std::size_t obs_dim() const { return encoder.input_dim(); }
    std::size_t latent_dim() const { return encoder.output_dim() / 2; }

    /// Checks the encoder/decoder/pose dimension chain.
    void validate() const;

    static CmvaeParams initialize(const CmvaeArchitecture& arch, Rng rng);
    static CmvaeParams zeros(const CmvaeArchitecture& arch);

    CmvaeParams zeros_like() const;
    bool operator==(const CmvaeParams&) const = default;
};

std::uint64_t checksum(const CmvaeParams& params);

/// Three concatenated UQP1 blocks: encoder, image decoder, pose head.
void save_cmvae(const CmvaeParams& params, const std::filesystem::path& path);
CmvaeParams load_cmvae(const std::filesystem::path& path);

// ---------------------------------------------------------------------------

/// std = exp(0.5 * clamp(log_var, -10, 10)).
LatentDistribution encode(const CmvaeParams& params, const Observation& obs);

/// Batched encode; columns of `observations` are images. Skips per-pixel validation.
std::vector<LatentDistribution> encode_batch(const CmvaeParams& params, const Eigen::MatrixXd& observations);

/// z = mean + std * eps, eps drawn from `rng` one dimension at a time.
LatentSample reparameterize_sample(const LatentDistribution& dist, Rng& rng);

/// 0.5 * sum_d (mu_d^2 + sigma_d^2 - ln sigma_d^2 - 1).
double kl_to_standard_normal(const LatentDistribution& dist);

Observation decode_image(const CmvaeParams& params, const LatentSample& z);
GateRelativePose estimate_gate_pose(const CmvaeParams& params, const LatentSample& z);

/// Pose head squashing: r = softplus, theta/psi = pi*tanh, phi = (pi/2)*tanh.
Eigen::Vector4d squash_pose(const Eigen::Ref<const Eigen::VectorXd>& raw);

// ---------------------------------------------------------------------------
// Training objective

struct CmvaeLossWeights {
    double pose = 1.0;
    double kl_beta = 1e-3;
};

struct CmvaeLossTerms {
    double total = 0.0;
    double image_mse = 0.0;
    double pose_mse = 0.0;
    double kl = 0.0;  // unweighted batch mean
};

struct CmvaeBatch {
    Eigen::MatrixXd observations;  // obs_dim x B
    Eigen::MatrixXd poses;         // 4 x B
};

struct CmvaeGradient {
    CmvaeLossTerms terms;
    CmvaeParams grad;
};

/// total = image_mse + w_pose * pose_mse + beta * kl, one reparameterized
/// sample per example drawn from `rng`.
CmvaeLossTerms cmvae_loss(const CmvaeParams& params, const CmvaeBatch& batch, Rng& rng,
                          const CmvaeLossWeights& weights = {});

/// Same objective with the reparameterization noise supplied (latent_dim x B),
/// plus its gradient with respect to all three networks.
CmvaeGradient cmvae_loss_and_grads(const CmvaeParams& params, const CmvaeBatch& batch, const Eigen::MatrixXd& noise,
                                   const CmvaeLossWeights& weights = {});

struct CmvaeTrainConfig {
    CmvaeArchitecture architecture;
    CmvaeLossWeights weights;
    nn::AdamConfig adam;
    std::size_t epochs = 30;
    std::size_t batch_size = 64;
    std::size_t min_records = 1000;
};

struct CmvaeEpochLog {
    std::size_t epoch = 0;
    CmvaeLossTerms train;  // mean over the epoch's batches
};

struct CmvaeTrainResult {
    CmvaeParams params;
    std::vector<CmvaeEpochLog> log;
    CmvaeLossTerms initial_held_out;
    CmvaeLossTerms final_held_out;
};

/// Builds a batch from dataset rows (widened to double).
CmvaeBatch make_cmvae_batch(const Dataset& data, std::span<const std::size_t> rows);

/// Evaluates the objective over `rows` in fixed-size chunks with noise from `rng`.
CmvaeLossTerms evaluate_cmvae(const CmvaeParams& params, const Dataset& data, std::span<const std::size_t> rows,
                              Rng rng, const CmvaeLossWeights& weights);

/// Mean absolute error of the distance estimate (latent mean -> pose head) over `rows`,
/// and the mean true distance, as {error, mean_distance}.
std::pair<double, double> pose_distance_error(const CmvaeParams& params, const Dataset& data,
                                              std::span<const std::size_t> rows);

/// Trains on the 90% split, reports on the 10% held-out split. Deterministic for a
/// fixed rng; `data` is read-only.
CmvaeTrainResult train_cmvae(const Dataset& data, const CmvaeTrainConfig& config, Rng rng);

}  // namespace uqnav::perception

#include "uqnav/perception.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "uqnav/checkpoint.hpp"
#include "uqnav/errors.hpp"

namespace uqnav::perception {
namespace {

using nn::Activation;

constexpr double kPi = std::numbers::pi;

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<std::size_t> chain(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
    std::vector<std::size_t> dims{in};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(out);
    return dims;
}

std::vector<Activation> relu_then_identity(std::size_t layers) {
    std::vector<Activation> acts(layers, Activation::relu);
    acts.back() = Activation::identity;
    return acts;
}

// Encoder output rows split into mean and clamped log-variance.
struct LatentHeads {
    Eigen::MatrixXd mean;
    Eigen::MatrixXd log_var;  // clamped
    Eigen::MatrixXd std;
};

LatentHeads split_heads(const Eigen::MatrixXd& enc_out, Eigen::Index latent) {
    LatentHeads h;
    h.mean = enc_out.topRows(latent);
    h.log_var = enc_out.bottomRows(latent).cwiseMax(-nn::kLogVarClamp).cwiseMin(nn::kLogVarClamp);
    h.std = (0.5 * h.log_var.array()).exp().matrix();
    return h;
}

}  // namespace

void Observation::validate(std::size_t expected_dim) const {
    if (static_cast<std::size_t>(pixels.size()) != expected_dim) {
        throw ContractViolation("Observation: expected " + std::to_string(expected_dim) + " pixels, got " +
                                std::to_string(pixels.size()));
    }
    for (Eigen::Index i = 0; i < pixels.size(); ++i) {
        const double p = pixels(i);
        if (!(p >= 0.0 && p <= 1.0)) throw ContractViolation("Observation: pixel outside [0,1] or non-finite");
    }
}

void LatentDistribution::validate() const {
    if (mean.size() == 0 || mean.size() != std.size()) throw ContractViolation("LatentDistribution: dimension mismatch");
    if (!mean.allFinite() || !std.allFinite()) throw ContractViolation("LatentDistribution: non-finite entry");
    if ((std.array() <= 0.0).any()) throw ContractViolation("LatentDistribution: non-positive std");
}

void CmvaeParams::validate() const {
    encoder.validate();
    image_decoder.validate();
    pose_head.validate();
    if (encoder.output_dim() % 2 != 0) throw ContractViolation("CmvaeParams: encoder output must be even (mean, log-var)");
    const std::size_t latent = latent_dim();
    if (image_decoder.input_dim() != latent || pose_head.input_dim() != latent) {
        throw ContractViolation("CmvaeParams: decoder/pose head input must equal latent dimension");
    }
    if (image_decoder.output_dim() != obs_dim()) throw ContractViolation("CmvaeParams: decoder must reproduce the image");
    if (pose_head.output_dim() != kPoseDim) throw ContractViolation("CmvaeParams: pose head must emit 4 values");
}

CmvaeParams CmvaeParams::initialize(const CmvaeArchitecture& arch, Rng rng) {
    const auto enc = chain(arch.obs_dim, arch.encoder_hidden, 2 * arch.latent_dim);
    const auto dec = chain(arch.latent_dim, arch.decoder_hidden, arch.obs_dim);
    const auto pose = chain(arch.latent_dim, arch.pose_hidden, kPoseDim);
    return {nn::init_mlp(enc, relu_then_identity(enc.size() - 1), rng.split(1)),
            nn::init_mlp(dec, relu_then_identity(dec.size() - 1), rng.split(2)),
            nn::init_mlp(pose, relu_then_identity(pose.size() - 1), rng.split(3))};
}

CmvaeParams CmvaeParams::zeros(const CmvaeArchitecture& arch) {
    const auto enc = chain(arch.obs_dim, arch.encoder_hidden, 2 * arch.latent_dim);
    const auto dec = chain(arch.latent_dim, arch.decoder_hidden, arch.obs_dim);
    const auto pose = chain(arch.latent_dim, arch.pose_hidden, kPoseDim);
    return {nn::zero_mlp(enc, relu_then_identity(enc.size() - 1)),
            nn::zero_mlp(dec, relu_then_identity(dec.size() - 1)),
            nn::zero_mlp(pose, relu_then_identity(pose.size() - 1))};
}

CmvaeParams CmvaeParams::zeros_like() const {
    return {encoder.zeros_like(), image_decoder.zeros_like(), pose_head.zeros_like()};
}

std::uint64_t checksum(const CmvaeParams& params) {
    return mix64(nn::checksum(params.encoder)) ^ mix64(nn::checksum(params.image_decoder) + 1) ^
           mix64(nn::checksum(params.pose_head) + 2);
}

void save_cmvae(const CmvaeParams& params, const std::filesystem::path& path) {
    params.validate();
    const std::vector<nn::MlpParams> nets{params.encoder, params.image_decoder, params.pose_head};
    nn::save_checkpoints(nets, path);
}

CmvaeParams load_cmvae(const std::filesystem::path& path) {
    auto nets = nn::load_checkpoints(path);
    if (nets.size() != 3) {
        throw nn::CheckpointError(nn::CheckpointError::Kind::dimension_mismatch,
                                  "CM-VAE checkpoint must hold 3 networks, found " + std::to_string(nets.size()));
    }
    CmvaeParams p{std::move(nets[0]), std::move(nets[1]), std::move(nets[2])};
    try {
        p.validate();
    } catch (const ContractViolation& e) {
        throw nn::CheckpointError(nn::CheckpointError::Kind::dimension_mismatch, e.what());
    }
    return p;
}

// ---------------------------------------------------------------------------

LatentDistribution encode(const CmvaeParams& params, const Observation& obs) {
    obs.validate(params.obs_dim());
    auto batch = encode_batch(params, obs.pixels);
    return std::move(batch.front());
}

std::vector<LatentDistribution> encode_batch(const CmvaeParams& params, const Eigen::MatrixXd& observations) {
    const auto latent = static_cast<Eigen::Index>(params.latent_dim());
    const LatentHeads heads = split_heads(nn::forward_batch(params.encoder, observations), latent);
    std::vector<LatentDistribution> out;
    out.reserve(static_cast<std::size_t>(observations.cols()));
    for (Eigen::Index b = 0; b < observations.cols(); ++b) out.push_back({heads.mean.col(b), heads.std.col(b)});
    return out;
}

LatentSample reparameterize_sample(const LatentDistribution& dist, Rng& rng) {
    LatentSample s{Eigen::VectorXd(dist.mean.size())};
    for (Eigen::Index d = 0; d < dist.mean.size(); ++d) s.z(d) = dist.mean(d) + dist.std(d) * rng.normal();
    return s;
}

double kl_to_standard_normal(const LatentDistribution& dist) {
    dist.validate();
    double kl = 0.0;
    for (Eigen::Index d = 0; d < dist.mean.size(); ++d) {
        const double var = dist.std(d) * dist.std(d);
        kl += dist.mean(d) * dist.mean(d) + var - std::log(var) - 1.0;
    }
    return 0.5 * kl;
}

Observation decode_image(const CmvaeParams& params, const LatentSample& z) {
    Eigen::VectorXd logits = nn::mlp_forward(params.image_decoder, z.z);
    return {logits.unaryExpr([](double v) { return logistic(v); })};
}

Eigen::Vector4d squash_pose(const Eigen::Ref<const Eigen::VectorXd>& raw) {
    return {softplus(raw(0)), kPi * std::tanh(raw(1)), 0.5 * kPi * std::tanh(raw(2)), kPi * std::tanh(raw(3))};
}

GateRelativePose estimate_gate_pose(const CmvaeParams& params, const LatentSample& z) {
    return GateRelativePose::from_vector(squash_pose(nn::mlp_forward(params.pose_head, z.z)));
}

// ---------------------------------------------------------------------------

CmvaeGradient cmvae_loss_and_grads(const CmvaeParams& params, const CmvaeBatch& batch, const Eigen::MatrixXd& noise,
                                   const CmvaeLossWeights& weights) {
    const Eigen::Index n = batch.observations.cols();
    const auto latent = static_cast<Eigen::Index>(params.latent_dim());
    if (n == 0) throw ContractViolation("cmvae_loss: empty batch");
    if (batch.poses.cols() != n || batch.poses.rows() != static_cast<Eigen::Index>(kPoseDim)) {
        throw ContractViolation("cmvae_loss: pose targets must be 4 x batch");
    }
    if (noise.rows() != latent || noise.cols() != n) throw ContractViolation("cmvae_loss: noise must be latent x batch");

    const double inv_n = 1.0 / static_cast<double>(n);

    const nn::ForwardTrace enc_trace = nn::forward_trace(params.encoder, batch.observations);
    const Eigen::MatrixXd& enc_out = enc_trace.output();
    const LatentHeads heads = split_heads(enc_out, latent);
    const Eigen::MatrixXd z = heads.mean + heads.std.cwiseProduct(noise);

    // Image branch.
    const nn::ForwardTrace dec_trace = nn::forward_trace(params.image_decoder, z);
    const Eigen::MatrixXd image = dec_trace.output().unaryExpr([](double v) { return logistic(v); });
    const Eigen::MatrixXd image_diff = image - batch.observations;
    const double image_scale = 1.0 / static_cast<double>(image_diff.size());
    const double image_mse = image_diff.squaredNorm() * image_scale;
    const Eigen::MatrixXd d_logits =
        (2.0 * image_scale * image_diff.array() * image.array() * (1.0 - image.array())).matrix();

    // Pose branch.
    const nn::ForwardTrace pose_trace = nn::forward_trace(params.pose_head, z);
    const Eigen::MatrixXd& pose_raw = pose_trace.output();
    Eigen::MatrixXd d_pose_raw(pose_raw.rows(), n);
    const double pose_scale = 1.0 / static_cast<double>(kPoseDim * static_cast<std::size_t>(n));
    double pose_sq = 0.0;
    for (Eigen::Index b = 0; b < n; ++b) {
        const Eigen::Vector4d pose = squash_pose(pose_raw.col(b));
        const Eigen::Vector4d diff = pose - batch.poses.col(b);
        pose_sq += diff.squaredNorm();
        const Eigen::Vector4d dpose = 2.0 * weights.pose * pose_scale * diff;
        const double t1 = std::tanh(pose_raw(1, b));
        const double t2 = std::tanh(pose_raw(2, b));
        const double t3 = std::tanh(pose_raw(3, b));
        d_pose_raw(0, b) = dpose(0) * logistic(pose_raw(0, b));
        d_pose_raw(1, b) = dpose(1) * kPi * (1.0 - t1 * t1);
        d_pose_raw(2, b) = dpose(2) * 0.5 * kPi * (1.0 - t2 * t2);
        d_pose_raw(3, b) = dpose(3) * kPi * (1.0 - t3 * t3);
    }
    const double pose_mse = pose_sq * pose_scale;

    // KL to N(0, I), batch mean.
    const Eigen::ArrayXXd var = heads.log_var.array().exp();
    const double kl = 0.5 * (heads.mean.array().square() + var - heads.log_var.array() - 1.0).sum() * inv_n;

    CmvaeGradient out;
    out.terms = {image_mse + weights.pose * pose_mse + weights.kl_beta * kl, image_mse, pose_mse, kl};
    out.grad = params.zeros_like();

    const Eigen::MatrixXd dz_image = nn::backward(params.image_decoder, dec_trace, d_logits, out.grad.image_decoder);
    const Eigen::MatrixXd dz_pose = nn::backward(params.pose_head, pose_trace, d_pose_raw, out.grad.pose_head);
    const Eigen::MatrixXd dz = dz_image + dz_pose;

    Eigen::MatrixXd d_enc(2 * latent, n);
    d_enc.topRows(latent) = dz + weights.kl_beta * inv_n * heads.mean;
    const Eigen::MatrixXd d_log_var = (dz.array() * noise.array() * 0.5 * heads.std.array() +
                                       weights.kl_beta * inv_n * 0.5 * (var - 1.0))
                                          .matrix();
    const auto raw_log_var = enc_out.bottomRows(latent).array();
    d_enc.bottomRows(latent) =
        ((raw_log_var > -nn::kLogVarClamp) && (raw_log_var < nn::kLogVarClamp)).select(d_log_var.array(), 0.0).matrix();
    nn::backward(params.encoder, enc_trace, d_enc, out.grad.encoder);
    return out;
}

CmvaeLossTerms cmvae_loss(const CmvaeParams& params, const CmvaeBatch& batch, Rng& rng,
                          const CmvaeLossWeights& weights) {
    const Eigen::Index n = batch.observations.cols();
    if (n == 0) throw ContractViolation("cmvae_loss: empty batch");
    const auto latent = static_cast<Eigen::Index>(params.latent_dim());
    Eigen::MatrixXd noise(latent, n);
    for (Eigen::Index b = 0; b < n; ++b) {
        for (Eigen::Index d = 0; d < latent; ++d) noise(d, b) = rng.normal();
    }
    return cmvae_loss_and_grads(params, batch, noise, weights).terms;
}

CmvaeBatch make_cmvae_batch(const Dataset& data, std::span<const std::size_t> rows) {
    CmvaeBatch b{Eigen::MatrixXd(data.obs_dim, rows.size()), Eigen::MatrixXd(data.pose_dim, rows.size())};
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto obs = data.observation(rows[k]);
        const auto pose = data.pose(rows[k]);
        for (std::size_t i = 0; i < obs.size(); ++i) b.observations(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = obs[i];
        for (std::size_t i = 0; i < pose.size(); ++i) b.poses(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = pose[i];
    }
    return b;
}

CmvaeLossTerms evaluate_cmvae(const CmvaeParams& params, const Dataset& data, std::span<const std::size_t> rows,
                              Rng rng, const CmvaeLossWeights& weights) {
    if (rows.empty()) throw ContractViolation("evaluate_cmvae: no rows");
    constexpr std::size_t kChunk = 256;
    CmvaeLossTerms acc;
    for (std::size_t start = 0; start < rows.size(); start += kChunk) {
        const auto chunk = rows.subspan(start, std::min(kChunk, rows.size() - start));
        const CmvaeLossTerms t = cmvae_loss(params, make_cmvae_batch(data, chunk), rng, weights);
        const double w = static_cast<double>(chunk.size());
        acc.total += t.total * w;
        acc.image_mse += t.image_mse * w;
        acc.pose_mse += t.pose_mse * w;
        acc.kl += t.kl * w;
    }
    const double inv = 1.0 / static_cast<double>(rows.size());
    return {acc.total * inv, acc.image_mse * inv, acc.pose_mse * inv, acc.kl * inv};
}

std::pair<double, double> pose_distance_error(const CmvaeParams& params, const Dataset& data,
                                              std::span<const std::size_t> rows) {
    if (rows.empty()) throw ContractViolation("pose_distance_error: no rows");
    const CmvaeBatch batch = make_cmvae_batch(data, rows);
    const auto latent = static_cast<Eigen::Index>(params.latent_dim());
    const Eigen::MatrixXd means = nn::forward_batch(params.encoder, batch.observations).topRows(latent);
    const Eigen::MatrixXd raw = nn::forward_batch(params.pose_head, means);
    double err = 0.0;
    double dist = 0.0;
    for (Eigen::Index b = 0; b < raw.cols(); ++b) {
        err += std::abs(softplus(raw(0, b)) - batch.poses(0, b));
        dist += batch.poses(0, b);
    }
    const double n = static_cast<double>(rows.size());
    return {err / n, dist / n};
}

CmvaeTrainResult train_cmvae(const Dataset& data, const CmvaeTrainConfig& config, Rng rng) {
    if (data.size() < config.min_records) {
        throw ContractViolation("train_cmvae: dataset has " + std::to_string(data.size()) + " records, need at least " +
                                std::to_string(config.min_records));
    }
    if (data.obs_dim != config.architecture.obs_dim) throw ContractViolation("train_cmvae: observation size mismatch");
    if (config.batch_size == 0 || config.epochs == 0) throw ContractViolation("train_cmvae: batch size and epochs must be positive");

    const Split split = split_dataset(data.size());
    CmvaeTrainResult result;
    result.params = CmvaeParams::initialize(config.architecture, rng.split(0));
    const Rng eval_rng = rng.split(1);
    result.initial_held_out = evaluate_cmvae(result.params, data, split.held_out, eval_rng, config.weights);

    nn::AdamState enc_opt = nn::AdamState::for_params(result.params.encoder, config.adam);
    nn::AdamState dec_opt = nn::AdamState::for_params(result.params.image_decoder, config.adam);
    nn::AdamState pose_opt = nn::AdamState::for_params(result.params.pose_head, config.adam);
    const auto latent = static_cast<Eigen::Index>(config.architecture.latent_dim);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        Rng epoch_rng = rng.split({2, epoch});
        std::vector<std::size_t> order = split.train;
        shuffle(std::span<std::size_t>(order), epoch_rng);

        CmvaeLossTerms sum;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const auto rows = std::span<const std::size_t>(order).subspan(start, std::min(config.batch_size, order.size() - start));
            const CmvaeBatch batch = make_cmvae_batch(data, rows);
            Eigen::MatrixXd noise(latent, static_cast<Eigen::Index>(rows.size()));
            for (Eigen::Index b = 0; b < noise.cols(); ++b) {
                for (Eigen::Index d = 0; d < latent; ++d) noise(d, b) = epoch_rng.normal();
            }
            const CmvaeGradient g = cmvae_loss_and_grads(result.params, batch, noise, config.weights);
            nn::adam_step(result.params.encoder, g.grad.encoder, enc_opt);
            nn::adam_step(result.params.image_decoder, g.grad.image_decoder, dec_opt);
            nn::adam_step(result.params.pose_head, g.grad.pose_head, pose_opt);
            sum.total += g.terms.total;
            sum.image_mse += g.terms.image_mse;
            sum.pose_mse += g.terms.pose_mse;
            sum.kl += g.terms.kl;
            ++batches;
        }
        const double inv = 1.0 / static_cast<double>(batches);
        result.log.push_back({epoch + 1, {sum.total * inv, sum.image_mse * inv, sum.pose_mse * inv, sum.kl * inv}});
    }
    result.final_held_out = evaluate_cmvae(result.params, data, split.held_out, eval_rng, config.weights);
    return result;
}

}  // namespace uqnav::perception

#include "uqnav/policy.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "uqnav/checkpoint.hpp"
#include "uqnav/errors.hpp"
#include "uqnav/parallel.hpp"

namespace uqnav::policy {
namespace {

using nn::Activation;

std::vector<std::size_t> dims(const PolicyArchitecture& arch, std::size_t out) {
    std::vector<std::size_t> d{arch.latent_dim};
    d.insert(d.end(), arch.hidden.begin(), arch.hidden.end());
    d.push_back(out);
    return d;
}

// Encoder outputs for every record, computed once.
struct EncodedDataset {
    Eigen::MatrixXd latent_mean;  // L x N
    Eigen::MatrixXd latent_std;   // L x N
    Eigen::MatrixXd targets;      // 4 x N, normalized commands
};

EncodedDataset encode_records(const perception::CmvaeParams& encoder, const Dataset& data) {
    const std::size_t n = data.size();
    const auto latent = static_cast<Eigen::Index>(encoder.latent_dim());
    EncodedDataset out{Eigen::MatrixXd(latent, n), Eigen::MatrixXd(latent, n), Eigen::MatrixXd(kCommandDim, n)};
    constexpr std::size_t kChunk = 512;
    std::vector<std::size_t> rows;
    for (std::size_t start = 0; start < n; start += kChunk) {
        rows.clear();
        for (std::size_t i = start; i < std::min(n, start + kChunk); ++i) rows.push_back(i);
        const auto batch = perception::make_cmvae_batch(data, rows);
        const auto dists = perception::encode_batch(encoder, batch.observations);
        for (std::size_t k = 0; k < rows.size(); ++k) {
            out.latent_mean.col(static_cast<Eigen::Index>(rows[k])) = dists[k].mean;
            out.latent_std.col(static_cast<Eigen::Index>(rows[k])) = dists[k].std;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto cmd = data.command(i);
        const VelocityCommand c{cmd[0], cmd[1], cmd[2], cmd[3]};
        out.targets.col(static_cast<Eigen::Index>(i)) = c.normalized();
    }
    return out;
}

nn::Batch sample_batch(const EncodedDataset& enc, std::span<const std::size_t> rows, Rng& rng) {
    const Eigen::Index latent = enc.latent_mean.rows();
    nn::Batch b{Eigen::MatrixXd(latent, static_cast<Eigen::Index>(rows.size())),
                Eigen::MatrixXd(kCommandDim, static_cast<Eigen::Index>(rows.size()))};
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto col = static_cast<Eigen::Index>(rows[k]);
        const auto kk = static_cast<Eigen::Index>(k);
        for (Eigen::Index d = 0; d < latent; ++d) {
            b.inputs(d, kk) = enc.latent_mean(d, col) + enc.latent_std(d, col) * rng.normal();
        }
        b.targets.col(kk) = enc.targets.col(col);
    }
    return b;
}

double evaluate(const nn::MlpParams& net, const EncodedDataset& enc, std::span<const std::size_t> rows, Rng rng,
                nn::LossKind loss) {
    constexpr std::size_t kChunk = 512;
    double total = 0.0;
    for (std::size_t start = 0; start < rows.size(); start += kChunk) {
        const auto chunk = rows.subspan(start, std::min(kChunk, rows.size() - start));
        const nn::Batch b = sample_batch(enc, chunk, rng);
        total += nn::loss_and_grads(net, b, loss).loss * static_cast<double>(chunk.size());
    }
    return total / static_cast<double>(rows.size());
}

struct TrainedNet {
    nn::MlpParams params;
    MemberReport report;
};

TrainedNet train_single(nn::MlpParams params, const EncodedDataset& enc, const Split& split,
                        const PolicyTrainConfig& config, nn::LossKind loss, Rng order_rng, Rng eval_rng) {
    TrainedNet out;
    out.report.initial_held_out = evaluate(params, enc, split.held_out, eval_rng, loss);
    nn::AdamState opt = nn::AdamState::for_params(params, config.adam);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        Rng epoch_rng = order_rng.split(epoch);
        std::vector<std::size_t> order = split.train;
        shuffle(std::span<std::size_t>(order), epoch_rng);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const auto rows =
                std::span<const std::size_t>(order).subspan(start, std::min(config.batch_size, order.size() - start));
            const nn::Batch b = sample_batch(enc, rows, epoch_rng);
            const nn::LossAndGrad lg = nn::loss_and_grads(params, b, loss);
            nn::adam_step(params, lg.grad, opt);
        }
    }
    out.report.final_held_out = evaluate(params, enc, split.held_out, eval_rng, loss);
    out.params = std::move(params);
    return out;
}

void check_training_inputs(const perception::CmvaeParams& encoder, const Dataset& data, const PolicyTrainConfig& config) {
    if (data.size() < config.min_records) {
        throw ContractViolation("policy training: dataset has " + std::to_string(data.size()) +
                                " records, need at least " + std::to_string(config.min_records));
    }
    if (config.batch_size == 0 || config.epochs == 0) throw ContractViolation("policy training: batch size and epochs must be positive");
    encoder.validate();
    if (encoder.latent_dim() != config.architecture.latent_dim) throw ContractViolation("policy training: latent size mismatch");
}

}  // namespace

void EnsembleParams::validate() const {
    if (members.empty()) throw ContractViolation("EnsembleParams: need at least one member");
    const auto arch = members.front().layer_dims();
    for (const auto& m : members) {
        m.validate();
        if (m.layer_dims() != arch) throw ContractViolation("EnsembleParams: members differ in architecture");
    }
    if (members.front().output_dim() != 2 * kCommandDim) throw ContractViolation("EnsembleParams: members must emit mean and log-variance");
}

nn::MlpParams init_member(const PolicyArchitecture& arch, Rng rng) {
    return nn::init_mlp(dims(arch, 2 * kCommandDim), Activation::relu, Activation::identity, rng);
}

nn::MlpParams init_baseline(const PolicyArchitecture& arch, Rng rng) {
    return nn::init_mlp(dims(arch, kCommandDim), Activation::relu, Activation::identity, rng);
}

std::vector<GaussianPrediction> policy_forward_batch(const nn::MlpParams& member, const Eigen::MatrixXd& latents) {
    if (member.output_dim() != 2 * kCommandDim) throw ContractViolation("policy_forward: member must emit 8 values");
    const Eigen::MatrixXd out = nn::forward_batch(member, latents);
    std::vector<GaussianPrediction> preds;
    preds.reserve(static_cast<std::size_t>(out.cols()));
    for (Eigen::Index b = 0; b < out.cols(); ++b) {
        GaussianPrediction p{out.col(b).head(kCommandDim), Eigen::VectorXd(kCommandDim)};
        for (Eigen::Index d = 0; d < static_cast<Eigen::Index>(kCommandDim); ++d) {
            p.variance(d) = std::exp(std::clamp(out(kCommandDim + d, b), -nn::kLogVarClamp, nn::kLogVarClamp));
        }
        preds.push_back(std::move(p));
    }
    return preds;
}

GaussianPrediction policy_forward(const nn::MlpParams& member, const perception::LatentSample& z) {
    Eigen::MatrixXd column = z.z;
    return std::move(policy_forward_batch(member, column).front());
}

Eigen::VectorXd baseline_forward(const BaselinePolicyParams& baseline, const perception::LatentSample& z) {
    return nn::mlp_forward(baseline.net, z.z);
}

double heteroscedastic_nll(const GaussianPrediction& pred, const Eigen::Ref<const Eigen::VectorXd>& target) {
    if (pred.variance.size() != pred.mean.size()) throw ContractViolation("heteroscedastic_nll: dimension mismatch");
    if (!(pred.variance.array() > 0.0).all()) throw ContractViolation("heteroscedastic_nll: variance must be positive");
    const Eigen::VectorXd log_var = pred.variance.array().log().matrix();
    return nn::heteroscedastic_nll_terms(pred.mean, log_var, target);
}

EnsembleTrainResult train_ensemble(const perception::CmvaeParams& encoder, const Dataset& data, std::size_t members,
                                   const PolicyTrainConfig& config, Rng rng) {
    if (members == 0) throw ContractViolation("train_ensemble: need at least one member");
    check_training_inputs(encoder, data, config);
    const EncodedDataset enc = encode_records(encoder, data);
    const Split split = split_dataset(data.size());
    const Rng eval_rng = rng.split(99);

    std::vector<TrainedNet> trained(members);
    parallel_for(members, config.threads, [&](std::size_t i) {
        trained[i] = train_single(init_member(config.architecture, rng.split({1, i})), enc, split, config,
                                  nn::LossKind::heteroscedastic_nll, rng.split({2, i}), eval_rng);
    });

    EnsembleTrainResult result;
    for (auto& t : trained) {
        result.ensemble.members.push_back(std::move(t.params));
        result.reports.push_back(t.report);
    }
    return result;
}

BaselineTrainResult train_baseline_bc(const perception::CmvaeParams& encoder, const Dataset& data,
                                      const PolicyTrainConfig& config, Rng rng) {
    check_training_inputs(encoder, data, config);
    const EncodedDataset enc = encode_records(encoder, data);
    const Split split = split_dataset(data.size());
    TrainedNet t = train_single(init_baseline(config.architecture, rng.split(1)), enc, split, config, nn::LossKind::mse,
                                rng.split(2), rng.split(99));
    return {{std::move(t.params)}, t.report};
}

std::filesystem::path member_path(const std::filesystem::path& dir, std::size_t index) {
    return dir / ("member_" + std::to_string(index) + ".uqp");
}

void save_ensemble(const EnsembleParams& ensemble, const std::filesystem::path& dir) {
    ensemble.validate();
    for (std::size_t i = 0; i < ensemble.size(); ++i) nn::save_checkpoint(ensemble.members[i], member_path(dir, i));
}

EnsembleParams load_ensemble(const std::filesystem::path& dir, std::size_t members) {
    EnsembleParams e;
    for (std::size_t i = 0; i < members; ++i) {
        const auto path = member_path(dir, i);
        if (!std::filesystem::exists(path)) throw MissingArtifact(path.string());
        e.members.push_back(nn::load_checkpoint(path));
    }
    e.validate();
    return e;
}

}  // namespace uqnav::policy

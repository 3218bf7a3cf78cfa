#pragma once
// Small dense-network engine: sequential MLPs, reverse-mode gradients, Adam.
//
// Column convention: a batch is a matrix whose columns are examples, so a
// layer maps (in_dim x B) to (out_dim x B) as W * X + b.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "uqnav/rng.hpp"

namespace uqnav::nn {

enum class Activation : std::uint8_t { identity = 0, relu = 1, tanh = 2 };

std::string_view to_string(Activation a) noexcept;

struct DenseLayer {
    Eigen::MatrixXd weights;  // out x in
    Eigen::VectorXd bias;     // out
    Activation activation = Activation::identity;

    std::size_t in_dim() const noexcept { return static_cast<std::size_t>(weights.cols()); }
    std::size_t out_dim() const noexcept { return static_cast<std::size_t>(weights.rows()); }
};

struct MlpParams {
    std::vector<DenseLayer> layers;

    /// Layer widths including the input: {in, h1, ..., out}.
    std::vector<std::size_t> layer_dims() const;
    std::size_t input_dim() const;
    std::size_t output_dim() const;
    std::size_t parameter_count() const;

    /// Same architecture, every value zero. Used as a gradient accumulator.
    MlpParams zeros_like() const;

    /// Throws ContractViolation on inconsistent shapes or non-finite values.
    void validate() const;

    MlpParams& operator+=(const MlpParams& other);
    MlpParams& operator*=(double s);

    bool operator==(const MlpParams& other) const;
};

/// Architecture with all weights and biases zero.
MlpParams zero_mlp(std::span<const std::size_t> dims, std::span<const Activation> activations);

/// He-uniform weights for relu layers, Xavier-uniform for tanh/identity, zero biases.
MlpParams init_mlp(std::span<const std::size_t> dims, std::span<const Activation> activations, Rng rng);

/// Convenience: every hidden layer uses `hidden`, the last layer `output`.
MlpParams init_mlp(std::span<const std::size_t> dims, Activation hidden, Activation output, Rng rng);

/// Order-sensitive 64-bit checksum of architecture and raw parameter bits.
std::uint64_t checksum(const MlpParams& params);

/// Rounds every value to the nearest float, matching checkpoint storage.
void round_to_storage_precision(MlpParams& params);

// ---------------------------------------------------------------------------
// Forward / backward

/// Per-layer values kept for the backward pass.
struct ForwardTrace {
    std::vector<Eigen::MatrixXd> inputs;       // inputs[l] feeds layer l
    std::vector<Eigen::MatrixXd> activations;  // activations[l] is layer l's output

    const Eigen::MatrixXd& output() const { return activations.back(); }
};

/// Batched forward pass. Throws ContractViolation on dimension mismatch,
/// NonFiniteError (with layer index) if any value becomes non-finite.
Eigen::MatrixXd forward_batch(const MlpParams& params, const Eigen::MatrixXd& inputs);

ForwardTrace forward_trace(const MlpParams& params, const Eigen::MatrixXd& inputs);

/// Reverse pass. `grad_output` is dL/d(output), same shape as trace.output().
/// Adds parameter gradients into `grads` and returns dL/d(input).
Eigen::MatrixXd backward(const MlpParams& params, const ForwardTrace& trace, const Eigen::MatrixXd& grad_output,
                         MlpParams& grads);

/// Single-example forward pass; runs the batched path on one column.
Eigen::VectorXd mlp_forward(const MlpParams& params, const Eigen::VectorXd& input);

// ---------------------------------------------------------------------------
// Losses

/// Log-variance heads are clamped to [-kLogVarClamp, kLogVarClamp].
inline constexpr double kLogVarClamp = 10.0;

enum class LossKind { mse, heteroscedastic_nll, cmvae_composite };

/// Parses "mse", "heteroscedastic_nll", "cmvae_composite"; throws on anything else.
LossKind parse_loss_kind(std::string_view name);

struct Batch {
    Eigen::MatrixXd inputs;   // in_dim x B
    Eigen::MatrixXd targets;  // target_dim x B
};

struct LossAndGrad {
    double loss = 0.0;
    MlpParams grad;
};

/// Batch-mean loss and its gradient with respect to every parameter.
///
/// mse: mean over batch and output dims of (y - t)^2.
/// heteroscedastic_nll: output rows are [means (D); log-variances (D)] with
/// D = target rows; loss is the batch mean of heteroscedastic_nll_terms.
/// cmvae_composite spans three networks and is served by
/// perception::cmvae_loss_and_grads; passing it here is a ContractViolation.
LossAndGrad loss_and_grads(const MlpParams& params, const Batch& batch, LossKind loss);

/// (1/D) sum_d [ 0.5 s_d + (y_d - mu_d)^2 / (2 exp(s_d)) ] for one example,
/// where s is the (already clamped) log-variance.
double heteroscedastic_nll_terms(const Eigen::Ref<const Eigen::VectorXd>& mean,
                                 const Eigen::Ref<const Eigen::VectorXd>& log_var,
                                 const Eigen::Ref<const Eigen::VectorXd>& target);

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    AdamConfig config;
    MlpParams first_moment;
    MlpParams second_moment;
    std::uint64_t step_count = 0;

    static AdamState for_params(const MlpParams& params, AdamConfig config = {});
};

/// One bias-corrected Adam update in place. Throws ContractViolation if the
/// gradient or state is not shape-congruent with `params`.
void adam_step(MlpParams& params, const MlpParams& grads, AdamState& state);

}  // namespace uqnav::nn

#include "uqnav/tensor_nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "uqnav/errors.hpp"

namespace uqnav::nn {
namespace {

void check_congruent(const MlpParams& a, const MlpParams& b, const char* what) {
    if (a.layers.size() != b.layers.size()) {
        throw ContractViolation(std::string(what) + ": layer count mismatch");
    }
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        if (a.layers[l].weights.rows() != b.layers[l].weights.rows() ||
            a.layers[l].weights.cols() != b.layers[l].weights.cols() ||
            a.layers[l].bias.size() != b.layers[l].bias.size()) {
            throw ContractViolation(std::string(what) + ": shape mismatch at layer " + std::to_string(l));
        }
    }
}

void apply_activation(Activation act, Eigen::MatrixXd& m) {
    switch (act) {
        case Activation::identity:
            break;
        case Activation::relu:
            m = m.cwiseMax(0.0);
            break;
        case Activation::tanh:
            m = m.array().tanh().matrix();
            break;
    }
}

// Multiplies `grad` in place by the activation derivative, expressed through
// the activation output (valid for all three supported activations).
void activation_backward(Activation act, const Eigen::MatrixXd& out, Eigen::MatrixXd& grad) {
    switch (act) {
        case Activation::identity:
            break;
        case Activation::relu:
            grad = (out.array() > 0.0).select(grad, 0.0);
            break;
        case Activation::tanh:
            grad.array() *= 1.0 - out.array().square();
            break;
    }
}

double clamp_log_var(double s) { return std::clamp(s, -kLogVarClamp, kLogVarClamp); }

}  // namespace

std::string_view to_string(Activation a) noexcept {
    switch (a) {
        case Activation::identity:
            return "identity";
        case Activation::relu:
            return "relu";
        case Activation::tanh:
            return "tanh";
    }
    return "unknown";
}

std::vector<std::size_t> MlpParams::layer_dims() const {
    std::vector<std::size_t> dims;
    if (layers.empty()) return dims;
    dims.push_back(layers.front().in_dim());
    for (const auto& layer : layers) dims.push_back(layer.out_dim());
    return dims;
}

std::size_t MlpParams::input_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }

std::size_t MlpParams::output_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

std::size_t MlpParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers) n += static_cast<std::size_t>(layer.weights.size() + layer.bias.size());
    return n;
}

MlpParams MlpParams::zeros_like() const {
    MlpParams z;
    z.layers.reserve(layers.size());
    for (const auto& layer : layers) {
        z.layers.push_back({Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()),
                            Eigen::VectorXd::Zero(layer.bias.size()), layer.activation});
    }
    return z;
}

void MlpParams::validate() const {
    if (layers.empty()) throw ContractViolation("MlpParams: no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        if (layer.weights.rows() == 0 || layer.weights.cols() == 0) {
            throw ContractViolation("MlpParams: empty layer " + std::to_string(l));
        }
        if (layer.bias.size() != layer.weights.rows()) {
            throw ContractViolation("MlpParams: bias length mismatch at layer " + std::to_string(l));
        }
        if (l > 0 && layer.in_dim() != layers[l - 1].out_dim()) {
            throw ContractViolation("MlpParams: dimension chain broken at layer " + std::to_string(l));
        }
        if (!layer.weights.allFinite() || !layer.bias.allFinite()) {
            throw ContractViolation("MlpParams: non-finite value at layer " + std::to_string(l));
        }
    }
}

MlpParams& MlpParams::operator+=(const MlpParams& other) {
    check_congruent(*this, other, "MlpParams +=");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        layers[l].weights += other.layers[l].weights;
        layers[l].bias += other.layers[l].bias;
    }
    return *this;
}

MlpParams& MlpParams::operator*=(double s) {
    for (auto& layer : layers) {
        layer.weights *= s;
        layer.bias *= s;
    }
    return *this;
}

bool MlpParams::operator==(const MlpParams& other) const {
    if (layers.size() != other.layers.size()) return false;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& a = layers[l];
        const auto& b = other.layers[l];
        if (a.activation != b.activation || a.weights.rows() != b.weights.rows() ||
            a.weights.cols() != b.weights.cols() || a.bias.size() != b.bias.size()) {
            return false;
        }
        if (a.weights != b.weights || a.bias != b.bias) return false;
    }
    return true;
}

MlpParams zero_mlp(std::span<const std::size_t> dims, std::span<const Activation> activations) {
    if (dims.size() < 2) throw ContractViolation("zero_mlp: need at least input and output width");
    if (activations.size() != dims.size() - 1) {
        throw ContractViolation("zero_mlp: need one activation per layer");
    }
    MlpParams p;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        if (dims[l] == 0 || dims[l + 1] == 0) throw ContractViolation("zero_mlp: zero width");
        const auto in = static_cast<Eigen::Index>(dims[l]);
        const auto out = static_cast<Eigen::Index>(dims[l + 1]);
        p.layers.push_back({Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out), activations[l]});
    }
    return p;
}

MlpParams init_mlp(std::span<const std::size_t> dims, std::span<const Activation> activations, Rng rng) {
    MlpParams p = zero_mlp(dims, activations);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        auto& layer = p.layers[l];
        const double fan_in = static_cast<double>(layer.in_dim());
        const double fan_out = static_cast<double>(layer.out_dim());
        const double limit = layer.activation == Activation::relu ? std::sqrt(6.0 / fan_in)
                                                                  : std::sqrt(6.0 / (fan_in + fan_out));
        Rng layer_rng = rng.split(l);
        // Row-major draw order.
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
                layer.weights(r, c) = layer_rng.uniform(-limit, limit);
            }
        }
    }
    return p;
}

MlpParams init_mlp(std::span<const std::size_t> dims, Activation hidden, Activation output, Rng rng) {
    if (dims.size() < 2) throw ContractViolation("init_mlp: need at least input and output width");
    std::vector<Activation> acts(dims.size() - 1, hidden);
    acts.back() = output;
    return init_mlp(dims, acts, rng);
}

std::uint64_t checksum(const MlpParams& params) {
    // FNV-1a over 64-bit words.
    std::uint64_t h = 0xCBF29CE484222325ULL;
    auto feed = [&h](std::uint64_t word) {
        for (int i = 0; i < 8; ++i) {
            h ^= (word >> (8 * i)) & 0xFFu;
            h *= 0x100000001B3ULL;
        }
    };
    feed(params.layers.size());
    for (const auto& layer : params.layers) {
        feed(layer.in_dim());
        feed(layer.out_dim());
        feed(static_cast<std::uint64_t>(layer.activation));
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) feed(std::bit_cast<std::uint64_t>(layer.weights(r, c)));
        }
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) feed(std::bit_cast<std::uint64_t>(layer.bias(i)));
    }
    return h;
}

void round_to_storage_precision(MlpParams& params) {
    for (auto& layer : params.layers) {
        layer.weights = layer.weights.cast<float>().cast<double>();
        layer.bias = layer.bias.cast<float>().cast<double>();
    }
}

// ---------------------------------------------------------------------------

ForwardTrace forward_trace(const MlpParams& params, const Eigen::MatrixXd& inputs) {
    if (params.layers.empty()) throw ContractViolation("forward: network has no layers");
    if (static_cast<std::size_t>(inputs.rows()) != params.input_dim()) {
        throw ContractViolation("forward: input length " + std::to_string(inputs.rows()) + " != " +
                                std::to_string(params.input_dim()));
    }
    if (!inputs.allFinite()) throw ContractViolation("forward: non-finite input");

    ForwardTrace trace;
    trace.inputs.reserve(params.layers.size());
    trace.activations.reserve(params.layers.size());
    const Eigen::MatrixXd* x = &inputs;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const auto& layer = params.layers[l];
        trace.inputs.push_back(*x);
        Eigen::MatrixXd h = layer.weights * *x;
        h.colwise() += layer.bias;
        if (!h.allFinite()) throw NonFiniteError(l, "forward: non-finite pre-activation");
        apply_activation(layer.activation, h);
        if (!h.allFinite()) throw NonFiniteError(l, "forward: non-finite activation");
        trace.activations.push_back(std::move(h));
        x = &trace.activations.back();
    }
    return trace;
}

Eigen::MatrixXd forward_batch(const MlpParams& params, const Eigen::MatrixXd& inputs) {
    if (params.layers.empty()) throw ContractViolation("forward: network has no layers");
    if (static_cast<std::size_t>(inputs.rows()) != params.input_dim()) {
        throw ContractViolation("forward: input length " + std::to_string(inputs.rows()) + " != " +
                                std::to_string(params.input_dim()));
    }
    if (!inputs.allFinite()) throw ContractViolation("forward: non-finite input");

    Eigen::MatrixXd x = inputs;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const auto& layer = params.layers[l];
        Eigen::MatrixXd h = layer.weights * x;
        h.colwise() += layer.bias;
        if (!h.allFinite()) throw NonFiniteError(l, "forward: non-finite pre-activation");
        apply_activation(layer.activation, h);
        if (!h.allFinite()) throw NonFiniteError(l, "forward: non-finite activation");
        x = std::move(h);
    }
    return x;
}

Eigen::VectorXd mlp_forward(const MlpParams& params, const Eigen::VectorXd& input) {
    Eigen::MatrixXd column = input;
    return forward_batch(params, column).col(0);
}

Eigen::MatrixXd backward(const MlpParams& params, const ForwardTrace& trace, const Eigen::MatrixXd& grad_output,
                         MlpParams& grads) {
    check_congruent(params, grads, "backward");
    if (trace.activations.size() != params.layers.size()) throw ContractViolation("backward: trace/params mismatch");
    if (grad_output.rows() != trace.output().rows() || grad_output.cols() != trace.output().cols()) {
        throw ContractViolation("backward: grad_output shape mismatch");
    }
    Eigen::MatrixXd delta = grad_output;
    for (std::size_t l = params.layers.size(); l-- > 0;) {
        const auto& layer = params.layers[l];
        activation_backward(layer.activation, trace.activations[l], delta);
        grads.layers[l].weights.noalias() += delta * trace.inputs[l].transpose();
        grads.layers[l].bias.noalias() += delta.rowwise().sum();
        Eigen::MatrixXd upstream = layer.weights.transpose() * delta;
        if (!upstream.allFinite()) throw NonFiniteError(l, "backward: non-finite gradient");
        delta = std::move(upstream);
    }
    return delta;
}

// ---------------------------------------------------------------------------

LossKind parse_loss_kind(std::string_view name) {
    if (name == "mse") return LossKind::mse;
    if (name == "heteroscedastic_nll") return LossKind::heteroscedastic_nll;
    if (name == "cmvae_composite") return LossKind::cmvae_composite;
    throw ContractViolation("unknown loss tag: " + std::string(name));
}

double heteroscedastic_nll_terms(const Eigen::Ref<const Eigen::VectorXd>& mean,
                                 const Eigen::Ref<const Eigen::VectorXd>& log_var,
                                 const Eigen::Ref<const Eigen::VectorXd>& target) {
    if (mean.size() != target.size() || log_var.size() != target.size() || target.size() == 0) {
        throw ContractViolation("heteroscedastic_nll: dimension mismatch");
    }
    double sum = 0.0;
    for (Eigen::Index d = 0; d < target.size(); ++d) {
        const double e = target(d) - mean(d);
        sum += 0.5 * log_var(d) + e * e / (2.0 * std::exp(log_var(d)));
    }
    return sum / static_cast<double>(target.size());
}

LossAndGrad loss_and_grads(const MlpParams& params, const Batch& batch, LossKind loss) {
    const Eigen::Index n = batch.inputs.cols();
    if (n == 0) throw ContractViolation("loss_and_grads: empty batch");
    if (batch.targets.cols() != n) throw ContractViolation("loss_and_grads: inputs/targets count mismatch");
    if (!batch.targets.allFinite()) throw ContractViolation("loss_and_grads: non-finite target");

    const ForwardTrace trace = forward_trace(params, batch.inputs);
    const Eigen::MatrixXd& out = trace.output();
    Eigen::MatrixXd grad_out(out.rows(), out.cols());
    double total = 0.0;

    switch (loss) {
        case LossKind::mse: {
            if (out.rows() != batch.targets.rows()) throw ContractViolation("mse: target dimension mismatch");
            const Eigen::MatrixXd diff = out - batch.targets;
            const double scale = 1.0 / static_cast<double>(diff.size());
            total = diff.squaredNorm() * scale;
            grad_out = 2.0 * scale * diff;
            break;
        }
        case LossKind::heteroscedastic_nll: {
            const Eigen::Index d = batch.targets.rows();
            if (out.rows() != 2 * d) throw ContractViolation("heteroscedastic_nll: output must be 2x target dim");
            const double scale = 1.0 / static_cast<double>(d * n);
            for (Eigen::Index b = 0; b < n; ++b) {
                for (Eigen::Index k = 0; k < d; ++k) {
                    const double raw = out(d + k, b);
                    const double s = clamp_log_var(raw);
                    const double inv_var = std::exp(-s);
                    const double e = batch.targets(k, b) - out(k, b);
                    total += (0.5 * s + 0.5 * e * e * inv_var) * scale;
                    grad_out(k, b) = -e * inv_var * scale;
                    const bool active = raw > -kLogVarClamp && raw < kLogVarClamp;
                    grad_out(d + k, b) = active ? (0.5 - 0.5 * e * e * inv_var) * scale : 0.0;
                }
            }
            break;
        }
        case LossKind::cmvae_composite:
            throw ContractViolation(
                "cmvae_composite spans encoder, decoder and pose head; use perception::cmvae_loss_and_grads");
    }

    LossAndGrad result{total, params.zeros_like()};
    backward(params, trace, grad_out, result.grad);
    return result;
}

// ---------------------------------------------------------------------------

AdamState AdamState::for_params(const MlpParams& params, AdamConfig config) {
    return AdamState{config, params.zeros_like(), params.zeros_like(), 0};
}

void adam_step(MlpParams& params, const MlpParams& grads, AdamState& state) {
    check_congruent(params, grads, "adam_step");
    check_congruent(params, state.first_moment, "adam_step (first moment)");
    check_congruent(params, state.second_moment, "adam_step (second moment)");

    const auto& cfg = state.config;
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double correction1 = 1.0 - std::pow(cfg.beta1, t);
    const double correction2 = 1.0 - std::pow(cfg.beta2, t);

    auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        p.array() -= cfg.learning_rate * (m.array() / correction1) /
                     ((v.array() / correction2).sqrt() + cfg.epsilon);
    };
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        update(params.layers[l].weights, grads.layers[l].weights, state.first_moment.layers[l].weights,
               state.second_moment.layers[l].weights);
        update(params.layers[l].bias, grads.layers[l].bias, state.first_moment.layers[l].bias,
               state.second_moment.layers[l].bias);
    }
}

}  // namespace uqnav::nn

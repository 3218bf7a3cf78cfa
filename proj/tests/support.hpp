#pragma once
// Shared oracles for the test binaries.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>

#include "uqnav/gate_sim.hpp"
#include "uqnav/perception.hpp"
#include "uqnav/policy.hpp"
#include "uqnav/tensor_nn.hpp"

namespace uqnav::testing {

/// |a - f| / max(|a|, |f|, floor).
inline double relative_error(double analytic, double numeric, double floor = 1e-4) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Visits every scalar of `params` (weights row-major, then biases, per layer).
template <typename Fn>
void for_each_parameter(nn::MlpParams& params, Fn&& fn) {
    for (auto& layer : params.layers) {
        for (Eigen::Index i = 0; i < layer.weights.rows(); ++i) {
            for (Eigen::Index j = 0; j < layer.weights.cols(); ++j) fn(layer.weights(i, j));
        }
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) fn(layer.bias(i));
    }
}

struct FdReport {
    double max_rel_error = 0.0;
    std::size_t entries = 0;
};

/// Central differences of `loss` with respect to every entry of `target`,
/// compared against the matching entries of `analytic`.
inline FdReport finite_difference_check(nn::MlpParams& target, const nn::MlpParams& analytic,
                                        const std::function<double()>& loss, double eps = 1e-5) {
    std::vector<double> grads;
    nn::MlpParams copy = analytic;
    for_each_parameter(copy, [&](double& g) { grads.push_back(g); });
    FdReport report;
    std::size_t k = 0;
    for_each_parameter(target, [&](double& w) {
        const double saved = w;
        w = saved + eps;
        const double up = loss();
        w = saved - eps;
        const double down = loss();
        w = saved;
        const double numeric = (up - down) / (2.0 * eps);
        report.max_rel_error = std::max(report.max_rel_error, relative_error(grads[k], numeric));
        ++k;
        ++report.entries;
    });
    return report;
}

/// Glorot-initialised net with biases drawn from U(-0.3, 0.3).
inline nn::MlpParams random_net(std::span<const std::size_t> dims, nn::Activation hidden, nn::Activation out,
                                std::uint64_t seed) {
    nn::MlpParams p = nn::init_mlp(dims, hidden, out, Rng(seed));
    Rng r = Rng(seed).split(77);
    for (auto& l : p.layers) {
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = r.uniform(-0.3, 0.3);
    }
    return p;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& r, double lo = -1.0, double hi = 1.0) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = r.uniform(lo, hi);
    }
    return m;
}

inline void jitter_biases(nn::MlpParams& p, Rng& r) {
    for (auto& l : p.layers) {
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = r.uniform(-0.3, 0.3);
    }
}

/// 6-pixel observations, 3-d latent, one small hidden layer per network.
inline perception::CmvaeArchitecture tiny_arch() {
    perception::CmvaeArchitecture a;
    a.obs_dim = 6;
    a.latent_dim = 3;
    a.encoder_hidden = {5};
    a.decoder_hidden = {4};
    a.pose_hidden = {4};
    return a;
}

inline perception::CmvaeBatch tiny_batch(Rng& r, Eigen::Index n) {
    perception::CmvaeBatch b{Eigen::MatrixXd(6, n), Eigen::MatrixXd(4, n)};
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < 6; ++i) b.observations(i, j) = r.uniform();
        b.poses(0, j) = r.uniform(0.5, 8.0);
        b.poses(1, j) = r.uniform(-1.0, 1.0);
        b.poses(2, j) = r.uniform(-0.5, 0.5);
        b.poses(3, j) = r.uniform(-1.0, 1.0);
    }
    return b;
}

inline policy::GaussianPrediction random_component(Rng& r, Eigen::Index dim) {
    policy::GaussianPrediction c{Eigen::VectorXd(dim), Eigen::VectorXd(dim)};
    for (Eigen::Index d = 0; d < dim; ++d) {
        c.mean(d) = r.uniform(-3.0, 3.0);
        c.variance(d) = r.uniform(0.01, 2.0);
    }
    return c;
}

/// Samples the segment densely and classifies the first sign change.
inline sim::GateEvent sampled_gate_event(const sim::DroneState& a, const sim::DroneState& b, const sim::Gate& g,
                                         int samples = 10000) {
    const Eigen::Vector3d n = g.normal();
    auto point = [&](int k) { return a.position + (b.position - a.position) * (static_cast<double>(k) / samples); };
    if (!(n.dot(point(0) - g.center) < 0.0)) return sim::GateEvent::none;
    for (int k = 1; k <= samples; ++k) {
        const Eigen::Vector3d rel = point(k) - g.center;
        if (n.dot(rel) >= 0.0) {
            const double u = g.lateral_axis().dot(rel);
            return (std::abs(u) <= g.half_aperture && std::abs(rel.z()) <= g.half_aperture) ? sim::GateEvent::traversed
                                                                                             : sim::GateEvent::missed;
        }
    }
    return sim::GateEvent::none;
}

/// Random gate and segment endpoints around it; returns disagreements with the oracle.
inline int gate_event_disagreements(int cases, Rng r) {
    int disagreements = 0;
    for (int i = 0; i < cases; ++i) {
        const sim::Gate g{{r.uniform(-3, 3), r.uniform(-3, 3), r.uniform(0.5, 3)}, r.uniform(-3.14159, 3.14159), 0.75};
        auto random_point = [&] {
            return Eigen::Vector3d(g.center + Eigen::Vector3d(r.uniform(-2, 2), r.uniform(-2, 2), r.uniform(-1.5, 1.5)));
        };
        sim::DroneState a, b;
        a.position = random_point();
        b.position = random_point();
        if (sim::check_gate_event(a, b, g) != sampled_gate_event(a, b, g)) ++disagreements;
    }
    return disagreements;
}

}  // namespace uqnav::testing

#include <array>
#include <cmath>

#include "doctest.h"

#include "support.hpp"
#include "uqnav/errors.hpp"
#include "uqnav/tensor_nn.hpp"

using namespace uqnav;
using namespace uqnav::nn;

TEST_CASE("zero network maps any input to zero") {
    const std::array<std::size_t, 3> dims{3, 5, 2};
    const std::array<Activation, 2> acts{Activation::relu, Activation::identity};
    const MlpParams p = zero_mlp(dims, acts);
    const Eigen::VectorXd y = mlp_forward(p, Eigen::Vector3d(1.5, -2.0, 7.0));
    CHECK(y.size() == 2);
    CHECK(y.isZero(0.0));
}

TEST_CASE("identity linear layer passes the input through") {
    const std::array<std::size_t, 2> dims{2, 2};
    const std::array<Activation, 1> acts{Activation::identity};
    MlpParams p = zero_mlp(dims, acts);
    p.layers[0].weights = Eigen::Matrix2d::Identity();
    const Eigen::VectorXd y = mlp_forward(p, Eigen::Vector2d(1.0, 2.0));
    CHECK(y(0) == 1.0);
    CHECK(y(1) == 2.0);
}

TEST_CASE("hand-computed 1-2-1 tanh network") {
    const std::array<std::size_t, 3> dims{1, 2, 1};
    const std::array<Activation, 2> acts{Activation::tanh, Activation::identity};
    MlpParams p = zero_mlp(dims, acts);
    p.layers[0].weights << 0.5, -1.0;
    p.layers[0].bias << 0.1, 0.2;
    p.layers[1].weights << 1.0, 2.0;
    p.layers[1].bias << -0.3;
    Eigen::VectorXd x(1);
    x << 0.8;
    CHECK(mlp_forward(p, x)(0) == doctest::Approx(-0.9119819767360609).epsilon(1e-14));
}

TEST_CASE("forward pass is deterministic and batch/single paths agree") {
    const std::array<std::size_t, 4> dims{4, 16, 8, 3};
    const MlpParams p = testing::random_net(dims, Activation::relu, Activation::identity, 5);
    Rng r(9);
    const Eigen::MatrixXd x = testing::random_matrix(4, 6, r);
    const Eigen::MatrixXd a = forward_batch(p, x);
    const Eigen::MatrixXd b = forward_batch(p, x);
    CHECK(a == b);
    for (Eigen::Index j = 0; j < x.cols(); ++j) CHECK(mlp_forward(p, x.col(j)) == a.col(j));
}

TEST_CASE("forward rejects bad inputs") {
    const std::array<std::size_t, 3> dims{3, 4, 2};
    const MlpParams p = testing::random_net(dims, Activation::tanh, Activation::identity, 1);
    CHECK_THROWS_AS(mlp_forward(p, Eigen::Vector2d(1.0, 2.0)), ContractViolation);
    CHECK_THROWS_AS(mlp_forward(p, Eigen::Vector3d(1.0, NAN, 0.0)), ContractViolation);

    MlpParams huge = p;
    huge.layers[0].weights.setConstant(1e308);
    try {
        mlp_forward(huge, Eigen::Vector3d(1e10, 1e10, 1e10));
        FAIL("expected NonFiniteError");
    } catch (const NonFiniteError& e) {
        CHECK(e.layer() == 0);
    }
}

TEST_CASE("initialization: shapes, zero biases, bounded weights, seed determinism") {
    const std::array<std::size_t, 4> dims{10, 64, 64, 8};
    const MlpParams a = init_mlp(dims, Activation::relu, Activation::identity, Rng(3));
    const MlpParams b = init_mlp(dims, Activation::relu, Activation::identity, Rng(3));
    const MlpParams c = init_mlp(dims, Activation::relu, Activation::identity, Rng(4));
    CHECK(a == b);
    CHECK_FALSE(a == c);
    CHECK(a.layer_dims() == std::vector<std::size_t>(dims.begin(), dims.end()));
    CHECK(a.parameter_count() == 10 * 64 + 64 + 64 * 64 + 64 + 64 * 8 + 8);
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        const auto& layer = a.layers[l];
        CHECK(layer.bias.isZero(0.0));
        const double fan_in = static_cast<double>(layer.in_dim());
        const double fan_out = static_cast<double>(layer.out_dim());
        const double bound = layer.activation == Activation::relu ? std::sqrt(6.0 / fan_in)
                                                                  : std::sqrt(6.0 / (fan_in + fan_out));
        CHECK(layer.weights.cwiseAbs().maxCoeff() <= bound);
        CHECK(layer.weights.cwiseAbs().maxCoeff() > 0.5 * bound);
    }
}

TEST_CASE("validate catches broken shapes and non-finite values") {
    const std::array<std::size_t, 3> dims{3, 4, 2};
    MlpParams p = testing::random_net(dims, Activation::tanh, Activation::identity, 2);
    CHECK_NOTHROW(p.validate());
    MlpParams bad = p;
    bad.layers[1].weights.resize(2, 5);
    CHECK_THROWS_AS(bad.validate(), ContractViolation);
    bad = p;
    bad.layers[0].bias(1) = INFINITY;
    CHECK_THROWS_AS(bad.validate(), ContractViolation);
}

TEST_CASE("mse: linear y = w x on (x=1, t=0) with w=2 gives loss 4 and dL/dw 4") {
    const std::array<std::size_t, 2> dims{1, 1};
    const std::array<Activation, 1> acts{Activation::identity};
    MlpParams p = zero_mlp(dims, acts);
    p.layers[0].weights(0, 0) = 2.0;
    Batch b{Eigen::MatrixXd::Constant(1, 1, 1.0), Eigen::MatrixXd::Zero(1, 1)};
    const LossAndGrad lg = loss_and_grads(p, b, LossKind::mse);
    CHECK(lg.loss == 4.0);
    CHECK(lg.grad.layers[0].weights(0, 0) == 4.0);
}

TEST_CASE("mse at the target is zero with zero gradient") {
    const std::array<std::size_t, 3> dims{3, 5, 2};
    const MlpParams p = testing::random_net(dims, Activation::tanh, Activation::identity, 8);
    Rng r(1);
    const Eigen::MatrixXd x = testing::random_matrix(3, 4, r);
    const Batch b{x, forward_batch(p, x)};
    const LossAndGrad lg = loss_and_grads(p, b, LossKind::mse);
    CHECK(lg.loss == 0.0);
    MlpParams g = lg.grad;
    testing::for_each_parameter(g, [](double& v) { CHECK(v == 0.0); });
}

TEST_CASE("gradients match central finite differences for random small networks") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng r = Rng(100).split(seed);
        const std::size_t in = 1 + r.below(6);
        const std::size_t hidden = 1 + r.below(32);
        const std::size_t out = 1 + r.below(4);
        const Activation act = seed % 2 ? Activation::tanh : Activation::relu;
        const std::array<std::size_t, 3> dims{in, hidden, out};
        MlpParams p = testing::random_net(dims, act, Activation::identity, seed);
        const Eigen::MatrixXd x = testing::random_matrix(static_cast<Eigen::Index>(in), 5, r);
        const Batch b{x, testing::random_matrix(static_cast<Eigen::Index>(out), 5, r)};
        const LossAndGrad lg = loss_and_grads(p, b, LossKind::mse);
        const auto rep = testing::finite_difference_check(p, lg.grad, [&] { return loss_and_grads(p, b, LossKind::mse).loss; });
        CHECK(rep.max_rel_error < 1e-5);

        const std::array<std::size_t, 3> hdims{in, hidden, 2 * out};
        MlpParams h = testing::random_net(hdims, act, Activation::identity, seed + 50);
        const LossAndGrad hg = loss_and_grads(h, b, LossKind::heteroscedastic_nll);
        const auto hrep = testing::finite_difference_check(
            h, hg.grad, [&] { return loss_and_grads(h, b, LossKind::heteroscedastic_nll).loss; });
        CHECK(hrep.max_rel_error < 1e-5);
    }
}

TEST_CASE("backward returns the input gradient") {
    const std::array<std::size_t, 3> dims{3, 7, 2};
    const MlpParams p = testing::random_net(dims, Activation::tanh, Activation::identity, 4);
    Rng r(2);
    Eigen::MatrixXd x = testing::random_matrix(3, 1, r);
    const Eigen::MatrixXd gout = testing::random_matrix(2, 1, r);
    MlpParams grads = p.zeros_like();
    const Eigen::MatrixXd gin = backward(p, forward_trace(p, x), gout, grads);
    for (Eigen::Index i = 0; i < 3; ++i) {
        const double saved = x(i, 0);
        x(i, 0) = saved + 1e-6;
        const double up = (forward_batch(p, x).array() * gout.array()).sum();
        x(i, 0) = saved - 1e-6;
        const double down = (forward_batch(p, x).array() * gout.array()).sum();
        x(i, 0) = saved;
        CHECK(testing::relative_error(gin(i, 0), (up - down) / 2e-6) < 1e-6);
    }
}

TEST_CASE("heteroscedastic terms: closed-form values") {
    Eigen::VectorXd mu(1), s(1), y(1);
    mu << 0.0;
    s << 0.0;
    y << 1.0;
    CHECK(heteroscedastic_nll_terms(mu, s, y) == doctest::Approx(0.5));
    y << 0.0;
    s << 1.0;  // variance e
    CHECK(heteroscedastic_nll_terms(mu, s, y) == doctest::Approx(0.5));
}

TEST_CASE("loss tags") {
    CHECK(parse_loss_kind("mse") == LossKind::mse);
    CHECK(parse_loss_kind("heteroscedastic_nll") == LossKind::heteroscedastic_nll);
    CHECK(parse_loss_kind("cmvae_composite") == LossKind::cmvae_composite);
    CHECK_THROWS_AS(parse_loss_kind("hinge"), ContractViolation);

    const std::array<std::size_t, 2> dims{2, 2};
    const std::array<Activation, 1> acts{Activation::identity};
    const MlpParams p = zero_mlp(dims, acts);
    const Batch b{Eigen::MatrixXd::Ones(2, 1), Eigen::MatrixXd::Ones(2, 1)};
    CHECK_THROWS_AS(loss_and_grads(p, b, LossKind::cmvae_composite), ContractViolation);
    CHECK_THROWS_AS(loss_and_grads(p, Batch{Eigen::MatrixXd(2, 0), Eigen::MatrixXd(2, 0)}, LossKind::mse),
                    ContractViolation);
}

TEST_CASE("adam: zero gradient is a fixed point") {
    const std::array<std::size_t, 3> dims{3, 4, 2};
    MlpParams p = testing::random_net(dims, Activation::relu, Activation::identity, 6);
    const MlpParams before = p;
    AdamState st = AdamState::for_params(p);
    for (int i = 0; i < 5; ++i) adam_step(p, p.zeros_like(), st);
    CHECK(p == before);
    CHECK(st.step_count == 5);
}

TEST_CASE("adam: w^2 from w=1 with lr 0.1 reaches |w| < 1e-2 in 200 steps") {
    const std::array<std::size_t, 2> dims{1, 1};
    const std::array<Activation, 1> acts{Activation::identity};
    MlpParams p = zero_mlp(dims, acts);
    p.layers[0].weights(0, 0) = 1.0;
    AdamState st = AdamState::for_params(p, AdamConfig{0.1, 0.9, 0.999, 1e-8});
    for (int t = 0; t < 200; ++t) {
        MlpParams g = p.zeros_like();
        g.layers[0].weights(0, 0) = 2.0 * p.layers[0].weights(0, 0);
        adam_step(p, g, st);
    }
    const double w = p.layers[0].weights(0, 0);
    CHECK(std::abs(w) < 1e-2);
    // Scalar reference simulation of the same recurrence.
    CHECK(w == doctest::Approx(-7.2179864777083035e-06).epsilon(1e-6));
}

TEST_CASE("adam: identical runs are bit-identical; shape mismatch is rejected") {
    const std::array<std::size_t, 3> dims{3, 4, 2};
    Rng r(3);
    const Eigen::MatrixXd x = testing::random_matrix(3, 8, r);
    const Batch b{x, testing::random_matrix(2, 8, r)};
    auto run = [&] {
        MlpParams p = testing::random_net(dims, Activation::tanh, Activation::identity, 11);
        AdamState st = AdamState::for_params(p);
        for (int i = 0; i < 20; ++i) adam_step(p, loss_and_grads(p, b, LossKind::mse).grad, st);
        return p;
    };
    CHECK(run() == run());

    MlpParams p = testing::random_net(dims, Activation::tanh, Activation::identity, 11);
    AdamState st = AdamState::for_params(p);
    const std::array<std::size_t, 3> other{3, 5, 2};
    const MlpParams wrong = testing::random_net(other, Activation::tanh, Activation::identity, 1);
    CHECK_THROWS_AS(adam_step(p, wrong, st), ContractViolation);
}

TEST_CASE("checksum is sensitive to every value") {
    const std::array<std::size_t, 3> dims{3, 4, 2};
    MlpParams p = testing::random_net(dims, Activation::tanh, Activation::identity, 12);
    const auto c0 = checksum(p);
    p.layers[1].bias(0) = std::nextafter(p.layers[1].bias(0), 1.0);
    CHECK(checksum(p) != c0);
}

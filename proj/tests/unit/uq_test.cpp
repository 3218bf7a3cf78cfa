#include <cmath>
#include <vector>

#include "doctest.h"

#include "support.hpp"

#include "uqnav/errors.hpp"
#include "uqnav/uq_propagation.hpp"

using namespace uqnav;
using namespace uqnav::uq;

namespace {

GaussianPrediction g1(double mu, double var) {
    return {Eigen::VectorXd::Constant(1, mu), Eigen::VectorXd::Constant(1, var)};
}

policy::EnsembleParams random_ensemble(std::size_t m, std::uint64_t seed) {
    policy::EnsembleParams e;
    for (std::size_t i = 0; i < m; ++i) e.members.push_back(policy::init_member(policy::PolicyArchitecture{}, Rng(seed).split(i)));
    return e;
}

perception::LatentDistribution random_latent(Rng& r) {
    perception::LatentDistribution d{Eigen::VectorXd(10), Eigen::VectorXd(10)};
    for (Eigen::Index i = 0; i < 10; ++i) {
        d.mean(i) = r.uniform(-1.0, 1.0);
        d.std(i) = r.uniform(0.2, 1.0);
    }
    return d;
}

}  // namespace

TEST_CASE("mixture moments: closed-form examples") {
    const std::vector<GaussianPrediction> same{g1(0, 1), g1(0, 1)};
    auto m = mixture_moments(same);
    CHECK(m.mean(0) == 0.0);
    CHECK(m.variance(0) == 1.0);

    const std::vector<GaussianPrediction> two{g1(0, 1), g1(2, 1)};
    m = mixture_moments(two);
    CHECK(m.mean(0) == 1.0);
    CHECK(m.variance(0) == 2.0);
    const auto d = decompose_uncertainty(two);
    CHECK(d.aleatoric_var(0) == 1.0);
    CHECK(d.epistemic_var(0) == 1.0);

    const std::vector<GaussianPrediction> one{g1(0.3, 0.7)};
    m = mixture_moments(one);
    CHECK(m.mean(0) == 0.3);
    CHECK(m.variance(0) == 0.7);

    CHECK(decompose_uncertainty(same).epistemic_var(0) == 0.0);
    CHECK_THROWS_AS(mixture_moments(std::vector<GaussianPrediction>{}), ContractViolation);
    CHECK_THROWS_AS(decompose_uncertainty(std::vector<GaussianPrediction>{}), ContractViolation);
}

TEST_CASE("mixture variance equals the textbook form mean(var + mu^2) - mean^2") {
    Rng r(1);
    for (int t = 0; t < 50; ++t) {
        std::vector<GaussianPrediction> comps;
        const std::size_t k = 1 + r.below(30);
        for (std::size_t i = 0; i < k; ++i) comps.push_back(testing::random_component(r, 4));
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(4), second = Eigen::VectorXd::Zero(4);
        for (const auto& c : comps) {
            mean += c.mean;
            second += c.variance + c.mean.cwiseAbs2();
        }
        mean /= static_cast<double>(k);
        second /= static_cast<double>(k);
        const auto m = mixture_moments(comps);
        for (Eigen::Index d = 0; d < 4; ++d) {
            CHECK(m.mean(d) == doctest::Approx(mean(d)).epsilon(1e-12));
            CHECK(m.variance(d) == doctest::Approx(second(d) - mean(d) * mean(d)).epsilon(1e-9));
        }
    }
}

TEST_CASE("law of total variance for up to 10^4 components") {
    Rng r(2);
    for (std::size_t k : {1u, 7u, 100u, 10000u}) {
        std::vector<GaussianPrediction> comps;
        for (std::size_t i = 0; i < k; ++i) comps.push_back(testing::random_component(r, 4));
        const auto m = mixture_moments(comps);
        const auto d = decompose_uncertainty(comps);
        CHECK(((d.aleatoric_var + d.epistemic_var - m.variance).cwiseAbs().maxCoeff()) < 1e-9);
        CHECK(d.aleatoric_var.minCoeff() >= 0.0);
        CHECK(d.epistemic_var.minCoeff() >= 0.0);
    }
}

TEST_CASE("mixture moments agree with sampling from the mixture") {
    Rng r(3);
    for (int t = 0; t < 10; ++t) {
        std::vector<GaussianPrediction> comps;
        const std::size_t k = 1 + r.below(6);
        for (std::size_t i = 0; i < k; ++i) comps.push_back(testing::random_component(r, 1));
        const auto m = mixture_moments(comps);
        double s = 0.0, s2 = 0.0;
        const int n = 1000000;
        for (int i = 0; i < n; ++i) {
            const auto& c = comps[r.below(k)];
            const double x = c.mean(0) + std::sqrt(c.variance(0)) * r.normal();
            s += x;
            s2 += x * x;
        }
        const double mean = s / n;
        const double sd = std::sqrt(s2 / n - mean * mean);
        const double true_sd = std::sqrt(m.variance(0));
        const double scale = std::max(std::abs(m.mean(0)), true_sd);
        CHECK(std::abs(mean - m.mean(0)) < 0.01 * scale);
        CHECK(std::abs(sd - true_sd) < 0.01 * true_sd);
    }
}

TEST_CASE("nested aggregation equals flat aggregation") {
    Rng r(4);
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = 1 + r.below(10), m = 1 + r.below(10);
        std::vector<std::vector<GaussianPrediction>> grid(n);
        std::vector<GaussianPrediction> flat;
        for (auto& row : grid) {
            for (std::size_t i = 0; i < m; ++i) {
                row.push_back(testing::random_component(r, 4));
                flat.push_back(row.back());
            }
        }
        const PredictiveResult nested = aggregate_grid(grid);
        const auto ref = mixture_moments(flat);
        CHECK((nested.mean - ref.mean).cwiseAbs().maxCoeff() < 1e-9);
        CHECK((nested.std.cwiseAbs2() - ref.variance).cwiseAbs().maxCoeff() < 1e-9);
        CHECK((nested.aleatoric_var + nested.epistemic_var - nested.std.cwiseAbs2()).cwiseAbs().maxCoeff() < 1e-9);
        CHECK(nested.n_latent == n);
        CHECK(nested.n_members == m);
    }
    CHECK_THROWS_AS(aggregate_grid({}), ContractViolation);
    CHECK_THROWS_AS(aggregate_grid({{g1(0, 1)}, {g1(0, 1), g1(1, 1)}}), ContractViolation);
}

TEST_CASE("N=1, M=1 reduces to encode -> sample -> single member") {
    const auto encoder = perception::CmvaeParams::initialize(perception::CmvaeArchitecture{}, Rng(5));
    const auto ensemble = random_ensemble(1, 6);
    Rng px(7);
    perception::Observation obs{Eigen::VectorXd(256)};
    for (Eigen::Index i = 0; i < 256; ++i) obs.pixels(i) = px.uniform();

    Rng a(42), b(42);
    const PredictiveResult res = predict_stochastic_input(encoder, ensemble, obs, 1, a);
    const auto z = perception::reparameterize_sample(perception::encode(encoder, obs), b);
    const auto single = policy::policy_forward(ensemble.members[0], z);
    CHECK(res.mean == single.mean);
    CHECK(res.std == single.variance.cwiseSqrt());
    CHECK(res.epistemic_var.isZero(0.0));
    CHECK(res.aleatoric_var == single.variance);
}

TEST_CASE("predict_stochastic_input equals the flat mixture over its own grid") {
    const auto encoder = perception::CmvaeParams::initialize(perception::CmvaeArchitecture{}, Rng(8));
    const auto ensemble = random_ensemble(5, 9);
    const auto before = ensemble.members;
    perception::Observation obs{Eigen::VectorXd::Constant(256, 0.2)};
    for (std::size_t n : {1u, 3u, 5u}) {
        Rng a(n), b(n);
        const auto res = predict_stochastic_input(encoder, ensemble, obs, n, a);
        const auto dist = perception::encode(encoder, obs);
        std::vector<GaussianPrediction> flat;
        for (std::size_t k = 0; k < n; ++k) {
            const auto z = perception::reparameterize_sample(dist, b);
            for (const auto& m : ensemble.members) flat.push_back(policy::policy_forward(m, z));
        }
        const auto ref = mixture_moments(flat);
        CHECK((res.mean - ref.mean).cwiseAbs().maxCoeff() < 1e-9);
        CHECK((res.std.cwiseAbs2() - ref.variance).cwiseAbs().maxCoeff() < 1e-9);
    }
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(ensemble.members[i] == before[i]);
    Rng r(1);
    CHECK_THROWS_AS(predict_stochastic_input(encoder, ensemble, obs, 0, r), ContractViolation);
}

TEST_CASE("results for N and N+1 on a shared stream prefix differ by at most 10/N") {
    const auto ensemble = random_ensemble(5, 10);
    Rng r(11);
    for (int t = 0; t < 5; ++t) {
        const auto dist = random_latent(r);
        for (std::size_t n = 1; n < 40; ++n) {
            Rng a(t), b(t);
            const auto x = predict_from_latent(dist, ensemble, n, a);
            const auto y = predict_from_latent(dist, ensemble, n + 1, b);
            for (Eigen::Index d = 0; d < 4; ++d) {
                const double scale = std::abs(x.mean(d)) + x.std(d);
                CHECK(std::abs(y.mean(d) - x.mean(d)) / scale <= 10.0 / static_cast<double>(n));
                CHECK(std::abs(y.std(d) - x.std(d)) / scale <= 10.0 / static_cast<double>(n));
            }
        }
    }
}

TEST_CASE("latent sampling: prefix-stable as N grows") {
    Rng r(12);
    const auto dist = random_latent(r);
    Rng a(3), b(3);
    const Eigen::MatrixXd z3 = sample_latents(dist, 3, a);
    const Eigen::MatrixXd z5 = sample_latents(dist, 5, b);
    CHECK(z5.leftCols(3) == z3);
}

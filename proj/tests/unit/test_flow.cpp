#include <doctest.h>

#include "hbayes/errors.hpp"
#include "hbayes/flow.hpp"
#include "hbayes/reference.hpp"
#include "support.hpp"

using namespace hbayes;

namespace {

Eigen::VectorXd v(std::initializer_list<double> xs) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) out(i++) = x;
    return out;
}

// Trapezoid rule of f(x) * N(x; 0, 1) over [-12, 12].
template <class F>
auto std_normal_expectation(F f) {
    const int n = 24001;
    const double h = 24.0 / (n - 1);
    decltype(f(0.0)) acc = f(0.0) * 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = -12.0 + i * h;
        const double w = (i == 0 || i == n - 1 ? 0.5 : 1.0) * h * std::exp(-0.5 * x * x) / std::sqrt(2 * std::numbers::pi);
        acc += w * f(x);
    }
    return acc;
}

Eigen::Vector2d std_score(double x) { return {x, 1.0 - x * x}; }

}  // namespace

TEST_SUITE("flow") {

TEST_CASE("negative log-likelihood") {
    const LinearModel id(Eigen::MatrixXd::Identity(1, 1));
    CHECK(neg_log_likelihood(id, v({3}), 0.25, v({3})) == 0.0);
    CHECK(neg_log_likelihood(id, v({0.25}), 0.25, v({0})) == doctest::Approx(0.5));
    const LinearModel a(Eigen::MatrixXd::Ones(2, 1));
    CHECK(neg_log_likelihood(a, v({1, 1}), 1.0, v({0})) == doctest::Approx(1.0));
    CHECK_THROWS_AS(neg_log_likelihood(a, v({1}), 1.0, v({0})), ContractError);
}

TEST_CASE("Fisher estimate of the standard normal family") {
    const Eigen::Matrix2d oracle = std_normal_expectation([](double x) -> Eigen::Matrix2d {
        const Eigen::Vector2d s = std_score(x);
        return s * s.transpose();
    });
    CHECK(oracle.isApprox(Eigen::Vector2d(1, 2).asDiagonal().toDenseMatrix(), 1e-9));

    EstimatorConfig cfg;
    cfg.n_samples = 100000;
    cfg.ridge = 0.0;
    const Eigen::MatrixXd fisher = estimate_fisher(GaussianParams::standard(1), cfg);
    CHECK(fisher == fisher.transpose());
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            CHECK(std::abs(fisher(i, j) - oracle(i, j)) < 0.05 * std::sqrt(oracle(i, i) * oracle(j, j)));
        }
    }

    const Eigen::MatrixXd f2 = estimate_fisher(GaussianParams::standard(2), cfg);
    CHECK((f2.topLeftCorner(2, 2) - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("drift estimates") {
    EstimatorConfig cfg;
    cfg.n_samples = 100000;
    const Density g = GaussianParams::standard(1);
    const double c = 3.0;
    cfg.use_baseline = false;
    const Eigen::VectorXd constant = estimate_drift(g, [c](const Eigen::VectorXd&) { return c; }, cfg);
    CHECK(constant.norm() < 5 * c * std::sqrt(2.0) / std::sqrt(1e5));

    cfg.use_baseline = true;
    const Potential phi = [](const Eigen::VectorXd& x) { return 0.5 * x(0) * x(0); };
    const Potential shifted = [](const Eigen::VectorXd& x) { return 0.5 * x(0) * x(0) + 1000.0; };
    const Eigen::VectorXd d1 = estimate_drift(g, phi, cfg);
    const Eigen::VectorXd d2 = estimate_drift(g, shifted, cfg);
    CHECK((d1 - d2).cwiseAbs().maxCoeff() < 1e-9);

    const Eigen::Vector2d oracle = std_normal_expectation([](double x) -> Eigen::Vector2d { return 0.5 * x * x * std_score(x); });
    CHECK(std::abs(d1(0) - oracle(0)) < 0.05 * oracle.norm());
    CHECK(std::abs(d1(1) - oracle(1)) < 0.05 * std::abs(oracle(1)));
}

TEST_CASE("hde_step: null step, Euler step against quadrature") {
    const Potential phi = [](const Eigen::VectorXd& x) { return 0.5 * (1.0 - x(0)) * (1.0 - x(0)); };
    EstimatorConfig cfg;
    cfg.n_samples = 100000;
    cfg.dt = 0.0;
    const FlowState s0{0.0, 0, GaussianParams::standard(1), {}};
    const FlowState same = hde_step(s0, phi, cfg);
    CHECK(flat(same.params) == flat(s0.params));

    cfg.dt = 0.01;
    cfg.max_step_fisher_norm = std::numeric_limits<double>::infinity();
    const FlowState s1 = hde_step(s0, phi, cfg);
    const Eigen::Matrix2d fisher = std_normal_expectation([](double x) -> Eigen::Matrix2d {
        const Eigen::Vector2d s = std_score(x);
        return s * s.transpose();
    });
    const Eigen::Vector2d drift =
        std_normal_expectation([](double x) -> Eigen::Vector2d { return 0.5 * (1.0 - x) * (1.0 - x) * std_score(x); });
    const Eigen::VectorXd expected = flat(s0.params) - 0.01 * fisher.inverse() * drift;
    const Eigen::VectorXd move = flat(s1.params) - flat(s0.params);
    const Eigen::VectorXd expected_move = expected - flat(s0.params);
    CHECK((move - expected_move).norm() < 0.05 * expected_move.norm());
    CHECK(s1.t == doctest::Approx(0.01));
    CHECK(s1.diagnostics.n_samples_used == 100000);
}

TEST_CASE("hde_step halves steps that would break the factor") {
    const Density g = GaussianParams(v({0.0}), Eigen::MatrixXd::Constant(1, 1, 1e-3));
    // A concave potential lowers the precision; a full step drives it negative.
    const Potential phi = [](const Eigen::VectorXd& x) { return -1e-4 * x(0) * x(0); };
    EstimatorConfig cfg;
    cfg.n_samples = 20000;
    cfg.dt = 0.1;
    cfg.max_step_fisher_norm = std::numeric_limits<double>::infinity();
    try {
        const FlowState s1 = hde_step(FlowState{0.0, 0, g, {}}, phi, cfg);
        CHECK(s1.diagnostics.n_step_halvings >= 1);
        CHECK(std::get<GaussianParams>(s1.params).factor()(0, 0) > 0.0);
    } catch (const FlowStall& e) {
        CHECK(std::get<GaussianParams>(e.last_valid().params).factor()(0, 0) > 0.0);
        CHECK(e.last_valid().diagnostics.n_step_halvings >= 1);
    }
}

TEST_CASE("singular Fisher without ridge is a solve error") {
    EstimatorConfig cfg;
    cfg.n_samples = 2;
    cfg.ridge = 0.0;
    cfg.dt = 0.1;
    const Potential phi = [](const Eigen::VectorXd& x) { return x.squaredNorm(); };
    CHECK_THROWS_AS(hde_step(FlowState{0.0, 0, GaussianParams::standard(2), {}}, phi, cfg), SolveError);
}

TEST_CASE("zero potential leaves the prior fixed") {
    const NullModel null(2);
    EstimatorConfig cfg;
    cfg.n_samples = 500;
    cfg.dt = 0.1;
    const Density prior = GaussianParams::standard(2);
    const FlowTrajectory traj = run_flow(prior, null, Eigen::VectorXd(0), 1.0, cfg);
    CHECK(traj.back().t == 1.0);
    CHECK((flat(traj.back().params) - flat(prior)).norm() < 1e-6);
}

TEST_CASE("conjugate flows reach the closed form") {
    EstimatorConfig cfg;
    cfg.n_samples = 10000;
    cfg.dt = 0.01;
    cfg.seed = 1;
    const LinearModel one(Eigen::MatrixXd::Identity(1, 1));
    const FlowTrajectory t1 = run_flow(GaussianParams::standard(1), one, v({1.0}), 1.0, cfg);
    const MomentParams m1 = moments(t1.back().params);
    CHECK(std::abs(m1.mean(0) - 0.5) < 0.02 * 0.5);
    CHECK(std::abs(m1.covariance(0, 0) - 0.5) < 0.02 * 0.5);

    Eigen::Matrix2d A;
    A << 1, 0, 1, 1;
    const LinearModel two(A);
    const FlowTrajectory t2 = run_flow(GaussianParams::standard(2), two, v({1.0, 3.0}), 0.5, cfg);
    const MomentParams exact = reference::linear_gaussian_posterior(
        {A, Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2), 0.5, v({1.0, 3.0})});
    const MomentParams m2 = moments(t2.back().params);
    for (int i = 0; i < 2; ++i) {
        CHECK(std::abs(m2.mean(i) - exact.mean(i)) < 0.03 * std::abs(exact.mean(i)));
        CHECK(std::abs(m2.covariance(i, i) - exact.covariance(i, i)) < 0.03 * exact.covariance(i, i));
    }
}

TEST_CASE("deviations give identical steps and runs repeat exactly") {
    const Potential phi = [](const Eigen::VectorXd& x) { return 2.0 * (1.0 - x(0) - x(1)) * (1.0 - x(0) - x(1)); };
    testing::Rng rng(6);
    const Density mix = testing::random_mixture(2, 2, rng);
    EstimatorConfig kl;
    kl.n_samples = 400;
    kl.dt = 0.05;
    EstimatorConfig he = kl;
    he.deviation = Deviation::squared_hellinger;
    const FlowState s0{0.0, 0, mix, {}};
    CHECK(flat(hde_step(s0, phi, kl).params) == flat(hde_step(s0, phi, he).params));
    CHECK(flat(hde_step(s0, phi, kl).params) == flat(hde_step(s0, phi, kl).params));
}

TEST_CASE("divergence diagnostics") {
    EstimatorConfig cfg;
    cfg.n_samples = 100000;
    const Density prior = GaussianParams::standard(1);
    const Potential zero = [](const Eigen::VectorXd&) { return 0.0; };
    const auto kl0 = kl_estimate(prior, zero, prior, 0.0, cfg);
    CHECK(std::abs(kl0.value) < 1e-12);
    CHECK(hellinger_estimate(prior, zero, prior, 0.7, cfg).value == doctest::Approx(0.0).epsilon(1e-9));

    // Effective target q exp(-Phi) with Phi chosen so the target is N(1, 1).
    const Potential shift = [](const Eigen::VectorXd& x) { return 0.5 * (x(0) - 1) * (x(0) - 1) - 0.5 * x(0) * x(0); };
    const Density g = GaussianParams::standard(1);
    const auto kl = kl_estimate(g, shift, prior, 1.0, cfg);
    // log Z = 0 for this potential, so value is the KL itself.
    CHECK(kl.value == doctest::Approx(0.5).epsilon(0.05));
    CHECK(kl.value >= -3 * kl.standard_error);
    CHECK(hellinger_estimate(g, shift, prior, 1.0, cfg).value == doctest::Approx(1 - std::exp(-0.125)).epsilon(0.05));
}

}

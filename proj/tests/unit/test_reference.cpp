#include <doctest.h>

#include <memory>

#include "hbayes/errors.hpp"
#include "hbayes/flow.hpp"
#include "hbayes/reference.hpp"
#include "support.hpp"

using namespace hbayes;
using namespace hbayes::reference;

namespace {

Eigen::VectorXd v(std::initializer_list<double> xs) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) out(i++) = x;
    return out;
}

LinearGaussianProblem conjugate_1d(double y) {
    return {Eigen::MatrixXd::Identity(1, 1), v({0}), Eigen::MatrixXd::Identity(1, 1), 1.0, v({y})};
}

LinearGaussianProblem conjugate_2d() {
    Eigen::MatrixXd A(2, 2);
    A << 1, 0, 1, 1;
    return {A, v({0, 0}), Eigen::MatrixXd::Identity(2, 2), 0.5, v({1, 3})};
}

Potential potential_of(const LinearGaussianProblem& p) {
    auto model = std::make_shared<LinearModel>(p.A);
    return [model, p](const Eigen::VectorXd& x) { return neg_log_likelihood(*model, p.data, p.noise_sd, x); };
}

std::vector<Interval> box(std::size_t d, double half) { return std::vector<Interval>(d, Interval{-half, half}); }

bool within(const MomentParams& a, const MomentParams& b, double rel) {
    for (Eigen::Index i = 0; i < a.mean.size(); ++i) {
        if (std::abs(a.mean(i) - b.mean(i)) > rel * std::abs(b.mean(i))) return false;
        if (std::abs(a.covariance(i, i) - b.covariance(i, i)) > rel * b.covariance(i, i)) return false;
    }
    return true;
}

}  // namespace

TEST_SUITE("reference") {

TEST_CASE("conjugate closed form") {
    const MomentParams m = linear_gaussian_posterior(conjugate_1d(1.0));
    CHECK(m.mean(0) == doctest::Approx(0.5));
    CHECK(m.covariance(0, 0) == doctest::Approx(0.5));
    const MomentParams z = linear_gaussian_posterior(conjugate_1d(0.0));
    CHECK(z.mean(0) == doctest::Approx(0.0));
    CHECK(z.covariance(0, 0) == doctest::Approx(0.5));
    LinearGaussianProblem wide = conjugate_1d(1.0);
    wide.noise_sd = 1e6;
    const MomentParams w = linear_gaussian_posterior(wide);
    CHECK(std::abs(w.mean(0)) < 1e-6);
    CHECK(std::abs(w.covariance(0, 0) - 1.0) < 1e-6);
}

TEST_CASE("grid quadrature") {
    const GaussianParams prior = GaussianParams::standard(2);
    const Potential zero = [](const Eigen::VectorXd&) { return 0.0; };
    const GridPosterior flat = grid_posterior_moments(zero, prior, box(2, 10.0), 201);
    CHECK((flat.moments.mean).norm() < 1e-8);
    CHECK((flat.moments.covariance - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(std::abs(flat.weights.dot(flat.log_density.array().exp().matrix()) - 1.0) < 1e-8);

    const auto p1 = conjugate_1d(1.0);
    const GridPosterior g1 = grid_posterior_moments(potential_of(p1), GaussianParams::standard(1), box(1, 10.0), 201);
    const MomentParams exact = linear_gaussian_posterior(p1);
    CHECK(std::abs(g1.moments.mean(0) - exact.mean(0)) < 1e-6);
    CHECK(std::abs(g1.moments.covariance(0, 0) - exact.covariance(0, 0)) < 1e-6);
    const GridPosterior g1b = grid_posterior_moments(potential_of(p1), GaussianParams::standard(1), box(1, 10.0), 401);
    CHECK(std::abs(g1.moments.mean(0) - g1b.moments.mean(0)) < 1e-6);
    CHECK(std::abs(g1.moments.covariance(0, 0) - g1b.moments.covariance(0, 0)) < 1e-6);
    CHECK(posterior_log_density(potential_of(p1), GaussianParams::standard(1), g1.log_normalizer, exact.mean) ==
          doctest::Approx(-0.5 * std::log(2 * std::numbers::pi * 0.5)).epsilon(1e-8));

    CHECK_THROWS_AS(grid_posterior_moments(zero, GaussianParams::standard(3), box(3, 5.0), 11), ContractError);
}

TEST_CASE("HPD threshold") {
    const GridPosterior g = grid_posterior_moments([](const Eigen::VectorXd&) { return 0.0; }, GaussianParams::standard(1),
                                                   box(1, 10.0), 4001);
    // 99% central interval of N(0,1) ends at 2.5758.
    CHECK(g.hpd_log_threshold(0.99) == doctest::Approx(-0.5 * std::log(2 * std::numbers::pi) - 0.5 * 2.5758 * 2.5758).epsilon(1e-3));
}

TEST_CASE("focus box finds a narrow posterior") {
    auto p = conjugate_1d(2.0);
    p.noise_sd = 0.01;
    const auto fb = focus_box(potential_of(p), GaussianParams::standard(1), box(1, 6.0), 10.0);
    const MomentParams exact = linear_gaussian_posterior(p);
    const double sd = std::sqrt(exact.covariance(0, 0));
    CHECK(fb[0].lo < exact.mean(0) - 8 * sd);
    CHECK(fb[0].hi > exact.mean(0) + 8 * sd);
    CHECK(fb[0].hi - fb[0].lo < 30 * sd);
}

TEST_CASE("random-walk Metropolis") {
    const Potential zero = [](const Eigen::VectorXd&) { return 0.0; };
    const Chain prior_chain = rwmh(zero, GaussianParams::standard(1), 200000, 2.4, 1);
    const MomentParams pm = chain_moments(prior_chain, 1000);
    // Autocorrelation inflates the variance of chain averages; 5x the iid band.
    CHECK(std::abs(pm.mean(0)) < 5 * 3 / std::sqrt(2e5));
    CHECK(std::abs(pm.covariance(0, 0) - 1.0) < 5 * 3 * std::sqrt(2 / 2e5));

    const auto p1 = conjugate_1d(1.0);
    const Chain chain = rwmh(potential_of(p1), GaussianParams::standard(1), 100000, 1.7, 2);
    CHECK(chain.acceptance_rate > 0.3);
    CHECK(chain.acceptance_rate < 0.5);
    const MomentParams m = chain_moments(chain, 1000);
    CHECK(std::abs(m.mean(0) - 0.5) < 0.02);
    CHECK(std::abs(m.covariance(0, 0) - 0.5) < 0.03);

    const Chain again = rwmh(potential_of(p1), GaussianParams::standard(1), 1000, 1.7, 2);
    CHECK(again.states == chain.states.topRows(1000));
}

TEST_CASE("closed form, grid and chain agree") {
    for (const auto& p : {conjugate_1d(1.0), conjugate_2d()}) {
        const auto d = static_cast<std::size_t>(p.A.cols());
        const GaussianParams prior = GaussianParams::standard(d);
        const MomentParams exact = linear_gaussian_posterior(p);
        const MomentParams grid = grid_posterior_moments(potential_of(p), prior, box(d, 8.0), 201).moments;
        const MomentParams chain = chain_moments(rwmh(potential_of(p), prior, 400000, d == 1 ? 1.7 : 0.4, 3), 2000);
        CHECK(within(grid, exact, 0.02));
        CHECK(within(chain, exact, 0.02));
        CHECK(within(chain, grid, 0.02));
    }
}

}

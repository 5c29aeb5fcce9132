#include <doctest.h>

#include "hbayes/errors.hpp"
#include "hbayes/flow.hpp"
#include "hbayes/kernels.hpp"
#include "support.hpp"

using namespace hbayes;
using kernels::Execution;

TEST_SUITE("kernels") {

TEST_CASE("serial and parallel paths agree bit for bit") {
    testing::Rng rng(2);
    const Density g = testing::random_mixture(3, 2, rng);
    const Eigen::MatrixXd xs_s = kernels::draw_samples(g, 3001, 9, Execution::serial);
    const Eigen::MatrixXd xs_p = kernels::draw_samples(g, 3001, 9, Execution::parallel);
    CHECK(xs_s == xs_p);

    const Potential phi = [](const Eigen::VectorXd& x) { return std::sin(x(0)) + x.squaredNorm(); };
    const Eigen::VectorXd f_s = kernels::evaluate_potential(phi, xs_s, Execution::serial);
    CHECK(f_s == kernels::evaluate_potential(phi, xs_s, Execution::parallel));

    const Eigen::MatrixXd s_s = kernels::score_rows(g, xs_s, Execution::serial);
    CHECK(s_s == kernels::score_rows(g, xs_s, Execution::parallel));
    CHECK(kernels::mean_outer_product(s_s, Execution::serial) == kernels::mean_outer_product(s_s, Execution::parallel));
    CHECK(kernels::weighted_mean(s_s, f_s, Execution::serial) == kernels::weighted_mean(s_s, f_s, Execution::parallel));
}

TEST_CASE("draws depend only on seed and index") {
    const Density g = GaussianParams::standard(2);
    const Eigen::MatrixXd a = kernels::draw_samples(g, 10, 4, Execution::parallel);
    const Eigen::MatrixXd b = kernels::draw_samples(g, 20, 4, Execution::parallel);
    CHECK(a == b.leftCols(10));
}

TEST_CASE("mean outer product is exactly symmetric") {
    testing::Rng rng(7);
    const Density g = testing::random_gaussian(3, rng);
    const Eigen::MatrixXd s = kernels::score_rows(g, kernels::draw_samples(g, 500, 1, Execution::serial), Execution::serial);
    const Eigen::MatrixXd m = kernels::mean_outer_product(s, Execution::parallel);
    CHECK(m == m.transpose());
}

TEST_CASE("potential failures name the lowest failing sample") {
    Eigen::MatrixXd xs = Eigen::MatrixXd::Zero(1, 10);
    xs(0, 7) = 1.0;
    xs(0, 3) = 1.0;
    const Potential phi = [](const Eigen::VectorXd& x) {
        return x(0) > 0.5 ? std::numeric_limits<double>::quiet_NaN() : 0.0;
    };
    for (auto exec : {Execution::serial, Execution::parallel}) {
        try {
            kernels::evaluate_potential(phi, xs, exec);
            FAIL("expected EstimationError");
        } catch (const EstimationError& e) {
            CHECK(std::string(e.what()).find("sample 3") != std::string::npos);
        }
    }
}

}

#include <doctest.h>

#include <cmath>

#include "hbayes/bessel.hpp"

namespace bessel = hbayes::bessel;

namespace {

// Plain power series of J_n, fine for small arguments.
double j_series(int n, double x) {
    double term = std::pow(0.5 * x, n) / std::tgamma(n + 1.0);
    double sum = term;
    for (int m = 1; m < 200; ++m) {
        term *= -0.25 * x * x / (m * (m + n));
        sum += term;
        if (std::abs(term) < 1e-18 * std::abs(sum)) break;
    }
    return sum;
}

}  // namespace

TEST_SUITE("bessel") {

TEST_CASE("J0(1) against the power series") {
    CHECK(std::abs(bessel::j0(1.0) - 0.7651976866) < 1e-8);
    CHECK(std::abs(bessel::j0(1.0) - j_series(0, 1.0)) < 1e-14);
}

TEST_CASE("agreement with the standard library over a wide range") {
    double worst = 0.0;
    for (double x = 0.01; x < 60.0; x += 0.0371) {
        const auto v = bessel::evaluate(x);
        worst = std::max(worst, std::abs(v.j0 - std::cyl_bessel_j(0.0, x)));
        worst = std::max(worst, std::abs(v.j1 - std::cyl_bessel_j(1.0, x)));
        const double y_scale = std::max(1.0, std::abs(std::cyl_neumann(1.0, x)));
        worst = std::max(worst, std::abs(v.y0 - std::cyl_neumann(0.0, x)) / std::max(1.0, std::abs(std::cyl_neumann(0.0, x))));
        worst = std::max(worst, std::abs(v.y1 - std::cyl_neumann(1.0, x)) / y_scale);
    }
    CHECK(worst < 1e-10);
}

TEST_CASE("series and asymptotic branches meet smoothly") {
    for (double x : {13.9, 13.99, 14.0, 14.01, 14.1}) {
        CHECK(std::abs(bessel::j0(x) - j_series(0, x)) < 1e-9);
        CHECK(std::abs(bessel::j1(x) - j_series(1, x)) < 1e-9);
    }
}

TEST_CASE("Wronskian and Hankel functions") {
    for (double x : {0.1, 1.0, 7.5, 30.0}) {
        const auto v = bessel::evaluate(x);
        CHECK(std::abs(v.j1 * v.y0 - v.j0 * v.y1 - 2.0 / (std::numbers::pi * x)) < 1e-12 / x + 1e-13);
        CHECK(bessel::hankel1_0(x) == std::complex<double>(v.j0, v.y0));
        CHECK(bessel::hankel1_1(x) == std::complex<double>(v.j1, v.y1));
    }
}

}

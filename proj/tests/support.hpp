#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "hbayes/gaussian.hpp"
#include "hbayes/mixture.hpp"
#include "hbayes/rng.hpp"

namespace testing {

using Rng = std::mt19937_64;

/// Central differences of f at x with per-coordinate step h * max(1, |x_i|).
inline Eigen::VectorXd central_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                        const Eigen::VectorXd& x, double h = 1e-5) {
    Eigen::VectorXd g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double step = h * std::max(1.0, std::abs(x(i)));
        Eigen::VectorXd xp = x;
        Eigen::VectorXd xm = x;
        xp(i) += step;
        xm(i) -= step;
        g(i) = (f(xp) - f(xm)) / (2.0 * step);
    }
    return g;
}

/// Worst componentwise |a - b| / max(|b|, 1).
inline double max_rel_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a(i) - b(i)) / std::max(std::abs(b(i)), 1.0));
    }
    return worst;
}

inline hbayes::GaussianParams random_gaussian(std::size_t d, Rng& rng) {
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif(-0.5, 0.5);
    Eigen::VectorXd mean(static_cast<Eigen::Index>(d));
    Eigen::MatrixXd R = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < mean.size(); ++i) {
        mean(i) = normal(rng);
        R(i, i) = std::exp(unif(rng));
        for (Eigen::Index j = 0; j < i; ++j) R(i, j) = 0.3 * normal(rng);
    }
    return {mean, R};
}

inline hbayes::MixtureParams random_mixture(std::size_t m, std::size_t d, Rng& rng) {
    std::normal_distribution<double> normal;
    std::vector<hbayes::GaussianParams> comps;
    for (std::size_t i = 0; i < m; ++i) comps.push_back(random_gaussian(d, rng));
    Eigen::VectorXd lambdas(static_cast<Eigen::Index>(m) - 1);
    for (Eigen::Index i = 0; i < lambdas.size(); ++i) lambdas(i) = normal(rng);
    return {std::move(comps), lambdas};
}

/// Point near a random component: its mean plus a unit-scale perturbation.
inline Eigen::VectorXd random_point(const Eigen::VectorXd& center, Rng& rng) {
    std::normal_distribution<double> normal;
    Eigen::VectorXd x = center;
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) += normal(rng);
    return x;
}

/// Separation-of-variables solution on [0,1] x [0,H]: u = 0 on the sides,
/// u = T on top, inward flux q on the bottom, conductivity k0. Odd modes only;
/// written with decaying exponentials so large n stays finite.
inline double heat_series(double x, double y, double T, double q, double k0, double H = 0.6) {
    double u = 0.0;
    for (int n = 1; n < 400001; n += 2) {
        const double a = n * std::numbers::pi;
        const double c = 4.0 / a * std::sin(a * x);
        const double denom = 1.0 + std::exp(-2.0 * a * H);
        const double top = T * std::exp(a * (y - H)) * (1.0 + std::exp(-2.0 * a * y)) / denom;
        const double bottom = (q / (k0 * a)) * std::exp(-a * y) * (1.0 - std::exp(-2.0 * a * (H - y))) / denom;
        u += c * (top + bottom);
        if (std::exp(a * (y - H)) < 1e-18 && std::exp(-a * y) < 1e-18) break;
    }
    return u;
}

}  // namespace testing

#include "hbayes/bessel.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "hbayes/errors.hpp"

namespace hbayes::bessel {

namespace {

constexpr double kCrossover = 14.0;
constexpr double kEuler = std::numbers::egamma;
constexpr double kPi = std::numbers::pi;

Values series(double x) {
    const double q = 0.25 * x * x;
    // term0_k = (-q)^k / (k!)^2, term1_k = (-q)^k / (k! (k+1)!)
    double t0 = 1.0;
    double t1 = 1.0;
    double s_j0 = 1.0;
    double s_j1 = 1.0;
    double harmonic = 0.0;  // H_k
    double s_y0 = 0.0;      // sum_{k>=1} (-1)^{k+1} H_k q^k / (k!)^2
    double s_y1 = 1.0 - 2.0 * kEuler;  // k = 0: psi(1) + psi(2)
    for (int k = 1; k < 200; ++k) {
        t0 *= -q / (static_cast<double>(k) * k);
        t1 *= -q / (static_cast<double>(k) * (k + 1));
        harmonic += 1.0 / k;
        s_j0 += t0;
        s_j1 += t1;
        s_y0 -= harmonic * t0;
        // psi(k+1) + psi(k+2) = H_k + H_{k+1} - 2 gamma
        s_y1 += (harmonic + harmonic + 1.0 / (k + 1) - 2.0 * kEuler) * t1;
        if (std::abs(t0) < 1e-18 * std::abs(s_j0) && std::abs(t1) < 1e-18 && k > 2) break;
    }
    Values v;
    v.j0 = s_j0;
    v.j1 = 0.5 * x * s_j1;
    const double log_half = std::log(0.5 * x);
    v.y0 = (2.0 / kPi) * ((log_half + kEuler) * v.j0 + s_y0);
    v.y1 = (2.0 / kPi) * log_half * v.j1 - 2.0 / (kPi * x) - (0.5 * x / kPi) * s_y1;
    return v;
}

// Hankel asymptotic P and Q for order nu.
void asymptotic_pq(double nu, double x, double& p, double& q) {
    const double mu = 4.0 * nu * nu;
    p = 1.0;
    q = 0.0;
    double term = 1.0;
    double last = std::numeric_limits<double>::infinity();
    for (int k = 1; k < 60; ++k) {
        const double odd = 2.0 * k - 1.0;
        term *= (mu - odd * odd) / (k * 8.0 * x);
        const double mag = std::abs(term);
        if (mag > last) break;
        last = mag;
        // k odd -> Q, k even -> P; signs alternate within each series
        switch (k % 4) {
            case 1: q += term; break;
            case 2: p -= term; break;
            case 3: q -= term; break;
            default: p += term; break;
        }
        if (mag < 1e-17) break;
    }
}

Values asymptotic(double x) {
    Values v;
    const double amp = std::sqrt(2.0 / (kPi * x));
    double p = 0.0;
    double q = 0.0;
    asymptotic_pq(0.0, x, p, q);
    double chi = x - 0.25 * kPi;
    v.j0 = amp * (p * std::cos(chi) - q * std::sin(chi));
    v.y0 = amp * (p * std::sin(chi) + q * std::cos(chi));
    asymptotic_pq(1.0, x, p, q);
    chi = x - 0.75 * kPi;
    v.j1 = amp * (p * std::cos(chi) - q * std::sin(chi));
    v.y1 = amp * (p * std::sin(chi) + q * std::cos(chi));
    return v;
}

}  // namespace

Values evaluate(double x) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw ContractError("bessel: argument must be finite and >= 0");
    if (x == 0.0) {
        const double inf = std::numeric_limits<double>::infinity();
        return {1.0, 0.0, -inf, -inf};
    }
    return x < kCrossover ? series(x) : asymptotic(x);
}

double j0(double x) { return evaluate(x).j0; }
double j1(double x) { return evaluate(x).j1; }
double y0(double x) { return evaluate(x).y0; }
double y1(double x) { return evaluate(x).y1; }

std::complex<double> hankel1_0(double x) {
    const auto v = evaluate(x);
    return {v.j0, v.y0};
}

std::complex<double> hankel1_1(double x) {
    const auto v = evaluate(x);
    return {v.j1, v.y1};
}

}  // namespace hbayes::bessel

#include "hbayes/scatter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "hbayes/bessel.hpp"
#include "hbayes/rng.hpp"

namespace hbayes::scatter {

namespace {

constexpr double kPi = std::numbers::pi;
using cd = std::complex<double>;
constexpr cd kI{0.0, 1.0};

// r = a * g^p with g, g', g'' given.
RadialValue power_of(double a, double p, double g, double dg, double ddg) {
    const double gp = std::pow(g, p);
    return {a * gp, a * p * gp / g * dg, a * p * ((p - 1.0) * gp / (g * g) * dg * dg + gp / g * ddg)};
}

RadialValue threelobes(double s) {
    const double e = 0.25 * std::exp(-std::sin(3 * s));
    const double c3 = std::cos(3 * s);
    return {0.5 + e - 0.1 * std::sin(s), -3.0 * c3 * e - 0.1 * std::cos(s),
            e * (9.0 * c3 * c3 + 9.0 * std::sin(3 * s)) + 0.1 * std::sin(s)};
}

RadialValue pear(double s) {
    return {(5.0 + std::sin(3 * s)) / 6.0, 0.5 * std::cos(3 * s), -1.5 * std::sin(3 * s)};
}

RadialValue bean(double s) {
    const double c = std::cos(s);
    const double sn = std::sin(s);
    const double num = 1.0 + 0.9 * c + 0.1 * std::sin(2 * s);
    const double dnum = -0.9 * sn + 0.2 * std::cos(2 * s);
    const double ddnum = -0.9 * c - 0.4 * std::sin(2 * s);
    const double den = 1.0 + 0.75 * c;
    const double dden = -0.75 * sn;
    const double ddden = -0.75 * c;
    const double r = num / den;
    const double dr = (dnum - r * dden) / den;
    return {r, dr, (ddnum - 2.0 * dr * dden - r * ddden) / den};
}

RadialValue peanut(double s) {
    return power_of(0.4, 0.5, 1.0 + 3.0 * std::cos(s) * std::cos(s), -3.0 * std::sin(2 * s), -6.0 * std::cos(2 * s));
}

RadialValue acorn(double s) {
    return power_of(0.6, 0.5, 4.25 + 2.0 * std::cos(3 * s), -6.0 * std::sin(3 * s), -18.0 * std::cos(3 * s));
}

RadialValue roundedtriangle(double s) {
    return {2.0 + 0.5 * std::cos(s), -0.5 * std::sin(s), -0.5 * std::cos(s)};
}

RadialValue roundrect(double s) {
    const double c = std::cos(s);
    const double sn = std::sin(s);
    const double a = std::pow(2.0 / 3.0, 4);
    const double g = c * c * c * c + a * sn * sn * sn * sn;
    const double dg = -4.0 * c * c * c * sn + 4.0 * a * sn * sn * sn * c;
    const double ddg = 12.0 * c * c * sn * sn - 4.0 * c * c * c * c + 4.0 * a * (3.0 * sn * sn * c * c - sn * sn * sn * sn);
    return power_of(1.0, -0.25, g, dg, ddg);
}

CurvePoint kite(double s) {
    const double c = std::cos(s);
    const double sn = std::sin(s);
    return {{c + 0.65 * std::cos(2 * s) - 0.65, 1.5 * sn},
            {-sn - 1.3 * std::sin(2 * s), 1.5 * c},
            {-c - 2.6 * std::cos(2 * s), -1.5 * sn}};
}

// Weights of the periodic log-kernel quadrature, indexed by |i - j|.
Eigen::VectorXd log_weights(int n) {
    const int half = n / 2;
    Eigen::VectorXd w(n);
    for (int d = 0; d < n; ++d) {
        const double t = 2.0 * kPi * d / n;
        double s = 0.0;
        for (int m = 1; m < half; ++m) s += std::cos(m * t) / m;
        w(d) = -(2.0 * kPi / half) * s - (kPi / (static_cast<double>(half) * half)) * ((d % 2 == 0) ? 1.0 : -1.0);
    }
    return w;
}

}  // namespace

BoundaryCurve BoundaryCurve::fourier(Eigen::VectorXd coefficients, double decay) {
    if (coefficients.size() < 1 || coefficients.size() % 2 == 0) {
        throw ContractError("fourier curve: need 2N+1 coefficients");
    }
    const int modes = static_cast<int>(coefficients.size() - 1) / 2;
    Eigen::VectorXd scale(modes + 1);
    scale(0) = 1.0 / std::sqrt(2.0 * kPi);
    for (int m = 1; m <= modes; ++m) scale(m) = std::pow(static_cast<double>(m), -decay) / std::sqrt(kPi);
    auto radial = [coefficients = std::move(coefficients), scale, modes](double s) {
        double q = coefficients(0) * scale(0);
        double dq = 0.0;
        double ddq = 0.0;
        for (int m = 1; m <= modes; ++m) {
            const double a = coefficients(2 * m - 1) * scale(m);
            const double b = coefficients(2 * m) * scale(m);
            const double c = std::cos(m * s);
            const double sn = std::sin(m * s);
            q += a * c + b * sn;
            dq += m * (b * c - a * sn);
            ddq -= m * m * (a * c + b * sn);
        }
        const double r = std::exp(q);
        return RadialValue{r, dq * r, (ddq + dq * dq) * r};
    };
    return starlike("fourier", radial);
}

BoundaryCurve BoundaryCurve::starlike(std::string name, std::function<RadialValue(double)> radial) {
    BoundaryCurve c;
    c.name_ = std::move(name);
    c.radial_ = std::move(radial);
    return c;
}

BoundaryCurve BoundaryCurve::parametric(std::string name, std::function<CurvePoint(double)> curve) {
    BoundaryCurve c;
    c.name_ = std::move(name);
    c.curve_ = std::move(curve);
    return c;
}

CurvePoint BoundaryCurve::eval(double s) const {
    if (curve_) return curve_(s);
    const RadialValue v = radial_(s);
    const Eigen::Vector2d e(std::cos(s), std::sin(s));
    const Eigen::Vector2d p(-std::sin(s), std::cos(s));
    return {v.r * e, v.dr * e + v.r * p, v.ddr * e + 2.0 * v.dr * p - v.r * e};
}

double BoundaryCurve::radius(double s) const {
    if (curve_) return curve_(s).z.norm();
    return radial_(s).r;
}

const std::vector<std::string>& catalog_names() {
    static const std::vector<std::string> names{"threelobes", "pear",           "bean",      "peanut",
                                                "acorn",      "roundedtriangle", "roundrect", "kite"};
    return names;
}

BoundaryCurve shape_catalog(const std::string& name) {
    if (name == "threelobes") return BoundaryCurve::starlike(name, threelobes);
    if (name == "pear") return BoundaryCurve::starlike(name, pear);
    if (name == "bean") return BoundaryCurve::starlike(name, bean);
    if (name == "peanut") return BoundaryCurve::starlike(name, peanut);
    if (name == "acorn") return BoundaryCurve::starlike(name, acorn);
    if (name == "roundedtriangle") return BoundaryCurve::starlike(name, roundedtriangle);
    if (name == "roundrect") return BoundaryCurve::starlike(name, roundrect);
    if (name == "kite") return BoundaryCurve::parametric(name, kite);
    throw ContractError("unknown shape '" + name + "'");
}

CurveGeometry curve_geometry(const BoundaryCurve& curve, int n) {
    if (n < 16 || n % 2 != 0) throw ContractError("curve_geometry: n must be even and >= 16");
    CurveGeometry g;
    g.n = n;
    g.points.resize(2, n);
    g.d1.resize(2, n);
    g.d2.resize(2, n);
    g.speed.resize(n);
    g.normals.resize(2, n);
    for (int j = 0; j < n; ++j) {
        const CurvePoint p = curve.eval(2.0 * kPi * j / n);
        g.points.col(j) = p.z;
        g.d1.col(j) = p.dz;
        g.d2.col(j) = p.ddz;
        g.speed(j) = p.dz.norm();
        if (!(g.speed(j) > 1e-12) || !p.z.allFinite()) {
            throw ForwardError("curve '" + curve.name() + "' is degenerate at node " + std::to_string(j));
        }
        g.normals.col(j) = Eigen::Vector2d(p.dz.y(), -p.dz.x()) / g.speed(j);
    }
    return g;
}

Eigen::MatrixXcd assemble_cfie(const CurveGeometry& g, double k, double tau, kernels::Execution exec) {
    const int n = g.n;
    const Eigen::VectorXd weights = log_weights(n);
    const double h = 2.0 * kPi / n;
    const double inv2pi = 1.0 / (2.0 * kPi);
    Eigen::MatrixXcd a(n, n);
#pragma omp parallel for schedule(static) if (exec == kernels::Execution::parallel)
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double speed = g.speed(j);
            const double w = weights(std::abs(i - j));
            if (i == j) {
                const double m1 = -inv2pi * speed;
                const cd m2 = (0.5 * kI - std::numbers::egamma / kPi - std::log(0.5 * k * speed) / kPi) * speed;
                const double l2 = -inv2pi * (g.d1(0, i) * g.d2(1, i) - g.d1(1, i) * g.d2(0, i)) / (speed * speed);
                a(i, i) = 1.0 + w * (-kI * tau * m1) + h * (l2 - kI * tau * m2);
                continue;
            }
            const Eigen::Vector2d diff = g.points.col(i) - g.points.col(j);
            const double r = diff.norm();
            const auto b = bessel::evaluate(k * r);
            const double sh = std::sin(kPi * (i - j) / n);
            const double logterm = std::log(4.0 * sh * sh);
            const double nd = g.d1(1, j) * diff.x() - g.d1(0, j) * diff.y();

            const cd m = 0.5 * kI * cd(b.j0, b.y0) * speed;
            const double m1 = -inv2pi * b.j0 * speed;
            const cd m2 = m - m1 * logterm;
            const cd l = 0.5 * kI * k * nd * cd(b.j1, b.y1) / r;
            const double l1 = -inv2pi * k * nd * b.j1 / r;
            const cd l2 = l - l1 * logterm;
            a(i, j) = w * (l1 - kI * tau * m1) + h * (l2 - kI * tau * m2);
        }
    }
    return a;
}

Eigen::VectorXcd cfie_rhs(const CurveGeometry& g, double k, double angle) {
    const Eigen::Vector2d d(std::cos(angle), std::sin(angle));
    Eigen::VectorXcd rhs(g.n);
    for (int j = 0; j < g.n; ++j) rhs(j) = -2.0 * std::exp(kI * (k * g.points.col(j).dot(d)));
    return rhs;
}

Eigen::VectorXcd far_field(const CurveGeometry& g, const Eigen::VectorXcd& phi, double k, double tau,
                           const std::vector<double>& observation_angles) {
    if (phi.size() != g.n) throw ContractError("far_field: density length does not match the geometry");
    const cd prefactor = std::exp(-0.25 * kI * kPi) / std::sqrt(8.0 * kPi * k) * (2.0 * kPi / g.n);
    Eigen::VectorXcd out(static_cast<Eigen::Index>(observation_angles.size()));
    for (std::size_t a = 0; a < observation_angles.size(); ++a) {
        const Eigen::Vector2d xhat(std::cos(observation_angles[a]), std::sin(observation_angles[a]));
        cd sum = 0.0;
        for (int j = 0; j < g.n; ++j) {
            const double factor = k * g.normals.col(j).dot(xhat) + tau;
            sum += factor * std::exp(-kI * (k * xhat.dot(g.points.col(j)))) * phi(j) * g.speed(j);
        }
        out(static_cast<Eigen::Index>(a)) = prefactor * sum;
    }
    return out;
}

std::complex<double> circle_far_field_series(double a, double k, double incident, double observed) {
    if (!(a > 0.0) || !(k > 0.0)) throw ContractError("circle_far_field_series: a and k must be positive");
    const double x = k * a;
    const double psi = observed - incident;
    auto ratio = [x](int n) {
        const double j = std::cyl_bessel_j(static_cast<double>(n), x);
        return j / cd(j, std::cyl_neumann(static_cast<double>(n), x));
    };
    cd sum = ratio(0);
    for (int n = 1; n < 10000; ++n) {
        const cd term = 2.0 * ratio(n) * std::cos(n * psi);
        sum += term;
        if (std::abs(ratio(n)) < 1e-14) break;
    }
    return -std::exp(-0.25 * kI * kPi) * std::sqrt(2.0 / (kPi * k)) * sum;
}

std::vector<double> ScatterConfig::observation_angles() const {
    std::vector<double> out(static_cast<std::size_t>(n_observations));
    for (int j = 0; j < n_observations; ++j) out[static_cast<std::size_t>(j)] = 2.0 * kPi * j / n_observations;
    return out;
}

void ScatterConfig::validate() const {
    if (!(k > 0.0)) throw ContractError("scatter: wavenumber must be positive");
    if (coupling() == 0.0) throw ContractError("scatter: coupling parameter must be nonzero");
    if (incident_angles.empty()) throw ContractError("scatter: need at least one incident angle");
    if (n_observations < 1) throw ContractError("scatter: need at least one observation direction");
    if (n_nodes < 16 || n_nodes % 2 != 0) throw ContractError("scatter: n_nodes must be even and >= 16");
}

Eigen::MatrixXcd far_field_data(const BoundaryCurve& curve, const ScatterConfig& cfg, kernels::Execution exec) {
    cfg.validate();
    const CurveGeometry g = curve_geometry(curve, cfg.n_nodes);
    const double tau = cfg.coupling();
    const Eigen::PartialPivLU<Eigen::MatrixXcd> lu(assemble_cfie(g, cfg.k, tau, exec));
    const auto angles = cfg.observation_angles();
    Eigen::MatrixXcd out(cfg.n_observations, static_cast<Eigen::Index>(cfg.incident_angles.size()));
    for (std::size_t l = 0; l < cfg.incident_angles.size(); ++l) {
        const Eigen::VectorXcd phi = lu.solve(cfie_rhs(g, cfg.k, cfg.incident_angles[l]));
        if (!phi.allFinite()) throw ForwardError("scatter: integral equation solve produced non-finite density");
        out.col(static_cast<Eigen::Index>(l)) = far_field(g, phi, cfg.k, tau, angles);
    }
    return out;
}

Eigen::VectorXd stack(const Eigen::MatrixXcd& data) {
    const Eigen::Index m = data.rows();
    const Eigen::Index l = data.cols();
    Eigen::VectorXd out(2 * m * l);
    for (Eigen::Index j = 0; j < m; ++j) {
        for (Eigen::Index c = 0; c < l; ++c) {
            out(j * l + c) = data(j, c).real();
            out(m * l + j * l + c) = data(j, c).imag();
        }
    }
    return out;
}

Eigen::MatrixXcd unstack(const Eigen::VectorXd& stacked, int m, int n_incident) {
    const Eigen::Index half = static_cast<Eigen::Index>(m) * n_incident;
    if (stacked.size() != 2 * half) throw ContractError("unstack: length does not match 2 m L");
    Eigen::MatrixXcd out(m, n_incident);
    for (int j = 0; j < m; ++j) {
        for (int c = 0; c < n_incident; ++c) out(j, c) = {stacked(j * n_incident + c), stacked(half + j * n_incident + c)};
    }
    return out;
}

Eigen::VectorXd scatter_forward(const Eigen::VectorXd& coefficients, double decay, const ScatterConfig& cfg) {
    return stack(far_field_data(BoundaryCurve::fourier(coefficients, decay), cfg));
}

Eigen::MatrixXcd add_noise(const Eigen::MatrixXcd& clean, double delta, std::uint64_t seed) {
    if (!(delta >= 0.0)) throw ContractError("add_noise: delta must be non-negative");
    StreamRng rng(seed);
    std::normal_distribution<double> normal;
    Eigen::MatrixXcd out = clean;
    for (Eigen::Index j = 0; j < out.rows(); ++j) {
        for (Eigen::Index c = 0; c < out.cols(); ++c) {
            const double re = normal(rng);
            const double im = normal(rng);
            out(j, c) += delta * std::abs(clean(j, c)) * cd(re, im);
        }
    }
    return out;
}

double hausdorff_distance(const BoundaryCurve& a, const BoundaryCurve& b, int samples) {
    if (samples < 3) throw ContractError("hausdorff_distance: need at least 3 samples");
    auto points = [samples](const BoundaryCurve& c) {
        Eigen::Matrix2Xd p(2, samples);
        for (int j = 0; j < samples; ++j) p.col(j) = c.eval(2.0 * kPi * j / samples).z;
        return p;
    };
    const Eigen::Matrix2Xd pa = points(a);
    const Eigen::Matrix2Xd pb = points(b);
    auto directed = [](const Eigen::Matrix2Xd& from, const Eigen::Matrix2Xd& to) {
        double worst = 0.0;
        for (Eigen::Index i = 0; i < from.cols(); ++i) {
            const double best = (to.colwise() - from.col(i)).colwise().squaredNorm().minCoeff();
            worst = std::max(worst, best);
        }
        return std::sqrt(worst);
    };
    return std::max(directed(pa, pb), directed(pb, pa));
}

ScatterModel::ScatterModel(int n_modes, double decay, ScatterConfig cfg)
    : n_modes_(n_modes), decay_(decay), cfg_(std::move(cfg)) {
    if (n_modes < 0) throw ContractError("scatter model: number of modes must be >= 0");
    cfg_.validate();
}

std::size_t ScatterModel::output_dim() const {
    return 2 * static_cast<std::size_t>(cfg_.n_observations) * cfg_.incident_angles.size();
}

Eigen::VectorXd ScatterModel::evaluate(const Eigen::VectorXd& coefficients) const {
    if (coefficients.size() != static_cast<Eigen::Index>(input_dim())) {
        throw ContractError("scatter model: expected " + std::to_string(input_dim()) + " coefficients");
    }
    return scatter_forward(coefficients, decay_, cfg_);
}

}  // namespace hbayes::scatter

#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hbayes/errors.hpp"
#include "hbayes/forward_model.hpp"
#include "hbayes/kernels.hpp"

/// Sound-soft acoustic scattering by a closed curve: combined-field integral
/// equation discretized with the logarithmic-splitting Nystrom method.
namespace hbayes::scatter {

/// Point, first and second derivative of a 2pi-periodic parametrization.
struct CurvePoint {
    Eigen::Vector2d z;
    Eigen::Vector2d dz;
    Eigen::Vector2d ddz;
};

/// Radius and its first two derivatives in s.
struct RadialValue {
    double r = 0.0;
    double dr = 0.0;
    double ddr = 0.0;
};

class BoundaryCurve {
public:
    /// r(s) = exp(q(s)), q = c0/sqrt(2pi) + sum_n n^-decay (a_n cos ns + b_n sin ns)/sqrt(pi),
    /// coefficients ordered (c0, a1, b1, ..., aN, bN).
    static BoundaryCurve fourier(Eigen::VectorXd coefficients, double decay);
    /// Starlike curve from a radial function.
    static BoundaryCurve starlike(std::string name, std::function<RadialValue(double)> radial);
    /// Directly parametrized curve (not necessarily starlike).
    static BoundaryCurve parametric(std::string name, std::function<CurvePoint(double)> curve);

    CurvePoint eval(double s) const;
    /// r(s) for starlike curves, |z(s)| for parametric ones.
    double radius(double s) const;
    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
    std::function<RadialValue(double)> radial_;
    std::function<CurvePoint(double)> curve_;
};

/// Names accepted by shape_catalog.
const std::vector<std::string>& catalog_names();
/// Throws ContractError for unknown names.
BoundaryCurve shape_catalog(const std::string& name);

/// Nodes s_j = 2 pi j / n and the curve data there.
struct CurveGeometry {
    int n = 0;
    Eigen::Matrix2Xd points;
    Eigen::Matrix2Xd d1;
    Eigen::Matrix2Xd d2;
    Eigen::VectorXd speed;
    Eigen::Matrix2Xd normals;  ///< outward unit normals
};

/// Throws ForwardError when the tangent vanishes; ContractError for odd n or n < 16.
CurveGeometry curve_geometry(const BoundaryCurve& curve, int n);

/// I + K - i tau S at the nodes.
Eigen::MatrixXcd assemble_cfie(const CurveGeometry& g, double k, double tau,
                               kernels::Execution exec = kernels::Execution::serial);

/// -2 exp(i k x.d) at the nodes for incidence angle `angle`.
Eigen::VectorXcd cfie_rhs(const CurveGeometry& g, double k, double angle);

/// Far field of the combined potential with density phi in the directions
/// at the given angles.
Eigen::VectorXcd far_field(const CurveGeometry& g, const Eigen::VectorXcd& phi, double k, double tau,
                           const std::vector<double>& observation_angles);

/// Far field of a sound-soft circle of radius a centred at the origin, for
/// incidence angle `incident` and observation angle `observed`.
std::complex<double> circle_far_field_series(double a, double k, double incident, double observed);

struct ScatterConfig {
    double k = 1.0;
    /// Coupling parameter; unset means tau = k.
    std::optional<double> tau;
    std::vector<double> incident_angles{0.0};
    int n_observations = 64;
    int n_nodes = 128;

    double coupling() const { return tau.value_or(k); }
    std::vector<double> observation_angles() const;
    void validate() const;
};

/// m x L complex matrix of far-field values, rows are observation directions.
Eigen::MatrixXcd far_field_data(const BoundaryCurve& curve, const ScatterConfig& cfg,
                                kernels::Execution exec = kernels::Execution::serial);

/// [Re; Im] stacking of far-field data, entry (j, l) at position j * L + l.
Eigen::VectorXd stack(const Eigen::MatrixXcd& data);
Eigen::MatrixXcd unstack(const Eigen::VectorXd& stacked, int m, int n_incident);

/// Fourier coefficients -> stacked far field.
Eigen::VectorXd scatter_forward(const Eigen::VectorXd& coefficients, double decay, const ScatterConfig& cfg);

/// Adds delta * |G_j| * (xi1 + i xi2) to every entry G_j, xi standard normal.
Eigen::MatrixXcd add_noise(const Eigen::MatrixXcd& clean, double delta, std::uint64_t seed);

/// Symmetric Hausdorff distance between two curves sampled at `samples` points.
double hausdorff_distance(const BoundaryCurve& a, const BoundaryCurve& b, int samples = 2048);

class ScatterModel final : public ForwardModel {
public:
    ScatterModel(int n_modes, double decay, ScatterConfig cfg);

    std::size_t input_dim() const override { return static_cast<std::size_t>(2 * n_modes_ + 1); }
    std::size_t output_dim() const override;
    Eigen::VectorXd evaluate(const Eigen::VectorXd& coefficients) const override;
    std::string name() const override { return "scatter"; }

    double decay() const noexcept { return decay_; }
    const ScatterConfig& config() const noexcept { return cfg_; }

private:
    int n_modes_;
    double decay_;
    ScatterConfig cfg_;
};

}  // namespace hbayes::scatter

#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "hbayes/errors.hpp"
#include "hbayes/forward_model.hpp"

/// Steady heat conduction div(kappa grad u) = 0 on [0,1] x [0,0.6] with
/// circular inclusions of unknown conductivity, solved with linear triangles.
namespace hbayes::heat {

struct Inclusion {
    Eigen::Vector2d center;
    double radius = 0.0;
    int index = 0;  ///< 1..K, position of its conductivity in the unknown vector
};

struct HeatGeometry {
    static constexpr double width = 1.0;
    static constexpr double height = 0.6;

    double background_conductivity = 15.0;
    std::vector<Inclusion> inclusions;
    double top_temperature = 200.0;  ///< u on x2 = height
    double bottom_flux = 2000.0;     ///< -kappa0 du/dx2 on x2 = 0

    /// Throws ContractError if inclusions overlap, touch the boundary or are
    /// not indexed 1..K.
    void validate() const;
};

/// Raised by build_mesh when an inclusion cannot be resolved at the requested
/// resolution.
class RefinementError : public ForwardError {
public:
    using ForwardError::ForwardError;
};

struct Mesh {
    std::vector<Eigen::Vector2d> vertices;
    std::vector<std::array<int, 3>> triangles;  ///< counter-clockwise
    std::vector<int> region;                    ///< 0 background, k for inclusion k
    /// Tensor grid lines; cell (i, j) spans [xs[i], xs[i+1]] x [ys[j], ys[j+1]]
    /// up to the vertices moved onto inclusion boundaries.
    std::vector<double> xs;
    std::vector<double> ys;

    int nx() const { return static_cast<int>(xs.size()) - 1; }
    int ny() const { return static_cast<int>(ys.size()) - 1; }
    int vertex_id(int i, int j) const { return j * (nx() + 1) + i; }
    double triangle_area(std::size_t t) const;
};

/// Structured mesh with resolution cells across the width and
/// ceil(0.6 * resolution) cells across the height, two triangles per cell.
/// Grid lines are graded so every inclusion diameter spans at least
/// 8.5 cells in each direction.
Mesh build_mesh(const HeatGeometry& geometry, int resolution);

/// Stiffness split by region so that A(kappa) = sum_r kappa_r A_r is cheap to
/// form. Immutable after construction and safe to share between threads.
class HeatSolver {
public:
    HeatSolver(Mesh mesh, HeatGeometry geometry);

    const Mesh& mesh() const noexcept { return mesh_; }
    const HeatGeometry& geometry() const noexcept { return geometry_; }
    std::size_t inclusion_count() const noexcept { return geometry_.inclusions.size(); }

    /// Nodal temperatures for the given inclusion conductivities.
    Eigen::VectorXd solve(std::span<const double> conductivities) const;

    /// Full (unconstrained) stiffness matrix for the given conductivities.
    Eigen::SparseMatrix<double> stiffness(std::span<const double> conductivities) const;
    /// Consistent bottom-edge load vector.
    const Eigen::VectorXd& load() const noexcept { return load_; }
    /// True for nodes with a prescribed temperature.
    const std::vector<bool>& dirichlet() const noexcept { return dirichlet_; }
    /// Sum of per-triangle energies u_e^T K_e u_e.
    double element_energy(const Eigen::VectorXd& nodal, std::span<const double> conductivities) const;
    /// Heat leaving through the Dirichlet boundary, from consistent reactions.
    double dirichlet_outflow(const Eigen::VectorXd& nodal, std::span<const double> conductivities) const;

private:
    std::vector<double> region_conductivity(std::span<const double> conductivities) const;
    Eigen::Matrix3d element_stiffness(std::size_t t) const;

    Mesh mesh_;
    HeatGeometry geometry_;
    std::vector<Eigen::SparseMatrix<double>> region_ff_;  ///< free x free block per region
    std::vector<Eigen::SparseMatrix<double>> region_fd_;  ///< free x Dirichlet block per region
    std::vector<Eigen::SparseMatrix<double>> region_full_;
    std::vector<int> free_index_;   ///< node -> position among free nodes or -1
    std::vector<int> fixed_index_;  ///< node -> position among Dirichlet nodes or -1
    std::vector<bool> dirichlet_;
    Eigen::VectorXd fixed_values_;
    Eigen::VectorXd load_;
};

/// Convenience wrapper building a HeatSolver for one solve.
Eigen::VectorXd solve_heat(const Mesh& mesh, const HeatGeometry& geometry,
                           std::span<const double> conductivities);

/// Barycentric interpolation of a nodal field. Throws ContractError for
/// points outside the domain.
Eigen::VectorXd observe(const Mesh& mesh, const Eigen::VectorXd& nodal,
                        std::span<const Eigen::Vector2d> points);

struct LognormalHyper {
    double lambda0 = 0.0;
    double zeta0 = 0.0;
};

/// (lambda0, zeta0) of the lognormal with the given mean and standard deviation.
LognormalHyper lognormal_hyperparams(double mean, double sd);

/// kappa_i = exp(lambda0 + zeta0 xi_i). Throws std::range_error on overflow.
Eigen::VectorXd xi_to_kappa(const Eigen::VectorXd& xi, double lambda0, double zeta0);

/// Temperatures at sensor points as a function of standardized log
/// conductivities xi.
class HeatModel final : public ForwardModel {
public:
    HeatModel(const HeatGeometry& geometry, int resolution, std::vector<Eigen::Vector2d> sensors,
              LognormalHyper hyper);

    std::size_t input_dim() const override { return solver_.inclusion_count(); }
    std::size_t output_dim() const override { return sensors_.size(); }
    Eigen::VectorXd evaluate(const Eigen::VectorXd& xi) const override;
    std::string name() const override { return "heat"; }

    /// Temperatures at the sensors for physical conductivities.
    Eigen::VectorXd observe_conductivities(const Eigen::VectorXd& kappa) const;
    const HeatSolver& solver() const noexcept { return solver_; }
    const std::vector<Eigen::Vector2d>& sensors() const noexcept { return sensors_; }
    const LognormalHyper& hyper() const noexcept { return hyper_; }

private:
    HeatSolver solver_;
    std::vector<Eigen::Vector2d> sensors_;
    LognormalHyper hyper_;
};

/// Uniform interior grid of nx x ny sensors at x = i/(nx+1), y = 0.6 j/(ny+1).
std::vector<Eigen::Vector2d> sensor_grid(int nx, int ny);

}  // namespace hbayes::heat

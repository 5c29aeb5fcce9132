#include "hbayes/heat.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/SparseCholesky>

namespace hbayes::heat {

namespace {

constexpr double kCellsPerDiameter = 8.5;
constexpr double kBaseGrading = 1.0;

struct Band {
    double lo;
    double hi;
};

std::vector<Band> merge(std::vector<Band> bands) {
    std::sort(bands.begin(), bands.end(), [](const Band& a, const Band& b) { return a.lo < b.lo; });
    std::vector<Band> out;
    for (const auto& b : bands) {
        if (!out.empty() && b.lo <= out.back().hi) {
            out.back().hi = std::max(out.back().hi, b.hi);
        } else {
            out.push_back(b);
        }
    }
    return out;
}

double covered(const std::vector<Band>& bands, double x) {
    double s = 0.0;
    for (const auto& b : bands) s += std::clamp(x, b.lo, b.hi) - b.lo;
    return s;
}

// Grid lines on [0, length] with density 1 + alpha inside the bands.
std::vector<double> graded_lines(double length, int cells, const std::vector<double>& centers,
                                 const std::vector<double>& radii) {
    std::vector<Band> raw;
    for (std::size_t k = 0; k < centers.size(); ++k) {
        raw.push_back({std::max(0.0, centers[k] - radii[k]), std::min(length, centers[k] + radii[k])});
    }
    const auto bands = merge(raw);
    const double band_len = covered(bands, length);

    double alpha = raw.empty() ? 0.0 : kBaseGrading;
    for (double r : radii) {
        const double span = 2.0 * r * cells;
        if (span >= kCellsPerDiameter * length) continue;
        if (span <= kCellsPerDiameter * band_len) {
            throw RefinementError("build_mesh: inclusion of radius " + std::to_string(r) +
                                  " cannot be resolved with " + std::to_string(cells) +
                                  " cells; increase the resolution");
        }
        const double need = (kCellsPerDiameter * length - span) / (span - kCellsPerDiameter * band_len);
        alpha = std::max(alpha, need * (1.0 + 1e-9));
    }

    const double total = length + alpha * band_len;
    auto cdf = [&](double x) { return (x + alpha * covered(bands, x)) / total; };
    std::vector<double> lines(static_cast<std::size_t>(cells) + 1);
    lines.front() = 0.0;
    lines.back() = length;
    for (int i = 1; i < cells; ++i) {
        const double target = static_cast<double>(i) / cells;
        double lo = 0.0;
        double hi = length;
        for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (cdf(mid) < target) lo = mid;
            else hi = mid;
        }
        lines[static_cast<std::size_t>(i)] = 0.5 * (lo + hi);
    }
    return lines;
}

bool near(double a, double b) { return std::abs(a - b) <= 1e-12; }

double signed_area(const std::vector<Eigen::Vector2d>& v, const std::array<int, 3>& tri) {
    const Eigen::Vector2d e1 = v[tri[1]] - v[tri[0]];
    const Eigen::Vector2d e2 = v[tri[2]] - v[tri[0]];
    return 0.5 * (e1.x() * e2.y() - e1.y() * e2.x());
}

// Moves the vertex nearer to the circle on every grid edge the circle crosses
// onto the circle, so the labelled regions approximate the inclusions by
// inscribed polygons instead of staircases. Snaps that would squash a
// triangle are undone; the rule does not depend on vertex order.
void snap_to_inclusions(Mesh& mesh, const HeatGeometry& geometry) {
    constexpr double kMinAreaRatio = 0.01;
    const auto nv = mesh.vertices.size();
    std::vector<Eigen::Vector2d> target(mesh.vertices);
    std::vector<bool> moved(nv, false);
    for (const auto& inc : geometry.inclusions) {
        std::vector<double> dist(nv);
        for (std::size_t v = 0; v < nv; ++v) dist[v] = (mesh.vertices[v] - inc.center).norm() - inc.radius;
        for (const auto& tri : mesh.triangles) {
            for (int e = 0; e < 3; ++e) {
                const int a = tri[e];
                const int b = tri[(e + 1) % 3];
                if (dist[a] * dist[b] >= 0.0) continue;
                const int v = std::abs(dist[a]) < std::abs(dist[b]) || (std::abs(dist[a]) == std::abs(dist[b]) && a < b) ? a : b;
                if (moved[v]) continue;
                const Eigen::Vector2d off = mesh.vertices[v] - inc.center;
                target[v] = inc.center + inc.radius * off / off.norm();
                moved[v] = true;
            }
        }
    }
    std::vector<double> original(mesh.triangles.size());
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) original[t] = signed_area(mesh.vertices, mesh.triangles[t]);
    for (bool changed = true; changed;) {
        changed = false;
        std::vector<bool> undo(nv, false);
        for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
            if (signed_area(target, mesh.triangles[t]) < kMinAreaRatio * original[t]) {
                for (int v : mesh.triangles[t]) undo[v] = moved[v];
            }
        }
        for (std::size_t v = 0; v < nv; ++v) {
            if (undo[v]) {
                target[v] = mesh.vertices[v];
                moved[v] = false;
                changed = true;
            }
        }
    }
    mesh.vertices = std::move(target);
}

}  // namespace

void HeatGeometry::validate() const {
    if (!(background_conductivity > 0.0)) throw ContractError("background conductivity must be positive");
    std::vector<bool> seen(inclusions.size() + 1, false);
    for (std::size_t a = 0; a < inclusions.size(); ++a) {
        const auto& inc = inclusions[a];
        if (!(inc.radius > 0.0)) throw ContractError("inclusion radius must be positive");
        if (inc.index < 1 || static_cast<std::size_t>(inc.index) > inclusions.size() ||
            seen[static_cast<std::size_t>(inc.index)]) {
            throw ContractError("inclusion indices must be distinct and in 1..K");
        }
        seen[static_cast<std::size_t>(inc.index)] = true;
        const auto& c = inc.center;
        if (c.x() - inc.radius <= 0.0 || c.x() + inc.radius >= width || c.y() - inc.radius <= 0.0 ||
            c.y() + inc.radius >= height) {
            throw ContractError("inclusion " + std::to_string(inc.index) + " is not strictly inside the domain");
        }
        for (std::size_t b = 0; b < a; ++b) {
            const auto& other = inclusions[b];
            if ((c - other.center).norm() <= inc.radius + other.radius) {
                throw ContractError("inclusions " + std::to_string(other.index) + " and " +
                                    std::to_string(inc.index) + " overlap");
            }
        }
    }
}

double Mesh::triangle_area(std::size_t t) const {
    const auto& tri = triangles[t];
    const Eigen::Vector2d e1 = vertices[tri[1]] - vertices[tri[0]];
    const Eigen::Vector2d e2 = vertices[tri[2]] - vertices[tri[0]];
    return 0.5 * (e1.x() * e2.y() - e1.y() * e2.x());
}

Mesh build_mesh(const HeatGeometry& geometry, int resolution) {
    if (resolution < 8) throw ContractError("build_mesh: resolution must be >= 8");
    geometry.validate();
    const int nx = resolution;
    const int ny = static_cast<int>(std::ceil(HeatGeometry::height * resolution - 1e-9));

    std::vector<double> cx, cy, r;
    for (const auto& inc : geometry.inclusions) {
        cx.push_back(inc.center.x());
        cy.push_back(inc.center.y());
        r.push_back(inc.radius);
    }
    Mesh mesh;
    mesh.xs = graded_lines(HeatGeometry::width, nx, cx, r);
    mesh.ys = graded_lines(HeatGeometry::height, ny, cy, r);

    mesh.vertices.reserve(static_cast<std::size_t>((nx + 1) * (ny + 1)));
    for (int j = 0; j <= ny; ++j) {
        for (int i = 0; i <= nx; ++i) mesh.vertices.emplace_back(mesh.xs[i], mesh.ys[j]);
    }
    mesh.triangles.reserve(static_cast<std::size_t>(2 * nx * ny));
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            const int v00 = mesh.vertex_id(i, j);
            const int v10 = mesh.vertex_id(i + 1, j);
            const int v01 = mesh.vertex_id(i, j + 1);
            const int v11 = mesh.vertex_id(i + 1, j + 1);
            // Diagonals mirror about x = width / 2.
            if (2 * i + 1 < nx) {
                mesh.triangles.push_back({v00, v10, v11});
                mesh.triangles.push_back({v00, v11, v01});
            } else {
                mesh.triangles.push_back({v00, v10, v01});
                mesh.triangles.push_back({v10, v11, v01});
            }
        }
    }
    snap_to_inclusions(mesh, geometry);
    mesh.region.assign(mesh.triangles.size(), 0);
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& tri = mesh.triangles[t];
        const Eigen::Vector2d g = (mesh.vertices[tri[0]] + mesh.vertices[tri[1]] + mesh.vertices[tri[2]]) / 3.0;
        for (const auto& inc : geometry.inclusions) {
            if ((g - inc.center).squaredNorm() < inc.radius * inc.radius) {
                mesh.region[t] = inc.index;
                break;
            }
        }
    }
    return mesh;
}

HeatSolver::HeatSolver(Mesh mesh, HeatGeometry geometry) : mesh_(std::move(mesh)), geometry_(std::move(geometry)) {
    geometry_.validate();
    const auto nv = mesh_.vertices.size();
    const std::size_t regions = geometry_.inclusions.size() + 1;

    dirichlet_.assign(nv, false);
    std::vector<double> value(nv, 0.0);
    for (std::size_t v = 0; v < nv; ++v) {
        const auto& p = mesh_.vertices[v];
        if (near(p.x(), 0.0) || near(p.x(), HeatGeometry::width)) {
            dirichlet_[v] = true;  // side value 0 also holds at the top corners
        } else if (near(p.y(), HeatGeometry::height)) {
            dirichlet_[v] = true;
            value[v] = geometry_.top_temperature;
        }
    }
    free_index_.assign(nv, -1);
    fixed_index_.assign(nv, -1);
    int n_free = 0;
    int n_fixed = 0;
    for (std::size_t v = 0; v < nv; ++v) {
        if (dirichlet_[v]) fixed_index_[v] = n_fixed++;
        else free_index_[v] = n_free++;
    }
    fixed_values_.resize(n_fixed);
    for (std::size_t v = 0; v < nv; ++v) {
        if (dirichlet_[v]) fixed_values_(fixed_index_[v]) = value[v];
    }

    using Triplets = std::vector<Eigen::Triplet<double>>;
    std::vector<Triplets> ff(regions), fd(regions), full(regions);
    for (std::size_t t = 0; t < mesh_.triangles.size(); ++t) {
        const auto& tri = mesh_.triangles[t];
        if (!(mesh_.triangle_area(t) > 0.0)) throw ForwardError("degenerate or inverted triangle in mesh");
        const Eigen::Matrix3d ke = element_stiffness(t);
        const auto reg = static_cast<std::size_t>(mesh_.region[t]);
        for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) {
                const int va = tri[a];
                const int vb = tri[b];
                full[reg].emplace_back(va, vb, ke(a, b));
                if (free_index_[va] < 0) continue;
                if (free_index_[vb] >= 0) ff[reg].emplace_back(free_index_[va], free_index_[vb], ke(a, b));
                else fd[reg].emplace_back(free_index_[va], fixed_index_[vb], ke(a, b));
            }
        }
    }
    for (std::size_t r = 0; r < regions; ++r) {
        Eigen::SparseMatrix<double> a(n_free, n_free), b(n_free, n_fixed), c(nv, nv);
        a.setFromTriplets(ff[r].begin(), ff[r].end());
        b.setFromTriplets(fd[r].begin(), fd[r].end());
        c.setFromTriplets(full[r].begin(), full[r].end());
        region_ff_.push_back(std::move(a));
        region_fd_.push_back(std::move(b));
        region_full_.push_back(std::move(c));
    }

    // Consistent Neumann load q * int phi_i along x2 = 0.
    load_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nv));
    for (int i = 0; i < mesh_.nx(); ++i) {
        const double h = mesh_.xs[i + 1] - mesh_.xs[i];
        load_(mesh_.vertex_id(i, 0)) += 0.5 * h * geometry_.bottom_flux;
        load_(mesh_.vertex_id(i + 1, 0)) += 0.5 * h * geometry_.bottom_flux;
    }
}

Eigen::Matrix3d HeatSolver::element_stiffness(std::size_t t) const {
    const auto& tri = mesh_.triangles[t];
    const Eigen::Vector2d& p0 = mesh_.vertices[tri[0]];
    const Eigen::Vector2d& p1 = mesh_.vertices[tri[1]];
    const Eigen::Vector2d& p2 = mesh_.vertices[tri[2]];
    const double area = mesh_.triangle_area(t);
    Eigen::Matrix<double, 2, 3> grad;
    grad << p1.y() - p2.y(), p2.y() - p0.y(), p0.y() - p1.y(),
            p2.x() - p1.x(), p0.x() - p2.x(), p1.x() - p0.x();
    return grad.transpose() * grad / (4.0 * area);
}

std::vector<double> HeatSolver::region_conductivity(std::span<const double> conductivities) const {
    if (conductivities.size() != geometry_.inclusions.size()) {
        throw ContractError("expected " + std::to_string(geometry_.inclusions.size()) + " conductivities, got " +
                            std::to_string(conductivities.size()));
    }
    std::vector<double> k(conductivities.size() + 1);
    k[0] = geometry_.background_conductivity;
    for (std::size_t i = 0; i < conductivities.size(); ++i) {
        if (!(conductivities[i] > 0.0) || !std::isfinite(conductivities[i])) {
            throw ContractError("conductivities must be positive and finite");
        }
        k[i + 1] = conductivities[i];
    }
    return k;
}

Eigen::SparseMatrix<double> HeatSolver::stiffness(std::span<const double> conductivities) const {
    const auto k = region_conductivity(conductivities);
    Eigen::SparseMatrix<double> a = k[0] * region_full_[0];
    for (std::size_t r = 1; r < k.size(); ++r) a += k[r] * region_full_[r];
    return a;
}

Eigen::VectorXd HeatSolver::solve(std::span<const double> conductivities) const {
    const auto k = region_conductivity(conductivities);
    Eigen::SparseMatrix<double> a = k[0] * region_ff_[0];
    Eigen::SparseMatrix<double> b = k[0] * region_fd_[0];
    for (std::size_t r = 1; r < k.size(); ++r) {
        a += k[r] * region_ff_[r];
        b += k[r] * region_fd_[r];
    }
    Eigen::VectorXd rhs(a.rows());
    for (std::size_t v = 0; v < dirichlet_.size(); ++v) {
        if (free_index_[v] >= 0) rhs(free_index_[v]) = load_(static_cast<Eigen::Index>(v));
    }
    rhs -= b * fixed_values_;

    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(a);
    if (ldlt.info() != Eigen::Success) throw ForwardError("heat stiffness matrix is singular");
    const Eigen::VectorXd free_u = ldlt.solve(rhs);
    if (ldlt.info() != Eigen::Success) throw ForwardError("heat solve failed");

    Eigen::VectorXd u(static_cast<Eigen::Index>(dirichlet_.size()));
    for (std::size_t v = 0; v < dirichlet_.size(); ++v) {
        u(static_cast<Eigen::Index>(v)) = free_index_[v] >= 0 ? free_u(free_index_[v]) : fixed_values_(fixed_index_[v]);
    }
    return u;
}

double HeatSolver::element_energy(const Eigen::VectorXd& nodal, std::span<const double> conductivities) const {
    const auto k = region_conductivity(conductivities);
    double e = 0.0;
    for (std::size_t t = 0; t < mesh_.triangles.size(); ++t) {
        const auto& tri = mesh_.triangles[t];
        const Eigen::Vector3d ue(nodal(tri[0]), nodal(tri[1]), nodal(tri[2]));
        e += k[static_cast<std::size_t>(mesh_.region[t])] * ue.dot(element_stiffness(t) * ue);
    }
    return e;
}

double HeatSolver::dirichlet_outflow(const Eigen::VectorXd& nodal, std::span<const double> conductivities) const {
    const Eigen::VectorXd residual = stiffness(conductivities) * nodal - load_;
    double out = 0.0;
    for (std::size_t v = 0; v < dirichlet_.size(); ++v) {
        if (dirichlet_[v]) out -= residual(static_cast<Eigen::Index>(v));
    }
    return out;
}

Eigen::VectorXd solve_heat(const Mesh& mesh, const HeatGeometry& geometry, std::span<const double> conductivities) {
    return HeatSolver(mesh, geometry).solve(conductivities);
}

Eigen::VectorXd observe(const Mesh& mesh, const Eigen::VectorXd& nodal, std::span<const Eigen::Vector2d> points) {
    if (nodal.size() != static_cast<Eigen::Index>(mesh.vertices.size())) {
        throw ContractError("observe: nodal vector does not match the mesh");
    }
    Eigen::VectorXd out(static_cast<Eigen::Index>(points.size()));
    for (std::size_t k = 0; k < points.size(); ++k) {
        const auto& p = points[k];
        if (!(p.x() >= mesh.xs.front() && p.x() <= mesh.xs.back() && p.y() >= mesh.ys.front() &&
              p.y() <= mesh.ys.back())) {
            throw ContractError("observe: point (" + std::to_string(p.x()) + ", " + std::to_string(p.y()) +
                                ") lies outside the mesh");
        }
        const auto cell = [](const std::vector<double>& lines, double x) {
            const auto it = std::upper_bound(lines.begin(), lines.end(), x);
            const auto i = static_cast<int>(it - lines.begin()) - 1;
            return std::clamp(i, 0, static_cast<int>(lines.size()) - 2);
        };
        const int ci = cell(mesh.xs, p.x());
        const int cj = cell(mesh.ys, p.y());
        // Snapped vertices can move a point into a neighbouring cell's triangle.
        double best_min = -std::numeric_limits<double>::infinity();
        double value = 0.0;
        for (int j = std::max(cj - 1, 0); j <= std::min(cj + 1, mesh.ny() - 1); ++j) {
            for (int i = std::max(ci - 1, 0); i <= std::min(ci + 1, mesh.nx() - 1); ++i) {
                const auto first = static_cast<std::size_t>(2 * (j * mesh.nx() + i));
                for (std::size_t t = first; t < first + 2; ++t) {
                    const auto& tri = mesh.triangles[t];
                    const Eigen::Vector2d& a = mesh.vertices[tri[0]];
                    const Eigen::Vector2d& b = mesh.vertices[tri[1]];
                    const Eigen::Vector2d& c = mesh.vertices[tri[2]];
                    const double det = (b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y());
                    const double l1 = ((p.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (p.y() - a.y())) / det;
                    const double l2 = ((b.x() - a.x()) * (p.y() - a.y()) - (p.x() - a.x()) * (b.y() - a.y())) / det;
                    const double l0 = 1.0 - l1 - l2;
                    const double m = std::min({l0, l1, l2});
                    if (m > best_min) {
                        best_min = m;
                        value = l0 * nodal(tri[0]) + l1 * nodal(tri[1]) + l2 * nodal(tri[2]);
                    }
                }
            }
        }
        out(static_cast<Eigen::Index>(k)) = value;
    }
    return out;
}

LognormalHyper lognormal_hyperparams(double mean, double sd) {
    if (!(mean > 0.0) || !(sd > 0.0)) throw ContractError("lognormal_hyperparams: mean and sd must be positive");
    const double ratio = sd / mean;
    const double zeta_sq = std::log1p(ratio * ratio);
    return {std::log(mean) - 0.5 * zeta_sq, std::sqrt(zeta_sq)};
}

Eigen::VectorXd xi_to_kappa(const Eigen::VectorXd& xi, double lambda0, double zeta0) {
    Eigen::VectorXd kappa(xi.size());
    for (Eigen::Index i = 0; i < xi.size(); ++i) {
        const double e = lambda0 + zeta0 * xi(i);
        if (!(e < 709.0)) throw std::range_error("xi_to_kappa: conductivity overflows");
        kappa(i) = std::exp(e);
    }
    return kappa;
}

HeatModel::HeatModel(const HeatGeometry& geometry, int resolution, std::vector<Eigen::Vector2d> sensors,
                     LognormalHyper hyper)
    : solver_(build_mesh(geometry, resolution), geometry), sensors_(std::move(sensors)), hyper_(hyper) {
    for (const auto& s : sensors_) {
        if (!(s.x() > 0.0 && s.x() < HeatGeometry::width && s.y() > 0.0 && s.y() < HeatGeometry::height)) {
            throw ContractError("sensors must lie strictly inside the domain");
        }
    }
}

Eigen::VectorXd HeatModel::observe_conductivities(const Eigen::VectorXd& kappa) const {
    const Eigen::VectorXd u = solver_.solve(std::span<const double>(kappa.data(), static_cast<std::size_t>(kappa.size())));
    return observe(solver_.mesh(), u, sensors_);
}

Eigen::VectorXd HeatModel::evaluate(const Eigen::VectorXd& xi) const {
    if (xi.size() != static_cast<Eigen::Index>(input_dim())) throw ContractError("heat model: wrong unknown length");
    return observe_conductivities(xi_to_kappa(xi, hyper_.lambda0, hyper_.zeta0));
}

std::vector<Eigen::Vector2d> sensor_grid(int nx, int ny) {
    if (nx < 1 || ny < 1) throw ContractError("sensor_grid: counts must be positive");
    std::vector<Eigen::Vector2d> out;
    for (int j = 1; j <= ny; ++j) {
        for (int i = 1; i <= nx; ++i) {
            out.emplace_back(HeatGeometry::width * i / (nx + 1), HeatGeometry::height * j / (ny + 1));
        }
    }
    return out;
}

}  // namespace hbayes::heat

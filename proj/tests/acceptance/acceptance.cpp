// Acceptance checks 1-9. Usage: acceptance [N ...] [--work-dir DIR]
// Prints one PASS/FAIL line per criterion; exit status 0 iff all pass.
#include <chrono>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>

#include "hbayes/experiment.hpp"
#include "hbayes/flow.hpp"
#include "hbayes/heat.hpp"
#include "hbayes/kernels.hpp"
#include "hbayes/reference.hpp"
#include "hbayes/scatter.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
namespace ex = hbayes::experiment;
using json = nlohmann::json;
using namespace hbayes;

namespace {

const fs::path kSource = HBAYES_SOURCE_DIR;
fs::path work_dir = fs::temp_directory_path() / "hbayes_acceptance";

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double x) {
    std::ostringstream s;
    s.precision(3);
    s << x;
    return s.str();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_config(const fs::path& config, const fs::path& out, std::optional<std::uint64_t> seed = std::nullopt) {
    ex::Options o;
    o.out_dir = out;
    o.quiet = true;
    o.seed = seed;
    fs::remove_all(out);
    std::ostringstream log;
    return ex::run_command(config, o, log, std::cerr);
}

// ---- 1: score correctness ---------------------------------------------------

Outcome criterion1() {
    testing::Rng rng(20240101);
    double worst = 0.0;
    int pairs = 0;
    for (std::size_t d : {1u, 2u, 5u}) {
        for (int i = 0; i < 200; ++i, ++pairs) {
            const auto g = testing::random_gaussian(d, rng);
            const Eigen::VectorXd x = testing::random_point(g.mean(), rng);
            const auto f = [&](const Eigen::VectorXd& eta) {
                return logpdf(GaussianParams::from_flat(d, {eta.data(), static_cast<std::size_t>(eta.size())}), x);
            };
            worst = std::max(worst, testing::max_rel_error(score(g, x), testing::central_gradient(f, g.flat())));
        }
    }
    for (std::size_t m : {2u, 3u}) {
        for (std::size_t d : {1u, 2u}) {
            for (int i = 0; i < 200; ++i, ++pairs) {
                const auto mix = testing::random_mixture(m, d, rng);
                std::uniform_int_distribution<std::size_t> pick(0, m - 1);
                const Eigen::VectorXd x = testing::random_point(mix.components()[pick(rng)].mean(), rng);
                const auto f = [&](const Eigen::VectorXd& eta) {
                    return mix_logpdf(MixtureParams::from_flat(m, d, {eta.data(), static_cast<std::size_t>(eta.size())}), x);
                };
                worst = std::max(worst, testing::max_rel_error(mix_score(mix, x), testing::central_gradient(f, mix.flat())));
            }
        }
    }
    return {worst < 1e-5, std::to_string(pairs) + " pairs, worst relative error " + fmt(worst)};
}

// ---- 2: Fisher oracle -------------------------------------------------------

Outcome criterion2() {
    // Quadrature of s s^T against N(0,1), s = (x, 1 - x^2).
    Eigen::Matrix2d oracle = Eigen::Matrix2d::Zero();
    const int n = 24001;
    const double h = 24.0 / (n - 1);
    for (int i = 0; i < n; ++i) {
        const double x = -12.0 + i * h;
        const double w = (i == 0 || i == n - 1 ? 0.5 : 1.0) * h * std::exp(-0.5 * x * x) / std::sqrt(2 * std::numbers::pi);
        const Eigen::Vector2d s(x, 1.0 - x * x);
        oracle += w * s * s.transpose();
    }
    EstimatorConfig cfg;
    cfg.n_samples = 100000;
    cfg.ridge = 0.0;
    cfg.seed = 2;
    const Eigen::MatrixXd fisher = estimate_fisher(GaussianParams::standard(1), cfg);
    double worst = 0.0;
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            worst = std::max(worst, std::abs(fisher(i, j) - oracle(i, j)) / std::sqrt(oracle(i, i) * oracle(j, j)));
        }
    }
    const bool oracle_ok = (oracle - Eigen::Matrix2d(Eigen::Vector2d(1, 2).asDiagonal())).cwiseAbs().maxCoeff() < 1e-9;
    return {oracle_ok && worst < 0.05,
            "quadrature oracle diag(" + fmt(oracle(0, 0)) + ", " + fmt(oracle(1, 1)) + "), MC estimate [[" + fmt(fisher(0, 0)) +
                ", " + fmt(fisher(0, 1)) + "], [" + fmt(fisher(1, 0)) + ", " + fmt(fisher(1, 1)) + "]], worst gap " +
                fmt(100 * worst) + "%"};
}

// ---- 3: conjugate convergence -----------------------------------------------

struct ConjugateTally {
    int within = 0;
    double worst = 0.0;
};

ConjugateTally conjugate_runs(const std::string& config, double tol, const fs::path& out_root, bool& ok) {
    ConjugateTally tally;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const fs::path out = out_root / ("seed" + std::to_string(seed));
        if (run_config(kSource / "configs" / config, out, seed) != 0) {
            ok = false;
            continue;
        }
        const json cmp = json::parse(slurp(out / "comparison.json"));
        double gap = 0.0;
        for (const char* key : {"mean", "variance"}) {
            for (const auto& g : cmp["flow_vs_closed_form"][key]) gap = std::max(gap, g.get<double>());
        }
        tally.worst = std::max(tally.worst, gap);
        tally.within += gap < tol;
    }
    return tally;
}

Outcome criterion3_into(const fs::path& root) {
    bool ok = true;
    const auto one = conjugate_runs("linear_1d.json", 0.02, root / "linear_1d", ok);
    const auto two = conjugate_runs("linear_2d.json", 0.03, root / "linear_2d", ok);
    return {ok && one.within >= 9 && two.within >= 9,
            "1D " + std::to_string(one.within) + "/10 within 2% (worst " + fmt(100 * one.worst) + "%), 2D " +
                std::to_string(two.within) + "/10 within 3% (worst " + fmt(100 * two.worst) + "%)"};
}

Outcome criterion3() { return criterion3_into(work_dir / "c3"); }

// ---- 4: deviation equivalence -----------------------------------------------

bool same_trajectory(const FlowTrajectory& a, const FlowTrajectory& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const Eigen::VectorXd fa = flat(a[i].params);
        const Eigen::VectorXd fb = flat(b[i].params);
        if (fa.size() != fb.size() || a[i].t != b[i].t) return false;
        if (std::memcmp(fa.data(), fb.data(), sizeof(double) * static_cast<std::size_t>(fa.size())) != 0) return false;
    }
    return true;
}

Outcome criterion4() {
    Eigen::MatrixXd A(2, 2);
    A << 1, 0, 1, 1;
    const auto model = std::make_shared<LinearModel>(A);
    const Eigen::VectorXd data = Eigen::Vector2d(1, 3);
    const Potential phi = make_potential(*model, data, 0.5);
    const Density prior = GaussianParams::standard(2);
    testing::Rng rng(4);
    const Density mix = testing::random_mixture(2, 2, rng);

    int identical = 0;
    int runs = 0;
    for (const auto& start : {prior, mix}) {
        EstimatorConfig kl;
        kl.n_samples = 2000;
        kl.dt = 0.01;
        kl.seed = 77;
        EstimatorConfig he = kl;
        he.deviation = Deviation::squared_hellinger;
        const FlowProblem problem{phi, prior, start};
        identical += same_trajectory(run_flow(problem, kl), run_flow(problem, he));
        ++runs;
    }
    return {identical == runs, std::to_string(identical) + "/" + std::to_string(runs) +
                                   " trajectories (Gaussian, 2-component mixture) bit-identical"};
}

// ---- 5: heat FEM oracle -----------------------------------------------------

Outcome criterion5() {
    const heat::HeatGeometry homogeneous;
    const heat::Mesh m64 = heat::build_mesh(homogeneous, 64);
    const heat::HeatSolver hs(m64, homogeneous);
    const Eigen::VectorXd u = hs.solve({});
    double err = 0.0;
    double scale = 0.0;
    for (std::size_t v = 0; v < m64.vertices.size(); ++v) {
        const Eigen::Vector2d p = m64.vertices[v];
        if (hs.dirichlet()[v]) continue;
        if ((p - Eigen::Vector2d(0, 0.6)).norm() < 0.1 || (p - Eigen::Vector2d(1, 0.6)).norm() < 0.1) continue;
        err = std::max(err, std::abs(u(static_cast<Eigen::Index>(v)) - testing::heat_series(p.x(), p.y(), 200, 2000, 15)));
        scale = std::max(scale, std::abs(u(static_cast<Eigen::Index>(v))));
    }
    const double series_rel = err / scale;

    heat::HeatGeometry two;
    two.inclusions = {{{0.3, 0.35}, 0.1, 1}, {{0.7, 0.35}, 0.1, 2}};
    const heat::Mesh ms = heat::build_mesh(two, 64);
    const std::vector<double> same{27.0, 27.0};
    const Eigen::VectorXd us = heat::solve_heat(ms, two, same);
    std::map<std::pair<long long, long long>, std::size_t> index;
    auto key = [](double x, double y) { return std::make_pair(std::llround(x * 1e9), std::llround(y * 1e9)); };
    for (std::size_t v = 0; v < ms.vertices.size(); ++v) index[key(ms.vertices[v].x(), ms.vertices[v].y())] = v;
    double asym = 0.0;
    bool mirrored = true;
    for (std::size_t v = 0; v < ms.vertices.size(); ++v) {
        const auto it = index.find(key(1.0 - ms.vertices[v].x(), ms.vertices[v].y()));
        if (it == index.end()) {
            mirrored = false;
            continue;
        }
        asym = std::max(asym, std::abs(us(static_cast<Eigen::Index>(v)) - us(static_cast<Eigen::Index>(it->second))));
    }

    // Self-convergence on points away from the four corners, where the
    // boundary data are incompatible.
    std::vector<Eigen::Vector2d> probes = heat::sensor_grid(4, 3);
    for (int i = 1; i < 40; ++i) {
        for (int j = 1; j < 24; ++j) {
            const Eigen::Vector2d p(i / 40.0, 0.6 * j / 24.0);
            bool near_corner = false;
            for (const Eigen::Vector2d& c : {Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 0.6),
                                            Eigen::Vector2d(1, 0.6)}) {
                near_corner = near_corner || (p - c).norm() < 0.1;
            }
            if (!near_corner) probes.push_back(p);
        }
    }
    const std::vector<double> k{36.0, 24.0};
    std::vector<Eigen::VectorXd> values;
    for (int res : {32, 64, 128}) {
        const heat::Mesh m = heat::build_mesh(two, res);
        values.push_back(heat::observe(m, heat::solve_heat(m, two, k), probes));
    }
    const double d1 = (values[1] - values[0]).cwiseAbs().maxCoeff();
    const double d2 = (values[2] - values[1]).cwiseAbs().maxCoeff();
    const double ratio = d1 / d2;

    return {series_rel < 0.005 && mirrored && asym < 1e-10 && ratio >= 3.0,
            "series max-norm gap " + fmt(100 * series_rel) + "%, mirror asymmetry " + fmt(asym) + ", refinement ratio " +
                fmt(ratio) + " (" + fmt(d1) + " -> " + fmt(d2) + ", " + std::to_string(probes.size()) + " points)"};
}

// ---- 6: scattering oracle ---------------------------------------------------

Outcome criterion6() {
    const auto circle = scatter::BoundaryCurve::starlike("circle", [](double) { return scatter::RadialValue{1.0, 0.0, 0.0}; });
    scatter::ScatterConfig cfg;
    cfg.n_nodes = 64;
    cfg.n_observations = 64;
    cfg.incident_angles = {0.0, std::numbers::pi / 2};
    const Eigen::MatrixXcd data = scatter::far_field_data(circle, cfg, kernels::Execution::parallel);
    const auto obs = cfg.observation_angles();
    double err = 0.0;
    double scale = 0.0;
    for (int j = 0; j < 64; ++j) {
        for (int l = 0; l < 2; ++l) {
            const auto exact = scatter::circle_far_field_series(1.0, 1.0, cfg.incident_angles[static_cast<std::size_t>(l)],
                                                                obs[static_cast<std::size_t>(j)]);
            err = std::max(err, std::abs(exact - data(j, l)));
            scale = std::max(scale, std::abs(exact));
        }
    }
    const double circle_rel = err / scale;

    double recip = 0.0;
    const std::vector<double> angles{0.0, 0.9, 2.2, 3.7, 5.1};
    for (const auto& name : scatter::catalog_names()) {
        const auto g = scatter::curve_geometry(scatter::shape_catalog(name), 128);
        const Eigen::PartialPivLU<Eigen::MatrixXcd> lu(scatter::assemble_cfie(g, 1.0, 1.0, kernels::Execution::parallel));
        std::vector<double> flipped;
        for (double a : angles) flipped.push_back(a + std::numbers::pi);
        // u[j](i) is the far field at -a_i for incidence a_j
        std::vector<Eigen::VectorXcd> u;
        for (double d : angles) u.push_back(scatter::far_field(g, lu.solve(scatter::cfie_rhs(g, 1.0, d)), 1.0, 1.0, flipped));
        for (std::size_t i = 0; i < angles.size(); ++i) {
            for (std::size_t j = 0; j < i; ++j) {
                recip = std::max(recip, std::abs(u[j](static_cast<Eigen::Index>(i)) - u[i](static_cast<Eigen::Index>(j))));
            }
        }
    }
    return {circle_rel < 1e-6 && recip < 1e-6,
            "circle series max relative gap " + fmt(circle_rel) + ", worst reciprocity gap over 8 shapes " + fmt(recip)};
}

// ---- 7, 8: end-to-end inversions -------------------------------------------

Outcome criterion7() {
    const fs::path out = work_dir / "c7";
    const int rc = run_config(kSource / "configs" / "heat2.json", out);
    if (rc != 0) return {false, "run exited with code " + std::to_string(rc)};
    const json cmp = json::parse(slurp(out / "comparison.json"));
    const json params = json::parse(slurp(out / "final_params.json"));
    const bool done = params["t"].get<double>() == 1.0;
    const bool inside = cmp["grid"]["flow_mean_in_hpd99"].get<bool>();
    return {done && inside,
            "t=" + fmt(params["t"].get<double>()) + ", kappa at flow mean (" + fmt(params["kappa_at_mean"][0].get<double>()) +
                ", " + fmt(params["kappa_at_mean"][1].get<double>()) + "), log density " +
                fmt(cmp["grid"]["flow_mean_log_density"].get<double>()) + " vs 99% HPD level " +
                fmt(cmp["grid"]["hpd99_log_threshold"].get<double>())};
}

Outcome criterion8() {
    const fs::path out = work_dir / "c8";
    const int rc = run_config(kSource / "configs" / "scatter_pear.json", out);
    if (rc != 0) return {false, "run exited with code " + std::to_string(rc)};
    const double h = json::parse(slurp(out / "comparison.json"))["hausdorff_to_truth"].get<double>();
    return {h < 0.15, "Hausdorff distance to the pear " + fmt(h)};
}

// ---- 9: determinism ---------------------------------------------------------

bool same_tree(const fs::path& a, const fs::path& b, int& files) {
    if (!fs::exists(a) || !fs::exists(b)) return false;
    bool same = true;
    for (const auto& entry : fs::recursive_directory_iterator(a)) {
        if (!entry.is_regular_file()) continue;
        const fs::path other = b / fs::relative(entry.path(), a);
        same = same && fs::exists(other) && slurp(entry.path()) == slurp(other);
        ++files;
    }
    return same;
}

Outcome criterion9() {
    int files = 0;
    bool same = true;
    criterion3_into(work_dir / "c9" / "c3a");
    criterion3_into(work_dir / "c9" / "c3b");
    same = same_tree(work_dir / "c9" / "c3a", work_dir / "c9" / "c3b", files) && same;
    for (const auto& [name, config] : {std::pair{"c7", "heat2.json"}, std::pair{"c8", "scatter_pear.json"}}) {
        const fs::path first = work_dir / name;
        if (!fs::exists(first / "comparison.json")) run_config(kSource / "configs" / config, first);
        run_config(kSource / "configs" / config, work_dir / "c9" / name);
        same = same_tree(first, work_dir / "c9" / name, files) && same;
    }
    return {same && files > 0, std::to_string(files) + " output files compared, " + (same ? "all identical" : "differences found")};
}

const std::map<int, std::pair<std::function<Outcome()>, double>> kCriteria{
    {1, {criterion1, 10}},  {2, {criterion2, 5}},    {3, {criterion3, 120}},
    {4, {criterion4, 60}},  {5, {criterion5, 60}},   {6, {criterion6, 120}},
    {7, {criterion7, 600}}, {8, {criterion8, 1800}}, {9, {criterion9, 2700}},
};

}  // namespace

int main(int argc, char** argv) {
    std::vector<int> which;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--work-dir") == 0 && i + 1 < argc) {
            work_dir = argv[++i];
        } else {
            which.push_back(std::atoi(argv[i]));
        }
    }
    if (which.empty()) {
        for (const auto& [n, _] : kCriteria) which.push_back(n);
    }
    bool all = true;
    for (int n : which) {
        const auto it = kCriteria.find(n);
        if (it == kCriteria.end()) {
            std::cout << "criterion " << n << ": FAIL unknown criterion\n";
            all = false;
            continue;
        }
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = it->second.first();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = secs < it->second.second;
        const bool pass = o.pass && in_time;
        all = all && pass;
        std::cout << "criterion " << n << ": " << (pass ? "PASS" : "FAIL") << " " << o.detail << " [" << fmt(secs)
                  << " s, budget " << it->second.second << " s" << (in_time ? "" : ", over budget") << "]" << std::endl;
    }
    return all ? 0 : 1;
}

#include "hbayes/experiment.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include "hbayes/errors.hpp"
#include "hbayes/reference.hpp"
#include "hbayes/rng.hpp"

namespace hbayes::experiment {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// ---- config helpers -------------------------------------------------------

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError(where + ": unknown field '" + key + "'");
    }
}

std::string join(const std::string& where, const std::string& key) {
    return where.empty() ? key : where + "." + key;
}

template <class T>
T get(const json& j, const std::string& where, const char* key, T fallback) {
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("field '" + join(where, key) + "' has the wrong type");
    }
}

template <class T>
T require(const json& j, const std::string& where, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) throw ConfigError("missing required field '" + join(where, key) + "'");
    return get<T>(j, where, key, T{});
}

Eigen::VectorXd to_vector(const json& v, const std::string& name) {
    if (!v.is_array()) throw ConfigError("field '" + name + "' must be an array of numbers");
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number()) throw ConfigError("field '" + name + "' must be an array of numbers");
        out(static_cast<Eigen::Index>(i)) = v[i].get<double>();
    }
    return out;
}

Eigen::MatrixXd to_matrix(const json& v, const std::string& name) {
    if (!v.is_array() || v.empty() || !v[0].is_array()) throw ConfigError("field '" + name + "' must be a nested array");
    const auto rows = static_cast<Eigen::Index>(v.size());
    const auto cols = static_cast<Eigen::Index>(v[0].size());
    Eigen::MatrixXd out(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const Eigen::VectorXd row = to_vector(v[static_cast<std::size_t>(r)], name);
        if (row.size() != cols) throw ConfigError("field '" + name + "' has ragged rows");
        out.row(r) = row.transpose();
    }
    return out;
}

std::vector<Eigen::Vector2d> to_points(const json& v, const std::string& name) {
    const Eigen::MatrixXd m = to_matrix(v, name);
    if (m.cols() != 2) throw ConfigError("field '" + name + "' must list (x1, x2) pairs");
    std::vector<Eigen::Vector2d> out;
    for (Eigen::Index r = 0; r < m.rows(); ++r) out.emplace_back(m(r, 0), m(r, 1));
    return out;
}

std::vector<std::vector<double>> read_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open data file " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        bool numeric = true;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
            } catch (const std::exception&) {
                numeric = false;
            }
        }
        if (!numeric) {
            if (first) {
                first = false;
                continue;  // header
            }
            throw ConfigError("data file " + path.string() + ": non-numeric row '" + line + "'");
        }
        first = false;
        rows.push_back(std::move(row));
    }
    return rows;
}

// ---- output helpers -------------------------------------------------------

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << std::setprecision(17);
    return out;
}

void write_json(const fs::path& path, const json& j) {
    auto out = open_out(path);
    out << j.dump(2) << '\n';
}

json to_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

json to_json(const Eigen::MatrixXd& m) {
    json a = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(to_json(Eigen::VectorXd(m.row(r).transpose())));
    return a;
}

json moments_json(const MomentParams& m) { return {{"mean", to_json(m.mean)}, {"covariance", to_json(m.covariance)}}; }

json relative_gaps(const MomentParams& approx, const MomentParams& exact) {
    Eigen::VectorXd mean_gap(approx.mean.size());
    Eigen::VectorXd var_gap(approx.mean.size());
    for (Eigen::Index i = 0; i < approx.mean.size(); ++i) {
        const double m = exact.mean(i);
        mean_gap(i) = std::abs(approx.mean(i) - m) / std::max(std::abs(m), 1e-300);
        var_gap(i) = std::abs(approx.covariance(i, i) - exact.covariance(i, i)) / exact.covariance(i, i);
    }
    return {{"mean", to_json(mean_gap)}, {"variance", to_json(var_gap)}};
}

const char* kind_name(DensityKind k) { return k == DensityKind::gaussian ? "gaussian" : "mixture"; }

GaussianParams standard_prior(std::size_t d) { return GaussianParams::standard(d); }

}  // namespace

std::string problem_name(ProblemKind kind) {
    switch (kind) {
        case ProblemKind::linear_test: return "linear_test";
        case ProblemKind::heat2: return "heat2";
        case ProblemKind::heat6: return "heat6";
        case ProblemKind::scatter: return "scatter";
    }
    return "unknown";
}

std::uint64_t stream_seed(std::uint64_t seed, Stream s) { return derive_seed(seed, static_cast<std::uint64_t>(s)); }

heat::HeatGeometry default_geometry(ProblemKind kind) {
    heat::HeatGeometry g;
    if (kind == ProblemKind::heat2) {
        g.inclusions = {{{0.3, 0.35}, 0.1, 1}, {{0.7, 0.35}, 0.1, 2}};
    } else if (kind == ProblemKind::heat6) {
        int index = 1;
        for (double y : {0.45, 0.18}) {
            for (double x : {0.22, 0.5, 0.78}) g.inclusions.push_back({{x, y}, 0.075, index++});
        }
    } else {
        throw ContractError("default_geometry: not a heat problem");
    }
    return g;
}

std::vector<Eigen::Vector2d> default_sensors(ProblemKind kind) {
    if (kind == ProblemKind::heat2) return heat::sensor_grid(4, 3);
    if (kind == ProblemKind::heat6) return heat::sensor_grid(5, 4);
    throw ContractError("default_sensors: not a heat problem");
}

heat::HeatGeometry parse_geometry(const json& j) {
    const std::string where = "geometry";
    check_keys(j, where, {"background_conductivity", "top_temperature", "bottom_flux", "inclusions", "sensors"});
    heat::HeatGeometry g;
    g.background_conductivity = get<double>(j, where, "background_conductivity", g.background_conductivity);
    g.top_temperature = get<double>(j, where, "top_temperature", g.top_temperature);
    g.bottom_flux = get<double>(j, where, "bottom_flux", g.bottom_flux);
    if (!j.contains("inclusions")) throw ConfigError("missing required field 'geometry.inclusions'");
    int index = 1;
    for (const auto& inc : j.at("inclusions")) {
        check_keys(inc, "geometry.inclusions[]", {"center", "radius"});
        const Eigen::VectorXd c = to_vector(require<json>(inc, "geometry.inclusions[]", "center"), "geometry.inclusions[].center");
        if (c.size() != 2) throw ConfigError("field 'geometry.inclusions[].center' must have two entries");
        g.inclusions.push_back({{c(0), c(1)}, require<double>(inc, "geometry.inclusions[]", "radius"), index++});
    }
    try {
        g.validate();
    } catch (const ContractError& e) {
        throw ConfigError(std::string("geometry: ") + e.what());
    }
    return g;
}

ExperimentConfig parse_config(const json& j, const fs::path& base_dir) {
    check_keys(j, "config", {"problem", "seed", "noise_sd", "truth", "data_file", "prior", "linear", "heat",
                             "scatter", "family", "flow", "oracle", "outputs"});
    ExperimentConfig cfg;
    const auto problem = require<std::string>(j, "", "problem");
    if (problem == "linear_test") cfg.problem = ProblemKind::linear_test;
    else if (problem == "heat2") cfg.problem = ProblemKind::heat2;
    else if (problem == "heat6") cfg.problem = ProblemKind::heat6;
    else if (problem == "scatter") cfg.problem = ProblemKind::scatter;
    else throw ConfigError("field 'problem': unknown problem '" + problem + "'");

    cfg.seed = get<std::uint64_t>(j, "", "seed", 0);
    cfg.noise_sd = require<double>(j, "", "noise_sd");
    if (!(cfg.noise_sd > 0.0)) throw ConfigError("field 'noise_sd' must be positive");
    if (j.contains("truth")) cfg.truth = to_vector(j.at("truth"), "truth");
    if (j.contains("data_file")) cfg.data_file = base_dir / require<std::string>(j, "", "data_file");

    const json prior = j.value("prior", json::object());
    const json family = j.value("family", json::object());
    const json flow = j.value("flow", json::object());
    const json oracle = j.value("oracle", json::object());
    const json outputs = j.value("outputs", json::object());

    check_keys(family, "family", {"type", "components", "mean_jitter"});
    const auto type = get<std::string>(family, "family", "type", "gaussian");
    if (type == "gaussian") cfg.family.kind = DensityKind::gaussian;
    else if (type == "mixture") cfg.family.kind = DensityKind::mixture;
    else throw ConfigError("field 'family.type' must be 'gaussian' or 'mixture'");
    cfg.family.components = get<std::size_t>(family, "family", "components", cfg.family.components);
    cfg.family.mean_jitter = get<double>(family, "family", "mean_jitter", cfg.family.mean_jitter);
    if (cfg.family.kind == DensityKind::mixture && cfg.family.components < 1) {
        throw ConfigError("field 'family.components' must be >= 1");
    }

    check_keys(flow, "flow", {"dt", "n_samples", "ridge", "use_baseline", "max_halvings", "max_step_fisher_norm",
                              "deviation", "divergence_diagnostics", "parallel"});
    auto& f = cfg.flow;
    f.dt = get<double>(flow, "flow", "dt", cfg.problem == ProblemKind::scatter ? 0.02 : 0.01);
    f.n_samples = get<std::size_t>(flow, "flow", "n_samples", f.n_samples);
    if (flow.contains("ridge") && !flow.at("ridge").is_null()) f.ridge = get<double>(flow, "flow", "ridge", 0.0);
    f.use_baseline = get<bool>(flow, "flow", "use_baseline", f.use_baseline);
    f.max_halvings = get<int>(flow, "flow", "max_halvings", f.max_halvings);
    if (flow.contains("max_step_fisher_norm") && flow.at("max_step_fisher_norm").is_null()) {
        f.max_step_fisher_norm = std::numeric_limits<double>::infinity();
    } else {
        f.max_step_fisher_norm = get<double>(flow, "flow", "max_step_fisher_norm", f.max_step_fisher_norm);
    }
    const auto deviation = get<std::string>(flow, "flow", "deviation", "kullback_leibler");
    if (deviation == "kullback_leibler") f.deviation = Deviation::kullback_leibler;
    else if (deviation == "squared_hellinger") f.deviation = Deviation::squared_hellinger;
    else throw ConfigError("field 'flow.deviation' must be 'kullback_leibler' or 'squared_hellinger'");
    f.divergence_diagnostics = get<bool>(flow, "flow", "divergence_diagnostics", false);
    f.execution = get<bool>(flow, "flow", "parallel", true) ? kernels::Execution::parallel : kernels::Execution::serial;
    if (!(f.dt > 0.0) || f.dt > 1.0) throw ConfigError("field 'flow.dt' must lie in (0, 1]");
    if (f.n_samples < 2) throw ConfigError("field 'flow.n_samples' must be >= 2");
    if (f.ridge && *f.ridge < 0.0) throw ConfigError("field 'flow.ridge' must be >= 0");
    if (f.max_halvings < 0) throw ConfigError("field 'flow.max_halvings' must be >= 0");

    check_keys(oracle, "oracle", {"grid_n", "box_half_width", "rwmh_steps", "rwmh_step_sd", "rwmh_burn_in"});
    cfg.oracle.grid_n = get<std::size_t>(oracle, "oracle", "grid_n", cfg.oracle.grid_n);
    cfg.oracle.box_half_width = get<double>(oracle, "oracle", "box_half_width", cfg.oracle.box_half_width);
    cfg.oracle.rwmh_steps = get<std::size_t>(oracle, "oracle", "rwmh_steps", cfg.oracle.rwmh_steps);
    cfg.oracle.rwmh_step_sd = get<double>(oracle, "oracle", "rwmh_step_sd", cfg.oracle.rwmh_step_sd);
    cfg.oracle.rwmh_burn_in = get<std::size_t>(oracle, "oracle", "rwmh_burn_in", cfg.oracle.rwmh_burn_in);

    check_keys(outputs, "outputs", {"directory", "posterior_samples", "density_grid"});
    cfg.outputs.directory = base_dir / get<std::string>(outputs, "outputs", "directory", "out");
    cfg.outputs.posterior_samples = get<std::size_t>(outputs, "outputs", "posterior_samples", cfg.outputs.posterior_samples);
    cfg.outputs.density_grid = get<bool>(outputs, "outputs", "density_grid", cfg.outputs.density_grid);

    switch (cfg.problem) {
        case ProblemKind::linear_test: {
            const json lin = require<json>(j, "", "linear");
            check_keys(lin, "linear", {"A", "data"});
            cfg.linear.A = to_matrix(require<json>(lin, "linear", "A"), "linear.A");
            if (lin.contains("data")) cfg.linear.data = to_vector(lin.at("data"), "linear.data");
            const auto d = cfg.linear.A.cols();
            check_keys(prior, "prior", {"mean", "covariance"});
            cfg.linear.prior_mean = prior.contains("mean") ? to_vector(prior.at("mean"), "prior.mean") : Eigen::VectorXd::Zero(d);
            cfg.linear.prior_cov = prior.contains("covariance") ? to_matrix(prior.at("covariance"), "prior.covariance")
                                                                : Eigen::MatrixXd::Identity(d, d);
            if (cfg.linear.prior_mean.size() != d || cfg.linear.prior_cov.rows() != d || cfg.linear.prior_cov.cols() != d) {
                throw ConfigError("prior shape does not match linear.A");
            }
            if (!cfg.linear.data && !cfg.truth && !cfg.data_file) {
                throw ConfigError("linear_test needs one of 'linear.data', 'truth' or 'data_file'");
            }
            break;
        }
        case ProblemKind::heat2:
        case ProblemKind::heat6: {
            const json h = j.value("heat", json::object());
            check_keys(h, "heat", {"resolution", "geometry_file", "geometry", "sensors"});
            cfg.heat.resolution = get<int>(h, "heat", "resolution", 32);
            cfg.heat.geometry = default_geometry(cfg.problem);
            cfg.heat.sensors = default_sensors(cfg.problem);
            json geo;
            if (h.contains("geometry_file")) {
                const fs::path p = base_dir / require<std::string>(h, "heat", "geometry_file");
                std::ifstream in(p);
                if (!in) throw ConfigError("cannot open geometry file " + p.string());
                try {
                    geo = json::parse(in);
                } catch (const json::parse_error& e) {
                    throw ConfigError("geometry file " + p.string() + ": " + e.what());
                }
            } else if (h.contains("geometry")) {
                geo = h.at("geometry");
            }
            if (!geo.is_null()) {
                cfg.heat.geometry = parse_geometry(geo);
                if (geo.contains("sensors")) cfg.heat.sensors = to_points(geo.at("sensors"), "geometry.sensors");
            }
            if (h.contains("sensors")) cfg.heat.sensors = to_points(h.at("sensors"), "heat.sensors");
            check_keys(prior, "prior", {"mean_conductivity", "sd_conductivity"});
            cfg.heat.prior_mean = get<double>(prior, "prior", "mean_conductivity", 30.0);
            cfg.heat.prior_sd = get<double>(prior, "prior", "sd_conductivity", 6.0);
            if (!(cfg.heat.prior_mean > 0.0) || !(cfg.heat.prior_sd > 0.0)) {
                throw ConfigError("prior conductivity mean and sd must be positive");
            }
            if (!cfg.truth && !cfg.data_file) throw ConfigError("heat problems need 'truth' (conductivities) or 'data_file'");
            if (cfg.truth && static_cast<std::size_t>(cfg.truth->size()) != cfg.heat.geometry.inclusions.size()) {
                throw ConfigError("field 'truth' must list one conductivity per inclusion");
            }
            break;
        }
        case ProblemKind::scatter: {
            const json s = j.value("scatter", json::object());
            check_keys(s, "scatter", {"k", "tau", "incident_angles", "n_observations", "n_nodes", "modes", "decay",
                                      "truth_shape"});
            auto& sc = cfg.scatter;
            sc.config.k = get<double>(s, "scatter", "k", 1.0);
            if (s.contains("tau") && !s.at("tau").is_null()) sc.config.tau = get<double>(s, "scatter", "tau", 1.0);
            if (s.contains("incident_angles")) {
                const Eigen::VectorXd a = to_vector(s.at("incident_angles"), "scatter.incident_angles");
                sc.config.incident_angles.assign(a.data(), a.data() + a.size());
            } else {
                sc.config.incident_angles = {0.0, 0.5 * std::numbers::pi};
            }
            sc.config.n_observations = get<int>(s, "scatter", "n_observations", 64);
            sc.config.n_nodes = get<int>(s, "scatter", "n_nodes", 128);
            sc.modes = get<int>(s, "scatter", "modes", 5);
            sc.decay = get<double>(s, "scatter", "decay", 2.2);
            if (s.contains("truth_shape")) sc.truth_shape = require<std::string>(s, "scatter", "truth_shape");
            try {
                sc.config.validate();
                if (sc.truth_shape) (void)scatter::shape_catalog(*sc.truth_shape);
            } catch (const ContractError& e) {
                throw ConfigError(std::string("scatter: ") + e.what());
            }
            if (sc.modes < 0) throw ConfigError("field 'scatter.modes' must be >= 0");
            if (!cfg.truth && !sc.truth_shape && !cfg.data_file) {
                throw ConfigError("scatter needs 'scatter.truth_shape', 'truth' (coefficients) or 'data_file'");
            }
            if (cfg.truth && cfg.truth->size() != 2 * sc.modes + 1) {
                throw ConfigError("field 'truth' must hold 2 * modes + 1 coefficients");
            }
            break;
        }
    }
    return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return parse_config(j, path.parent_path());
}

Potential Setup::potential() const {
    auto m = model;
    auto d = data;
    if (noise_scale.size() == 0) {
        const double s = noise_sd;
        return [m, d, s](const Eigen::VectorXd& x) { return neg_log_likelihood(*m, d, s, x); };
    }
    const Eigen::VectorXd w = noise_scale.cwiseInverse();
    return [m, d, w](const Eigen::VectorXd& x) {
        const Eigen::VectorXd pred = m->evaluate(x);
        if (pred.size() != d.size()) throw ForwardError("model output length does not match the data");
        return 0.5 * (pred - d).cwiseProduct(w).squaredNorm();
    };
}

namespace {

std::shared_ptr<const ForwardModel> build_model(const ExperimentConfig& cfg) {
    switch (cfg.problem) {
        case ProblemKind::linear_test: return std::make_shared<LinearModel>(cfg.linear.A);
        case ProblemKind::heat2:
        case ProblemKind::heat6:
            return std::make_shared<heat::HeatModel>(cfg.heat.geometry, cfg.heat.resolution, cfg.heat.sensors,
                                                     heat::lognormal_hyperparams(cfg.heat.prior_mean, cfg.heat.prior_sd));
        case ProblemKind::scatter:
            return std::make_shared<scatter::ScatterModel>(cfg.scatter.modes, cfg.scatter.decay, cfg.scatter.config);
    }
    throw ContractError("unknown problem");
}

Eigen::VectorXd gaussian_noise(std::size_t n, double sd, std::uint64_t seed) {
    StreamRng rng(seed);
    std::normal_distribution<double> normal;
    Eigen::VectorXd out(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < out.size(); ++i) out(i) = sd * normal(rng);
    return out;
}

Density initial_density(const GaussianParams& prior, const FamilyConfig& family, std::uint64_t seed) {
    if (family.kind == DensityKind::gaussian) return prior;
    const MomentParams m = param_to_moment(prior);
    const Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(m.covariance).matrixL();
    std::vector<GaussianParams> comps;
    for (std::size_t i = 0; i < family.components; ++i) {
        const Eigen::VectorXd z = gaussian_noise(prior.dim(), 1.0, derive_seed(seed, i));
        comps.emplace_back(Eigen::VectorXd(prior.mean() + family.mean_jitter * chol * z), prior.factor());
    }
    return MixtureParams(std::move(comps), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(family.components) - 1));
}

}  // namespace

Setup build_setup(const ExperimentConfig& cfg) {
    Setup s{build_model(cfg), {}, cfg.noise_sd, {}, standard_prior(1), standard_prior(1), std::nullopt, std::nullopt};
    const std::uint64_t data_seed = stream_seed(cfg.seed, Stream::data);
    const std::size_t d = s.model->input_dim();
    switch (cfg.problem) {
        case ProblemKind::linear_test: {
            s.prior = moment_to_param({cfg.linear.prior_mean, cfg.linear.prior_cov});
            if (cfg.truth) {
                if (static_cast<std::size_t>(cfg.truth->size()) != d) throw ConfigError("field 'truth' has the wrong length");
                s.truth = *cfg.truth;
            }
            if (cfg.linear.data) {
                s.data = *cfg.linear.data;
            } else if (cfg.data_file) {
                const auto rows = read_csv(*cfg.data_file);
                s.data.resize(static_cast<Eigen::Index>(rows.size()));
                for (std::size_t i = 0; i < rows.size(); ++i) s.data(static_cast<Eigen::Index>(i)) = rows[i].back();
            } else {
                s.data = s.model->evaluate(*s.truth) + gaussian_noise(s.model->output_dim(), cfg.noise_sd, data_seed);
            }
            break;
        }
        case ProblemKind::heat2:
        case ProblemKind::heat6: {
            s.prior = standard_prior(d);
            const auto& model = static_cast<const heat::HeatModel&>(*s.model);
            const auto& hyper = model.hyper();
            if (cfg.truth) {
                s.truth = ((cfg.truth->array().log() - hyper.lambda0) / hyper.zeta0).matrix();
            }
            if (cfg.data_file) {
                const auto rows = read_csv(*cfg.data_file);
                std::vector<Eigen::Vector2d> sensors;
                Eigen::VectorXd values(static_cast<Eigen::Index>(rows.size()));
                for (std::size_t i = 0; i < rows.size(); ++i) {
                    if (rows[i].size() != 3) throw ConfigError("heat data file rows must be (x1, x2, value)");
                    sensors.emplace_back(rows[i][0], rows[i][1]);
                    values(static_cast<Eigen::Index>(i)) = rows[i][2];
                }
                s.model = std::make_shared<heat::HeatModel>(cfg.heat.geometry, cfg.heat.resolution, sensors, hyper);
                s.data = values;
            } else {
                s.data = model.observe_conductivities(*cfg.truth) +
                         gaussian_noise(model.output_dim(), cfg.noise_sd, data_seed);
            }
            break;
        }
        case ProblemKind::scatter: {
            s.prior = standard_prior(d);
            const auto& sc = cfg.scatter;
            if (cfg.truth) s.truth = *cfg.truth;
            Eigen::MatrixXcd observed;
            if (cfg.data_file) {
                const auto rows = read_csv(*cfg.data_file);
                const auto m = sc.config.n_observations;
                const auto l = static_cast<int>(sc.config.incident_angles.size());
                if (rows.size() != static_cast<std::size_t>(m * l)) {
                    throw ConfigError("scatter data file must have n_observations x incident angles rows");
                }
                const auto obs = sc.config.observation_angles();
                observed.resize(m, l);
                for (int j = 0; j < m; ++j) {
                    for (int c = 0; c < l; ++c) {
                        const auto& row = rows[static_cast<std::size_t>(j * l + c)];
                        if (row.size() != 4 || std::abs(row[0] - obs[static_cast<std::size_t>(j)]) > 1e-9 ||
                            std::abs(row[1] - sc.config.incident_angles[static_cast<std::size_t>(c)]) > 1e-9) {
                            throw ConfigError("scatter data file rows must be (obs_angle, incident_angle, re, im) "
                                              "in direction-major order matching the config");
                        }
                        observed(j, c) = {row[2], row[3]};
                    }
                }
            } else {
                const scatter::BoundaryCurve truth_curve = sc.truth_shape
                                                               ? scatter::shape_catalog(*sc.truth_shape)
                                                               : scatter::BoundaryCurve::fourier(*cfg.truth, sc.decay);
                s.far_field = scatter::far_field_data(truth_curve, sc.config, kernels::Execution::parallel);
                observed = scatter::add_noise(*s.far_field, cfg.noise_sd, data_seed);
            }
            s.data = scatter::stack(observed);
            // Entry j carries noise of size delta * |G_j|; the observed modulus stands in for |G_j|.
            const Eigen::MatrixXd modulus = observed.cwiseAbs();
            s.noise_scale = scatter::stack(modulus.cast<std::complex<double>>() * std::complex<double>(1.0, 1.0));
            s.noise_scale *= cfg.noise_sd;
            if ((s.noise_scale.array() <= 0.0).any()) throw ConfigError("scatter data has a zero entry; per-entry noise undefined");
            break;
        }
    }
    s.initial = initial_density(s.prior, cfg.family, stream_seed(cfg.seed, Stream::family));
    return s;
}

nlohmann::json params_record(const Density& g) {
    const MomentParams m = moments(g);
    return {{"family", kind_name(kind_of(g))},
            {"dim", dim(g)},
            {"record", to_json(serialize(g))},
            {"mean", to_json(m.mean)},
            {"covariance", to_json(m.covariance)}};
}

Density read_params_record(const json& j) {
    try {
        const auto family = j.at("family").get<std::string>();
        const auto record = j.at("record").get<std::vector<double>>();
        if (family == "gaussian") return deserialize(DensityKind::gaussian, record);
        if (family == "mixture") return deserialize(DensityKind::mixture, record);
        throw ConfigError("params record: unknown family '" + family + "'");
    } catch (const json::exception& e) {
        throw ConfigError(std::string("params record: ") + e.what());
    } catch (const ContractError& e) {
        throw ConfigError(std::string("params record: ") + e.what());
    }
}

namespace {

template <class F>
int guarded(const char* const& stage, std::ostream& err, F&& body) {
    try {
        return body();
    } catch (const FlowStall& e) {
        err << "hbayes: " << stage << " failed: " << e.what() << " (last valid t=" << e.last_valid().t << ")\n";
        return exit_code::flow_stall;
    } catch (const ConfigError& e) {
        err << "hbayes: " << stage << " failed: " << e.what() << '\n';
        return exit_code::config_error;
    } catch (const SolveError& e) {
        err << "hbayes: " << stage << " failed: " << e.what() << '\n';
        return exit_code::solver_failure;
    } catch (const ForwardError& e) {
        err << "hbayes: " << stage << " failed: " << e.what() << '\n';
        return exit_code::solver_failure;
    } catch (const FactorizationError& e) {
        err << "hbayes: " << stage << " failed: " << e.what() << '\n';
        return exit_code::solver_failure;
    } catch (const EstimationError& e) {
        err << "hbayes: " << stage << " failed: " << e.what() << '\n';
        return exit_code::solver_failure;
    } catch (const std::exception& e) {
        err << "hbayes: " << stage << " failed: " << e.what() << '\n';
        return exit_code::failure;
    }
}

ExperimentConfig configure(const fs::path& path, const Options& opts) {
    ExperimentConfig cfg = load_config(path);
    if (opts.seed) cfg.seed = *opts.seed;
    if (opts.out_dir) cfg.outputs.directory = *opts.out_dir;
    return cfg;
}

void write_data(const fs::path& dir, const ExperimentConfig& cfg, const Setup& s) {
    auto out = open_out(dir / "data.csv");
    switch (cfg.problem) {
        case ProblemKind::linear_test:
            out << "index,value\n";
            for (Eigen::Index i = 0; i < s.data.size(); ++i) out << i << ',' << s.data(i) << '\n';
            break;
        case ProblemKind::heat2:
        case ProblemKind::heat6: {
            const auto& sensors = static_cast<const heat::HeatModel&>(*s.model).sensors();
            out << "x1,x2,value\n";
            for (std::size_t i = 0; i < sensors.size(); ++i) {
                out << sensors[i].x() << ',' << sensors[i].y() << ',' << s.data(static_cast<Eigen::Index>(i)) << '\n';
            }
            break;
        }
        case ProblemKind::scatter: {
            const auto& sc = cfg.scatter.config;
            const auto obs = sc.observation_angles();
            const Eigen::MatrixXcd d =
                scatter::unstack(s.data, sc.n_observations, static_cast<int>(sc.incident_angles.size()));
            out << "obs_angle,incident_angle,re,im\n";
            for (int j = 0; j < sc.n_observations; ++j) {
                for (std::size_t c = 0; c < sc.incident_angles.size(); ++c) {
                    const auto v = d(j, static_cast<Eigen::Index>(c));
                    out << obs[static_cast<std::size_t>(j)] << ',' << sc.incident_angles[c] << ',' << v.real() << ','
                        << v.imag() << '\n';
                }
            }
            break;
        }
    }
}

void write_trajectory(const fs::path& path, const FlowTrajectory& traj) {
    auto out = open_out(path);
    out << "step,t";
    for (const auto& n : serialized_names(traj.front().params)) out << ',' << n;
    out << ",drift_norm,fisher_condition,n_samples_used,n_step_halvings,n_substeps,kl_estimate,hellinger_estimate\n";
    for (const auto& st : traj) {
        out << st.step << ',' << st.t;
        const Eigen::VectorXd rec = serialize(st.params);
        for (Eigen::Index i = 0; i < rec.size(); ++i) out << ',' << rec(i);
        const auto& dg = st.diagnostics;
        out << ',' << dg.drift_norm << ',' << dg.fisher_condition << ',' << dg.n_samples_used << ','
            << dg.n_step_halvings << ',' << dg.n_substeps << ',';
        if (dg.kl_estimate) out << *dg.kl_estimate;
        out << ',';
        if (dg.hellinger_estimate) out << *dg.hellinger_estimate;
        out << '\n';
    }
}

void write_samples(const fs::path& path, const Density& g, std::size_t count, std::uint64_t seed,
                   const heat::HeatModel* heat_model) {
    const Eigen::MatrixXd xs = kernels::draw_samples(g, count, seed, kernels::Execution::parallel);
    auto out = open_out(path);
    const auto d = xs.rows();
    for (Eigen::Index i = 0; i < d; ++i) out << (i ? "," : "") << "x" << i + 1;
    if (heat_model) {
        for (Eigen::Index i = 0; i < d; ++i) out << ",kappa" << i + 1;
    }
    out << '\n';
    for (Eigen::Index k = 0; k < xs.cols(); ++k) {
        for (Eigen::Index i = 0; i < d; ++i) out << (i ? "," : "") << xs(i, k);
        if (heat_model) {
            const auto& h = heat_model->hyper();
            const Eigen::VectorXd kappa = heat::xi_to_kappa(xs.col(k), h.lambda0, h.zeta0);
            for (Eigen::Index i = 0; i < d; ++i) out << ',' << kappa(i);
        }
        out << '\n';
    }
}

std::vector<reference::Interval> prior_box(const GaussianParams& prior, double half_width) {
    const MomentParams m = param_to_moment(prior);
    std::vector<reference::Interval> box;
    for (Eigen::Index i = 0; i < m.mean.size(); ++i) {
        const double sd = std::sqrt(m.covariance(i, i));
        box.push_back({m.mean(i) - half_width * sd, m.mean(i) + half_width * sd});
    }
    return box;
}

// Grid posterior on a box focused on the posterior mode.
reference::GridPosterior grid_oracle(const Setup& s, const OracleConfig& oc) {
    const Potential phi = s.potential();
    const auto start = prior_box(s.prior, 6.0);
    const auto box = reference::focus_box(phi, s.prior, start, oc.box_half_width);
    return reference::grid_posterior_moments(phi, s.prior, box, oc.grid_n);
}

json grid_json(const reference::GridPosterior& grid) {
    json bounds = json::array();
    for (const auto& ax : grid.axes) bounds.push_back({ax(0), ax(ax.size() - 1)});
    json j = moments_json(grid.moments);
    j["log_normalizer"] = grid.log_normalizer;
    j["bounds"] = bounds;
    j["grid_n"] = grid.axes.front().size();
    j["hpd99_log_threshold"] = grid.hpd_log_threshold(0.99);
    return j;
}

void write_density_grid(const fs::path& path, const reference::GridPosterior& grid, const Density& g) {
    auto out = open_out(path);
    const auto d = grid.axes.size();
    for (std::size_t i = 0; i < d; ++i) out << (i ? "," : "") << "x" << i + 1;
    out << ",log_approx,log_posterior\n";
    for (Eigen::Index k = 0; k < grid.log_density.size(); ++k) {
        const Eigen::VectorXd x = grid.node(k);
        for (Eigen::Index i = 0; i < x.size(); ++i) out << (i ? "," : "") << x(i);
        out << ',' << log_density(g, x) << ',' << grid.log_density(k) << '\n';
    }
}

json rwmh_json(const Setup& s, const OracleConfig& oc, std::size_t steps, std::uint64_t seed) {
    const auto chain = reference::rwmh(s.potential(), s.prior, steps, oc.rwmh_step_sd, seed);
    const std::size_t burn = std::min(oc.rwmh_burn_in, steps / 2);
    json j = moments_json(reference::chain_moments(chain, burn));
    j["acceptance_rate"] = chain.acceptance_rate;
    j["steps"] = steps;
    j["burn_in"] = burn;
    return j;
}

MomentParams closed_form(const ExperimentConfig& cfg, const Setup& s) {
    return reference::linear_gaussian_posterior(
        {cfg.linear.A, cfg.linear.prior_mean, cfg.linear.prior_cov, cfg.noise_sd, s.data});
}

}  // namespace

int run_command(const fs::path& config, const Options& opts, std::ostream& log, std::ostream& err) {
    const char* stage = "config";
    return guarded(stage, err, [&] {
        const ExperimentConfig cfg = configure(config, opts);
        stage = "data";
        const Setup s = build_setup(cfg);
        const fs::path dir = cfg.outputs.directory;
        fs::create_directories(dir);
        write_data(dir, cfg, s);
        if (!opts.quiet) {
            log << "problem " << problem_name(cfg.problem) << ": " << dim(s.initial) << " unknowns, "
                << s.data.size() << " data, " << parameter_count(s.initial) << " family parameters\n";
        }

        stage = "flow";
        EstimatorConfig flow = cfg.flow;
        flow.seed = stream_seed(cfg.seed, Stream::flow);
        const FlowTrajectory traj = run_flow(FlowProblem{s.potential(), s.prior, s.initial}, flow);
        const Density& final_g = traj.back().params;
        if (!opts.quiet) {
            int halvings = 0;
            for (const auto& st : traj) halvings += st.diagnostics.n_step_halvings;
            log << "flow reached t=" << traj.back().t << " in " << traj.size() - 1 << " steps (" << halvings
                << " step halvings)\n";
        }

        stage = "output";
        write_trajectory(dir / "trajectory.csv", traj);
        json params = params_record(final_g);
        params["t"] = traj.back().t;
        const auto* heat_model = dynamic_cast<const heat::HeatModel*>(s.model.get());
        const MomentParams fm = moments(final_g);
        if (heat_model) {
            const auto& h = heat_model->hyper();
            Eigen::VectorXd at_mean = heat::xi_to_kappa(fm.mean, h.lambda0, h.zeta0);
            Eigen::VectorXd lognormal_mean(fm.mean.size());
            for (Eigen::Index i = 0; i < fm.mean.size(); ++i) {
                lognormal_mean(i) = std::exp(h.lambda0 + h.zeta0 * fm.mean(i) + 0.5 * h.zeta0 * h.zeta0 * fm.covariance(i, i));
            }
            params["kappa_at_mean"] = to_json(at_mean);
            params["kappa_mean"] = to_json(lognormal_mean);
        }
        write_json(dir / "final_params.json", params);
        write_samples(dir / "posterior_samples.csv", final_g, cfg.outputs.posterior_samples,
                      stream_seed(cfg.seed, Stream::samples), heat_model);

        stage = "oracle";
        json cmp;
        cmp["problem"] = problem_name(cfg.problem);
        cmp["flow"] = moments_json(fm);
        if (s.truth) cmp["truth"] = to_json(*s.truth);
        if (cfg.problem == ProblemKind::linear_test) {
            const MomentParams cf = closed_form(cfg, s);
            cmp["closed_form"] = moments_json(cf);
            cmp["flow_vs_closed_form"] = relative_gaps(fm, cf);
        }
        if (dim(final_g) <= 2) {
            const auto grid = grid_oracle(s, cfg.oracle);
            json gj = grid_json(grid);
            const double at_mean = reference::posterior_log_density(s.potential(), s.prior, grid.log_normalizer, fm.mean);
            gj["flow_mean_log_density"] = at_mean;
            gj["flow_mean_in_hpd99"] = at_mean >= grid.hpd_log_threshold(0.99);
            cmp["grid"] = gj;
            cmp["flow_vs_grid"] = relative_gaps(fm, grid.moments);
            if (cfg.outputs.density_grid) write_density_grid(dir / "density_grid.csv", grid, final_g);
        }
        if (cfg.oracle.rwmh_steps > 0) {
            cmp["rwmh"] = rwmh_json(s, cfg.oracle, cfg.oracle.rwmh_steps, stream_seed(cfg.seed, Stream::rwmh));
        }
        if (cfg.problem == ProblemKind::scatter) {
            const scatter::BoundaryCurve estimate = scatter::BoundaryCurve::fourier(fm.mean, cfg.scatter.decay);
            std::optional<scatter::BoundaryCurve> truth;
            if (cfg.scatter.truth_shape) truth = scatter::shape_catalog(*cfg.scatter.truth_shape);
            else if (cfg.truth) truth = scatter::BoundaryCurve::fourier(*cfg.truth, cfg.scatter.decay);
            auto out = open_out(dir / "reconstruction.csv");
            out << "s,estimate_x1,estimate_x2" << (truth ? ",truth_x1,truth_x2" : "") << '\n';
            constexpr int kPoints = 256;
            for (int i = 0; i < kPoints; ++i) {
                const double sv = 2.0 * std::numbers::pi * i / kPoints;
                const auto p = estimate.eval(sv).z;
                out << sv << ',' << p.x() << ',' << p.y();
                if (truth) {
                    const auto q = truth->eval(sv).z;
                    out << ',' << q.x() << ',' << q.y();
                }
                out << '\n';
            }
            if (truth) cmp["hausdorff_to_truth"] = scatter::hausdorff_distance(estimate, *truth);
        }
        write_json(dir / "comparison.json", cmp);
        if (!opts.quiet) log << "wrote results to " << dir.string() << '\n';
        return exit_code::ok;
    });
}

int oracle_command(const fs::path& config, const Options& opts, std::ostream& log, std::ostream& err) {
    const char* stage = "config";
    return guarded(stage, err, [&] {
        const ExperimentConfig cfg = configure(config, opts);
        stage = "data";
        const Setup s = build_setup(cfg);
        stage = "oracle";
        json j;
        j["problem"] = problem_name(cfg.problem);
        if (cfg.problem == ProblemKind::linear_test) j["closed_form"] = moments_json(closed_form(cfg, s));
        if (s.prior.dim() <= 2) j["grid"] = grid_json(grid_oracle(s, cfg.oracle));
        const std::size_t steps = cfg.oracle.rwmh_steps > 0 ? cfg.oracle.rwmh_steps : 20000;
        j["rwmh"] = rwmh_json(s, cfg.oracle, steps, stream_seed(cfg.seed, Stream::rwmh));
        fs::create_directories(cfg.outputs.directory);
        write_json(cfg.outputs.directory / "oracle.json", j);
        if (!opts.quiet) log << "wrote " << (cfg.outputs.directory / "oracle.json").string() << '\n';
        return exit_code::ok;
    });
}

int forward_command(const fs::path& config, const std::vector<double>& values, const Options& opts, std::ostream& out,
                    std::ostream& err) {
    const char* stage = "config";
    return guarded(stage, err, [&] {
        const ExperimentConfig cfg = configure(config, opts);
        stage = "forward";
        const auto model = build_model(cfg);
        const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
        if (static_cast<std::size_t>(x.size()) != model->input_dim()) {
            throw ConfigError("forward: expected " + std::to_string(model->input_dim()) + " values, got " +
                              std::to_string(x.size()));
        }
        out << std::setprecision(17);
        if (const auto* h = dynamic_cast<const heat::HeatModel*>(model.get())) {
            const Eigen::VectorXd y = h->observe_conductivities(x);
            out << "x1,x2,value\n";
            for (std::size_t i = 0; i < h->sensors().size(); ++i) {
                out << h->sensors()[i].x() << ',' << h->sensors()[i].y() << ',' << y(static_cast<Eigen::Index>(i)) << '\n';
            }
        } else if (cfg.problem == ProblemKind::scatter) {
            const auto& sc = cfg.scatter.config;
            const Eigen::MatrixXcd d = scatter::far_field_data(scatter::BoundaryCurve::fourier(x, cfg.scatter.decay), sc,
                                                               kernels::Execution::parallel);
            const auto obs = sc.observation_angles();
            out << "obs_angle,incident_angle,re,im\n";
            for (int j = 0; j < sc.n_observations; ++j) {
                for (std::size_t c = 0; c < sc.incident_angles.size(); ++c) {
                    const auto v = d(j, static_cast<Eigen::Index>(c));
                    out << obs[static_cast<std::size_t>(j)] << ',' << sc.incident_angles[c] << ',' << v.real() << ','
                        << v.imag() << '\n';
                }
            }
        } else {
            const Eigen::VectorXd y = model->evaluate(x);
            out << "index,value\n";
            for (Eigen::Index i = 0; i < y.size(); ++i) out << i << ',' << y(i) << '\n';
        }
        return exit_code::ok;
    });
}

int sample_command(const fs::path& record, std::size_t count, const Options& opts, std::ostream& out,
                   std::ostream& err) {
    const char* stage = "sample";
    return guarded(stage, err, [&] {
        std::ifstream in(record);
        if (!in) throw ConfigError("cannot open params record " + record.string());
        json j;
        try {
            j = json::parse(in);
        } catch (const json::parse_error& e) {
            throw ConfigError("params record " + record.string() + ": " + e.what());
        }
        const Density g = read_params_record(j);
        const Eigen::MatrixXd xs = kernels::draw_samples(g, count, opts.seed.value_or(0), kernels::Execution::parallel);
        std::ofstream file;
        std::ostream* sink = &out;
        if (opts.out_dir) {
            fs::create_directories(*opts.out_dir);
            file = open_out(*opts.out_dir / "samples.csv");
            sink = &file;
        }
        *sink << std::setprecision(17);
        for (Eigen::Index i = 0; i < xs.rows(); ++i) *sink << (i ? "," : "") << "x" << i + 1;
        *sink << '\n';
        for (Eigen::Index k = 0; k < xs.cols(); ++k) {
            for (Eigen::Index i = 0; i < xs.rows(); ++i) *sink << (i ? "," : "") << xs(i, k);
            *sink << '\n';
        }
        return exit_code::ok;
    });
}

}  // namespace hbayes::experiment

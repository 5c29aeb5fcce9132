#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "hbayes/density.hpp"
#include "hbayes/flow.hpp"
#include "hbayes/heat.hpp"
#include "hbayes/scatter.hpp"

/// Experiment orchestration behind the command-line tool: config parsing,
/// data synthesis, flow run, oracles and artifact files.
namespace hbayes::experiment {

enum class ProblemKind { linear_test, heat2, heat6, scatter };

struct FamilyConfig {
    DensityKind kind = DensityKind::gaussian;
    std::size_t components = 2;
    /// Component means start at prior mean + jitter * (prior sd) * z_i.
    double mean_jitter = 0.5;
};

struct OracleConfig {
    std::size_t grid_n = 201;
    /// Half width of the quadrature box in Laplace standard deviations.
    double box_half_width = 10.0;
    std::size_t rwmh_steps = 0;
    double rwmh_step_sd = 0.5;
    std::size_t rwmh_burn_in = 1000;
};

struct OutputConfig {
    std::filesystem::path directory = "out";
    std::size_t posterior_samples = 1000;
    bool density_grid = true;
    std::size_t density_grid_n = 101;
};

struct LinearSetup {
    Eigen::MatrixXd A;
    Eigen::VectorXd prior_mean;
    Eigen::MatrixXd prior_cov;
    std::optional<Eigen::VectorXd> data;
};

struct HeatSetup {
    heat::HeatGeometry geometry;
    std::vector<Eigen::Vector2d> sensors;
    int resolution = 32;
    double prior_mean = 30.0;
    double prior_sd = 6.0;
};

struct ScatterSetup {
    scatter::ScatterConfig config;
    int modes = 5;
    double decay = 2.2;
    std::optional<std::string> truth_shape;
};

struct ExperimentConfig {
    ProblemKind problem = ProblemKind::linear_test;
    std::uint64_t seed = 0;
    double noise_sd = 1.0;
    /// Linear: unknown vector; heat: conductivities; scatter: coefficients.
    std::optional<Eigen::VectorXd> truth;
    std::optional<std::filesystem::path> data_file;
    FamilyConfig family;
    EstimatorConfig flow;
    OracleConfig oracle;
    OutputConfig outputs;
    LinearSetup linear;
    HeatSetup heat;
    ScatterSetup scatter;
};

std::string problem_name(ProblemKind kind);

/// Throws ConfigError naming the offending field. Relative paths inside the
/// config resolve against base_dir.
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Geometry record as stored in the shipped geometry files.
heat::HeatGeometry parse_geometry(const nlohmann::json& j);
/// Built-in inclusion layouts for heat2 and heat6.
heat::HeatGeometry default_geometry(ProblemKind kind);
std::vector<Eigen::Vector2d> default_sensors(ProblemKind kind);

/// Forward model, data and prior assembled from a config.
struct Setup {
    std::shared_ptr<const ForwardModel> model;
    Eigen::VectorXd data;
    double noise_sd = 1.0;
    /// Per-entry noise standard deviations; when non-empty they replace noise_sd.
    Eigen::VectorXd noise_scale;
    GaussianParams prior;
    Density initial;
    /// Truth in the flow's coordinates, when known.
    std::optional<Eigen::VectorXd> truth;
    /// Clean far field of the truth (scatter only), used by the data file.
    std::optional<Eigen::MatrixXcd> far_field;

    Potential potential() const;
};

/// Seed streams split off the experiment seed.
enum class Stream : std::uint64_t { data = 1, flow = 2, rwmh = 3, samples = 4, family = 5 };
std::uint64_t stream_seed(std::uint64_t seed, Stream s);

Setup build_setup(const ExperimentConfig& cfg);

namespace exit_code {
constexpr int ok = 0;
constexpr int failure = 1;
constexpr int config_error = 2;
constexpr int flow_stall = 3;
constexpr int solver_failure = 4;
}  // namespace exit_code

struct Options {
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> out_dir;
    bool quiet = false;
};

/// Subcommands. Each returns an exit code and reports errors on `err`.
int run_command(const std::filesystem::path& config, const Options& opts, std::ostream& log, std::ostream& err);
int oracle_command(const std::filesystem::path& config, const Options& opts, std::ostream& log, std::ostream& err);
int forward_command(const std::filesystem::path& config, const std::vector<double>& values, const Options& opts,
                    std::ostream& out, std::ostream& err);
int sample_command(const std::filesystem::path& record, std::size_t count, const Options& opts, std::ostream& out,
                   std::ostream& err);

/// Final-parameter record as written by `run`.
nlohmann::json params_record(const Density& g);
Density read_params_record(const nlohmann::json& j);

}  // namespace hbayes::experiment

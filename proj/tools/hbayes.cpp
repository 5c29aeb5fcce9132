// Command-line driver: run, sample, oracle, forward.
#include <CLI11.hpp>

#include <iostream>

#include "hbayes/experiment.hpp"

namespace ex = hbayes::experiment;

int main(int argc, char** argv) {
    CLI::App app{"hbayes: parametric density flows from prior to posterior"};
    app.require_subcommand(1);

    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    bool quiet = false;
    app.add_option("--seed", seed, "override the master seed");
    app.add_option("--out-dir", out_dir, "override the output directory");
    app.add_flag("--quiet", quiet, "suppress progress output");

    std::string config;
    auto* run = app.add_subcommand("run", "run the flow for a config and write results");
    run->add_option("config", config, "experiment config (JSON)")->required();

    auto* oracle = app.add_subcommand("oracle", "compute reference posterior moments only");
    oracle->add_option("config", config, "experiment config (JSON)")->required();

    std::vector<double> values;
    auto* forward = app.add_subcommand("forward", "evaluate the forward model at given inputs");
    forward->add_option("config", config, "experiment config (JSON)")->required();
    forward->add_option("values", values, "model inputs (conductivities for heat, coefficients for scatter)")
        ->required();

    std::string record;
    std::size_t count = 1000;
    auto* sample = app.add_subcommand("sample", "draw samples from a saved parameter record");
    sample->add_option("params", record, "final_params.json from a run")->required();
    sample->add_option("-n,--count", count, "number of samples");

    for (auto* sub : {run, oracle, forward, sample}) {
        sub->add_option("--seed", seed, "override the master seed");
        sub->add_option("--out-dir", out_dir, "override the output directory");
        sub->add_flag("--quiet", quiet, "suppress progress output");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? ex::exit_code::ok : ex::exit_code::config_error;
    }

    ex::Options opts;
    opts.seed = seed;
    if (out_dir) opts.out_dir = *out_dir;
    opts.quiet = quiet;

    if (*run) return ex::run_command(config, opts, std::cout, std::cerr);
    if (*oracle) return ex::oracle_command(config, opts, std::cout, std::cerr);
    if (*forward) return ex::forward_command(config, values, opts, std::cout, std::cerr);
    return ex::sample_command(record, count, opts, std::cout, std::cerr);
}

// Serial reference vs OpenMP path for the hot kernels.
#include <benchmark/benchmark.h>

#include "hbayes/flow.hpp"
#include "hbayes/heat.hpp"
#include "hbayes/kernels.hpp"
#include "hbayes/mixture.hpp"
#include "hbayes/scatter.hpp"

namespace {

using hbayes::kernels::Execution;

Execution exec_of(const benchmark::State& state) {
    return state.range(0) == 0 ? Execution::serial : Execution::parallel;
}

hbayes::Density bench_mixture(std::size_t d) {
    std::vector<hbayes::GaussianParams> comps;
    for (int i = 0; i < 3; ++i) {
        comps.emplace_back(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(d), 0.5 * i),
                           hbayes::GaussianParams::standard(d).factor());
    }
    return hbayes::MixtureParams(std::move(comps), Eigen::VectorXd::Zero(2));
}

void BM_ScoreRows(benchmark::State& state) {
    const auto g = bench_mixture(11);
    const Eigen::MatrixXd xs = hbayes::kernels::draw_samples(g, 2000, 1, Execution::parallel);
    for (auto _ : state) benchmark::DoNotOptimize(hbayes::kernels::score_rows(g, xs, exec_of(state)));
}
BENCHMARK(BM_ScoreRows)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Fisher(benchmark::State& state) {
    const auto g = bench_mixture(11);
    hbayes::EstimatorConfig cfg;
    cfg.execution = exec_of(state);
    for (auto _ : state) benchmark::DoNotOptimize(hbayes::estimate_fisher(g, cfg));
}
BENCHMARK(BM_Fisher)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_HeatPotential(benchmark::State& state) {
    hbayes::heat::HeatGeometry geo;
    geo.inclusions = {{{0.3, 0.35}, 0.1, 1}, {{0.7, 0.35}, 0.1, 2}};
    const hbayes::heat::HeatModel model(geo, 32, hbayes::heat::sensor_grid(4, 3),
                                        hbayes::heat::lognormal_hyperparams(30.0, 6.0));
    const Eigen::VectorXd data = Eigen::VectorXd::Constant(12, 150.0);
    const auto phi = [&](const Eigen::VectorXd& x) { return hbayes::neg_log_likelihood(model, data, 0.25, x); };
    const Eigen::MatrixXd xs =
        hbayes::kernels::draw_samples(hbayes::GaussianParams::standard(2), 64, 2, Execution::parallel);
    for (auto _ : state) benchmark::DoNotOptimize(hbayes::kernels::evaluate_potential(phi, xs, exec_of(state)));
}
BENCHMARK(BM_HeatPotential)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_CfieAssembly(benchmark::State& state) {
    const auto g = hbayes::scatter::curve_geometry(hbayes::scatter::shape_catalog("pear"), 128);
    for (auto _ : state) benchmark::DoNotOptimize(hbayes::scatter::assemble_cfie(g, 1.0, 1.0, exec_of(state)));
}
BENCHMARK(BM_CfieAssembly)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "hbayes/density.hpp"
#include "hbayes/errors.hpp"
#include "hbayes/forward_model.hpp"
#include "hbayes/kernels.hpp"

namespace hbayes {

/// Which deviation functional defines the flow. Both reduce to the same
/// approximated update; the Hellinger variant carries a factor 1/4 on both
/// sides of the linear system.
enum class Deviation { kullback_leibler, squared_hellinger };

struct EstimatorConfig {
    std::size_t n_samples = 2000;
    /// Added to the Fisher diagonal. Unset means 1e-8 * trace(I) / p.
    std::optional<double> ridge;
    /// Subtract the sample mean of Phi in the drift (control variate).
    bool use_baseline = true;
    std::uint64_t seed = 0;
    int max_halvings = 20;
    double dt = 0.01;
    /// A sub-step is rejected (and halved) when its length in the Fisher
    /// metric, h * sqrt(d^T I d), exceeds this. Infinity disables the check.
    double max_step_fisher_norm = 0.5;
    Deviation deviation = Deviation::kullback_leibler;
    /// Compute the KL / Hellinger diagnostics after each step.
    bool divergence_diagnostics = false;
    kernels::Execution execution = kernels::Execution::parallel;
};

struct StepDiagnostics {
    double drift_norm = 0.0;
    double fisher_condition = 1.0;
    std::size_t n_samples_used = 0;
    int n_step_halvings = 0;
    int n_substeps = 0;
    std::optional<double> kl_estimate;
    std::optional<double> hellinger_estimate;
};

struct FlowState {
    double t = 0.0;
    std::size_t step = 0;
    Density params;
    StepDiagnostics diagnostics;
};

using FlowTrajectory = std::vector<FlowState>;

/// Posterior target of the flow: the potential Phi and the prior. The flow
/// starts from `initial` when set (e.g. a mixture spread around a Gaussian
/// prior), otherwise from the prior itself.
struct FlowProblem {
    Potential potential;
    Density prior;
    std::optional<Density> initial;
};

/// Raised when a step cannot be completed within max_halvings. Carries the
/// last state that satisfied the family invariants.
class FlowStall : public Error {
public:
    FlowStall(const std::string& what, FlowState last_valid)
        : Error(what), last_valid_(std::move(last_valid)) {}
    const FlowState& last_valid() const noexcept { return last_valid_; }

private:
    FlowState last_valid_;
};

/// ||data - model(kappa)||^2 / (2 noise_sd^2).
double neg_log_likelihood(const ForwardModel& model, const Eigen::VectorXd& data, double noise_sd,
                          const Eigen::VectorXd& kappa);

/// Wraps neg_log_likelihood into a Potential. The model must outlive it.
Potential make_potential(const ForwardModel& model, Eigen::VectorXd data, double noise_sd);

/// Monte Carlo terms of one step, all computed from one shared sample block.
struct StepTerms {
    Eigen::MatrixXd fisher;   ///< (1/n) sum s s^T + ridge I
    Eigen::VectorXd drift;    ///< (1/n) sum (Phi - b) s
    double ridge = 0.0;
    std::size_t n_samples = 0;
};

StepTerms estimate_step_terms(const Density& g, const Potential& phi, const EstimatorConfig& cfg,
                              std::uint64_t seed);

/// Fisher information estimate using the samples keyed by cfg.seed.
Eigen::MatrixXd estimate_fisher(const Density& g, const EstimatorConfig& cfg);

/// Drift estimate E_g[Phi * score] using the samples keyed by cfg.seed (the
/// same samples estimate_fisher uses).
Eigen::VectorXd estimate_drift(const Density& g, const Potential& phi, const EstimatorConfig& cfg);

/// Solve G_etaeta x = G_etat for the configured deviation.
Eigen::VectorXd solve_direction(const StepTerms& terms, Deviation deviation);

/// One safeguarded Euler step eta <- eta - dt * I^{-1} v over [t, t + cfg.dt].
FlowState hde_step(const FlowState& state, const Potential& phi, const EstimatorConfig& cfg);
/// As above, also filling divergence diagnostics when requested.
FlowState hde_step(const FlowState& state, const FlowProblem& problem, const EstimatorConfig& cfg);

FlowTrajectory run_flow(const FlowProblem& problem, const EstimatorConfig& cfg);
FlowTrajectory run_flow(const Density& eta0, const ForwardModel& model, const Eigen::VectorXd& data,
                        double noise_sd, const EstimatorConfig& cfg);

struct DivergenceEstimate {
    double value = 0.0;
    /// Estimate with log Z_t replaced by its importance-sampling estimate.
    double self_normalized = 0.0;
    double standard_error = 0.0;
};

/// E_g[log g + t Phi - log q]; equals KL(g || p_t / Z_t) - log Z_t.
DivergenceEstimate kl_estimate(const Density& g, const Potential& phi, const Density& prior, double t,
                               const EstimatorConfig& cfg);

/// Self-normalized squared Hellinger distance between g and p_t / Z_t, in [0, 1].
/// `self_normalized` equals `value`; the unnormalized form (Z_t = 1) is not
/// reported.
DivergenceEstimate hellinger_estimate(const Density& g, const Potential& phi, const Density& prior,
                                      double t, const EstimatorConfig& cfg);

}  // namespace hbayes

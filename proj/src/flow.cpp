#include "hbayes/flow.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "hbayes/rng.hpp"

namespace hbayes {

namespace {

constexpr std::uint64_t kDiagnosticStream = 0xd1a6'0000'0000'0001ULL;

std::string fmt_t(double t) {
    std::ostringstream os;
    os.precision(6);
    os << t;
    return os.str();
}

double fisher_condition(const Eigen::MatrixXd& fisher) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(fisher, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
    return hi / lo;
}

// Log-weights a_k = log g + t Phi - log q on a fresh sample block from g.
Eigen::VectorXd divergence_terms(const Density& g, const Potential& phi, const Density& prior,
                                 double t, const EstimatorConfig& cfg) {
    const Eigen::MatrixXd xs = kernels::draw_samples(g, cfg.n_samples, cfg.seed, cfg.execution);
    Eigen::VectorXd a = Eigen::VectorXd::Zero(xs.cols());
    if (t != 0.0) a = t * kernels::evaluate_potential(phi, xs, cfg.execution);
    for (Eigen::Index k = 0; k < xs.cols(); ++k) {
        a(k) += log_density(g, xs.col(k)) - log_density(prior, xs.col(k));
    }
    return a;
}

double sample_sd(const Eigen::VectorXd& v) {
    if (v.size() < 2) return 0.0;
    const double mean = v.mean();
    return std::sqrt((v.array() - mean).square().sum() / static_cast<double>(v.size() - 1));
}

template <class E>
[[noreturn]] void rethrow_at(const E& e, double t) {
    throw E(std::string(e.what()) + " (flow at t=" + fmt_t(t) + ")");
}

}  // namespace

double neg_log_likelihood(const ForwardModel& model, const Eigen::VectorXd& data, double noise_sd,
                          const Eigen::VectorXd& kappa) {
    if (static_cast<std::size_t>(data.size()) != model.output_dim()) {
        throw ContractError("neg_log_likelihood: data length " + std::to_string(data.size()) +
                            " does not match model output " + std::to_string(model.output_dim()));
    }
    if (!(noise_sd > 0.0)) throw ContractError("neg_log_likelihood: noise_sd must be positive");
    if (data.size() == 0) return 0.0;
    Eigen::VectorXd predicted;
    try {
        predicted = model.evaluate(kappa);
    } catch (const std::exception& e) {
        throw ForwardError(model.name() + " model evaluation failed: " + e.what());
    }
    return (data - predicted).squaredNorm() / (2.0 * noise_sd * noise_sd);
}

Potential make_potential(const ForwardModel& model, Eigen::VectorXd data, double noise_sd) {
    if (static_cast<std::size_t>(data.size()) != model.output_dim()) {
        throw ContractError("make_potential: data length does not match model output");
    }
    return [&model, data = std::move(data), noise_sd](const Eigen::VectorXd& kappa) {
        return neg_log_likelihood(model, data, noise_sd, kappa);
    };
}

StepTerms estimate_step_terms(const Density& g, const Potential& phi, const EstimatorConfig& cfg,
                              std::uint64_t seed) {
    if (cfg.n_samples < 1) throw ContractError("estimator: n_samples must be >= 1");
    const Eigen::MatrixXd xs = kernels::draw_samples(g, cfg.n_samples, seed, cfg.execution);
    const Eigen::MatrixXd scores = kernels::score_rows(g, xs, cfg.execution);
    Eigen::VectorXd values = kernels::evaluate_potential(phi, xs, cfg.execution);
    if (cfg.use_baseline) values.array() -= values.mean();

    StepTerms out;
    out.n_samples = cfg.n_samples;
    out.fisher = kernels::mean_outer_product(scores, cfg.execution);
    const auto p = static_cast<double>(out.fisher.rows());
    out.ridge = cfg.ridge.value_or(1e-8 * out.fisher.trace() / p);
    if (out.ridge < 0.0) throw ContractError("estimator: ridge must be non-negative");
    out.fisher.diagonal().array() += out.ridge;
    out.drift = kernels::weighted_mean(scores, values, cfg.execution);
    return out;
}

Eigen::MatrixXd estimate_fisher(const Density& g, const EstimatorConfig& cfg) {
    const Potential zero = [](const Eigen::VectorXd&) { return 0.0; };
    return estimate_step_terms(g, zero, cfg, cfg.seed).fisher;
}

Eigen::VectorXd estimate_drift(const Density& g, const Potential& phi, const EstimatorConfig& cfg) {
    return estimate_step_terms(g, phi, cfg, cfg.seed).drift;
}

Eigen::VectorXd solve_direction(const StepTerms& terms, Deviation deviation) {
    // The Hellinger deviation scales both the Hessian and the mixed derivative
    // by 1/4; a power-of-two scaling leaves the factorization bit-identical.
    const double scale = deviation == Deviation::squared_hellinger ? 0.25 : 1.0;
    const Eigen::MatrixXd hessian = scale * terms.fisher;
    const Eigen::VectorXd mixed = scale * terms.drift;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hessian);
    const Eigen::VectorXd diag = ldlt.vectorD();
    const double dmax = diag.cwiseAbs().maxCoeff();
    const double tol = dmax * static_cast<double>(diag.size()) * std::numeric_limits<double>::epsilon();
    if (ldlt.info() != Eigen::Success || !(diag.minCoeff() > tol)) {
        throw SolveError(terms.ridge > 0.0
                             ? "Fisher information estimate is numerically singular"
                             : "Fisher information estimate is singular; use ridge > 0");
    }
    Eigen::VectorXd x = ldlt.solve(mixed);
    if (!x.allFinite()) throw SolveError("flow direction is not finite");
    return x;
}

FlowState hde_step(const FlowState& state, const Potential& phi, const EstimatorConfig& cfg) {
    if (cfg.dt < 0.0 || cfg.dt > 1.0) throw ContractError("hde_step: dt must lie in [0, 1]");
    if (state.t + cfg.dt > 1.0 + 1e-12) {
        throw ContractError("hde_step: step from t=" + fmt_t(state.t) + " by " + fmt_t(cfg.dt) +
                            " overshoots t=1");
    }
    if (cfg.dt == 0.0) return state;

    const std::uint64_t step_seed = derive_seed(cfg.seed, state.step);
    StepDiagnostics diag;

    Density current = state.params;
    double done = 0.0;  // fraction of dt consumed; dyadic, so exact
    double frac = 1.0;  // current sub-step as a fraction of dt
    const double min_frac = std::ldexp(1.0, -cfg.max_halvings);

    auto estimate = [&](int substep) {
        const std::uint64_t seed = substep == 0 ? step_seed : derive_seed(step_seed, static_cast<std::uint64_t>(substep));
        StepTerms terms = estimate_step_terms(current, phi, cfg, seed);
        diag.n_samples_used += terms.n_samples;
        return terms;
    };

    StepTerms terms = estimate(0);
    diag.drift_norm = terms.drift.norm();
    diag.fisher_condition = fisher_condition(terms.fisher);
    Eigen::VectorXd direction = solve_direction(terms, cfg.deviation);
    Eigen::VectorXd eta = flat(current);

    while (done < 1.0) {
        frac = std::min(frac, 1.0 - done);
        const double h = frac * cfg.dt;
        const double fisher_len = h * std::sqrt(std::max(0.0, direction.dot(terms.fisher * direction)));
        std::optional<Density> proposal;
        if (fisher_len <= cfg.max_step_fisher_norm) {
            proposal = with_flat(current, eta - h * direction);
        }
        if (!proposal) {
            frac *= 0.5;
            ++diag.n_step_halvings;
            if (frac < min_frac) {
                FlowState last{state.t + done * cfg.dt, state.step, current, diag};
                throw FlowStall("flow stalled: step from t=" + fmt_t(state.t) + " could not be completed within " +
                                    std::to_string(cfg.max_halvings) + " halvings",
                                std::move(last));
            }
            continue;
        }
        current = std::move(*proposal);
        done += frac;
        ++diag.n_substeps;
        if (done < 1.0) {
            frac = std::min(1.0, 2.0 * frac);
            terms = estimate(diag.n_substeps);
            direction = solve_direction(terms, cfg.deviation);
            eta = flat(current);
        }
    }

    double t_next = state.t + cfg.dt;
    if (std::abs(t_next - 1.0) <= 1e-12) t_next = 1.0;
    return FlowState{t_next, state.step + 1, std::move(current), diag};
}

FlowState hde_step(const FlowState& state, const FlowProblem& problem, const EstimatorConfig& cfg) {
    FlowState next = hde_step(state, problem.potential, cfg);
    if (cfg.divergence_diagnostics && cfg.dt > 0.0) {
        EstimatorConfig dcfg = cfg;
        dcfg.seed = derive_seed(derive_seed(cfg.seed, state.step), kDiagnosticStream);
        next.diagnostics.kl_estimate = kl_estimate(next.params, problem.potential, problem.prior, next.t, dcfg).value;
        next.diagnostics.hellinger_estimate =
            hellinger_estimate(next.params, problem.potential, problem.prior, next.t, dcfg).value;
    }
    return next;
}

FlowTrajectory run_flow(const FlowProblem& problem, const EstimatorConfig& cfg) {
    if (!(cfg.dt > 0.0) || cfg.dt > 1.0) throw ContractError("run_flow: dt must lie in (0, 1]");
    auto steps = static_cast<std::size_t>(std::llround(1.0 / cfg.dt));
    if (steps == 0 || std::abs(static_cast<double>(steps) * cfg.dt - 1.0) > 1e-9) {
        steps = static_cast<std::size_t>(std::ceil(1.0 / cfg.dt - 1e-9));
    }
    auto grid = [&](std::size_t i) { return i >= steps ? 1.0 : static_cast<double>(i) * cfg.dt; };

    FlowTrajectory traj;
    traj.reserve(steps + 1);
    const Density& start = problem.initial ? *problem.initial : problem.prior;
    if (dim(start) != dim(problem.prior)) throw ContractError("run_flow: initial density and prior differ in dimension");
    traj.push_back(FlowState{0.0, 0, start, {}});
    for (std::size_t i = 0; i < steps; ++i) {
        EstimatorConfig step_cfg = cfg;
        step_cfg.dt = grid(i + 1) - grid(i);
        const FlowState& cur = traj.back();
        try {
            FlowState next = hde_step(cur, problem, step_cfg);
            next.t = grid(i + 1);
            traj.push_back(std::move(next));
        } catch (const FlowStall& e) {
            throw FlowStall(std::string(e.what()) + " (flow at t=" + fmt_t(cur.t) + ")", e.last_valid());
        } catch (const SolveError& e) {
            rethrow_at(e, cur.t);
        } catch (const EstimationError& e) {
            rethrow_at(e, cur.t);
        } catch (const ForwardError& e) {
            rethrow_at(e, cur.t);
        }
    }
    return traj;
}

FlowTrajectory run_flow(const Density& eta0, const ForwardModel& model, const Eigen::VectorXd& data,
                        double noise_sd, const EstimatorConfig& cfg) {
    if (dim(eta0) != model.input_dim()) {
        throw ContractError("run_flow: initial density dimension does not match model input");
    }
    return run_flow(FlowProblem{make_potential(model, data, noise_sd), eta0, std::nullopt}, cfg);
}

DivergenceEstimate kl_estimate(const Density& g, const Potential& phi, const Density& prior, double t,
                               const EstimatorConfig& cfg) {
    const Eigen::VectorXd a = divergence_terms(g, phi, prior, t, cfg);
    const auto n = static_cast<double>(a.size());
    DivergenceEstimate out;
    out.value = a.mean();
    out.standard_error = sample_sd(a) / std::sqrt(n);
    // log Z_t estimated as log mean exp(-a); Jensen makes the sum non-negative.
    const double m = (-a).maxCoeff();
    const double log_z = m + std::log((-a.array() - m).exp().sum() / n);
    out.self_normalized = out.value + log_z;
    return out;
}

DivergenceEstimate hellinger_estimate(const Density& g, const Potential& phi, const Density& prior,
                                      double t, const EstimatorConfig& cfg) {
    const Eigen::VectorXd a = divergence_terms(g, phi, prior, t, cfg);
    const auto n = static_cast<double>(a.size());
    // w = p_t / g = exp(-a); H^2 = 1 - mean(sqrt w) / sqrt(mean w), scaled by max(-a).
    const double m = (-a).maxCoeff();
    const Eigen::ArrayXd root = (0.5 * (-a.array() - m)).exp();
    const double mean_root = root.mean();
    const double mean_w = root.square().mean();
    DivergenceEstimate out;
    out.value = std::clamp(1.0 - mean_root / std::sqrt(mean_w), 0.0, 1.0);
    out.self_normalized = out.value;
    out.standard_error = sample_sd(root.matrix()) / std::sqrt(n) / std::sqrt(mean_w);
    return out;
}

}  // namespace hbayes

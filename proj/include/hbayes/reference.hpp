#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "hbayes/forward_model.hpp"
#include "hbayes/gaussian.hpp"
#include "hbayes/kernels.hpp"

/// Independent posterior oracles: closed-form conjugate posterior, tensor
/// grid quadrature (d <= 2) and random-walk Metropolis.
namespace hbayes::reference {

struct LinearGaussianProblem {
    Eigen::MatrixXd A;
    Eigen::VectorXd prior_mean;
    Eigen::MatrixXd prior_cov;
    double noise_sd = 1.0;
    Eigen::VectorXd data;
};

MomentParams linear_gaussian_posterior(const LinearGaussianProblem& p);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

/// Posterior tabulated on a tensor trapezoid grid.
struct GridPosterior {
    MomentParams moments;
    /// log of integral exp(-Phi) q.
    double log_normalizer = 0.0;
    /// Node coordinates per axis.
    std::vector<Eigen::VectorXd> axes;
    /// Normalized log posterior density at each node, first axis fastest.
    Eigen::VectorXd log_density;
    /// Trapezoid quadrature weight of each node.
    Eigen::VectorXd weights;

    Eigen::VectorXd node(Eigen::Index flat_index) const;
    /// Log-density level whose super-level set holds `mass` of the posterior.
    double hpd_log_threshold(double mass) const;
};

/// Trapezoid quadrature of exp(-Phi) q on `bounds` with grid_n nodes per axis.
/// The box must contain essentially all posterior mass. Throws ContractError
/// for d > 2.
GridPosterior grid_posterior_moments(const Potential& phi, const GaussianParams& prior,
                                     std::span<const Interval> bounds, std::size_t grid_n,
                                     kernels::Execution exec = kernels::Execution::parallel);

/// Normalized posterior log-density at a point, given a grid posterior's normalizer.
double posterior_log_density(const Potential& phi, const GaussianParams& prior, double log_normalizer,
                             const Eigen::VectorXd& point);

/// Box of +-half_width Laplace standard deviations around the posterior mode,
/// found by repeated zooming of a coarse grid search started on `start`
/// followed by a finite-difference Hessian. Used when the posterior is far
/// narrower than the prior.
std::vector<Interval> focus_box(const Potential& phi, const GaussianParams& prior,
                                std::span<const Interval> start, double half_width,
                                kernels::Execution exec = kernels::Execution::parallel);

struct Chain {
    Eigen::MatrixXd states;  ///< n_steps x d
    double acceptance_rate = 0.0;
};

/// Gaussian random-walk Metropolis targeting exp(-Phi) q, started at the prior mean.
Chain rwmh(const Potential& phi, const GaussianParams& prior, std::size_t n_steps, double step_sd,
           std::uint64_t seed);

/// Mean and covariance of chain rows [burn_in, end).
MomentParams chain_moments(const Chain& chain, std::size_t burn_in = 0);

}  // namespace hbayes::reference

#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "hbayes/density.hpp"
#include "hbayes/forward_model.hpp"

/// Data-parallel kernels of the Monte Carlo flow. Every kernel has a serial
/// reference path and an OpenMP path; both assign work by fixed sample or
/// entry index and reduce in a fixed order, so they agree bit for bit.
namespace hbayes::kernels {

enum class Execution { serial, parallel };

/// d x n block, one sample per column. Column k is drawn from the stream
/// derive_seed(seed, k).
Eigen::MatrixXd draw_samples(const Density& g, std::size_t count, std::uint64_t seed,
                             Execution exec);

/// Phi at every column. Throws EstimationError naming the lowest failing
/// sample index when Phi throws or returns a non-finite value.
Eigen::VectorXd evaluate_potential(const Potential& phi, const Eigen::MatrixXd& samples,
                                   Execution exec);

/// n x p matrix of scores, one row per sample.
Eigen::MatrixXd score_rows(const Density& g, const Eigen::MatrixXd& samples, Execution exec);

/// (1/n) S^T S for an n x p score matrix, exactly symmetric.
Eigen::MatrixXd mean_outer_product(const Eigen::MatrixXd& scores, Execution exec);

/// (1/n) S^T w.
Eigen::VectorXd weighted_mean(const Eigen::MatrixXd& scores, const Eigen::VectorXd& weights,
                              Execution exec);

/// Number of OpenMP worker threads that the parallel path will use.
int worker_count();

}  // namespace hbayes::kernels

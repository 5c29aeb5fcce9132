#include "hbayes/kernels.hpp"

#include <cmath>
#include <exception>
#include <string>
#include <vector>

#include <omp.h>

#include "hbayes/errors.hpp"
#include "hbayes/rng.hpp"

namespace hbayes::kernels {

namespace {

bool parallel(Execution exec) { return exec == Execution::parallel; }

// Rethrow the failure with the smallest index so the error does not depend on
// thread scheduling.
void rethrow_first(const std::vector<std::exception_ptr>& errors) {
    for (std::size_t k = 0; k < errors.size(); ++k) {
        if (!errors[k]) continue;
        try {
            std::rethrow_exception(errors[k]);
        } catch (const EstimationError&) {
            throw;
        } catch (const std::exception& e) {
            throw EstimationError("potential evaluation failed at sample " + std::to_string(k) +
                                  ": " + e.what());
        }
    }
}

}  // namespace

int worker_count() { return omp_get_max_threads(); }

Eigen::MatrixXd draw_samples(const Density& g, std::size_t count, std::uint64_t seed,
                             Execution exec) {
    const auto n = static_cast<Eigen::Index>(count);
    const auto d = static_cast<Eigen::Index>(dim(g));
    Eigen::MatrixXd out(d, n);
#pragma omp parallel for schedule(static) if (parallel(exec))
    for (Eigen::Index k = 0; k < n; ++k) {
        sample_one(g, derive_seed(seed, static_cast<std::uint64_t>(k)), out.col(k));
    }
    return out;
}

Eigen::VectorXd evaluate_potential(const Potential& phi, const Eigen::MatrixXd& samples,
                                   Execution exec) {
    const Eigen::Index n = samples.cols();
    Eigen::VectorXd out(n);
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
    bool failed = false;
#pragma omp parallel for schedule(dynamic, 4) if (parallel(exec)) reduction(|| : failed)
    for (Eigen::Index k = 0; k < n; ++k) {
        try {
            const double v = phi(samples.col(k));
            if (!std::isfinite(v)) {
                throw EstimationError("potential returned non-finite value " + std::to_string(v) +
                                      " at sample " + std::to_string(k));
            }
            out(k) = v;
        } catch (...) {
            errors[static_cast<std::size_t>(k)] = std::current_exception();
            failed = true;
        }
    }
    if (failed) rethrow_first(errors);
    return out;
}

Eigen::MatrixXd score_rows(const Density& g, const Eigen::MatrixXd& samples, Execution exec) {
    const Eigen::Index n = samples.cols();
    const auto p = static_cast<Eigen::Index>(parameter_count(g));
    Eigen::MatrixXd out(n, p);
#pragma omp parallel if (parallel(exec))
    {
        Eigen::VectorXd row(p);
#pragma omp for schedule(static)
        for (Eigen::Index k = 0; k < n; ++k) {
            score_into(g, samples.col(k), row);
            out.row(k) = row.transpose();
        }
    }
    return out;
}

Eigen::MatrixXd mean_outer_product(const Eigen::MatrixXd& scores, Execution exec) {
    const Eigen::Index p = scores.cols();
    const double inv_n = 1.0 / static_cast<double>(scores.rows());
    Eigen::MatrixXd out(p, p);
#pragma omp parallel for schedule(dynamic) if (parallel(exec))
    for (Eigen::Index i = 0; i < p; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            const double v = scores.col(i).dot(scores.col(j)) * inv_n;
            out(i, j) = v;
            out(j, i) = v;
        }
    }
    return out;
}

Eigen::VectorXd weighted_mean(const Eigen::MatrixXd& scores, const Eigen::VectorXd& weights,
                              Execution exec) {
    if (weights.size() != scores.rows()) {
        throw ContractError("weighted_mean: weight count does not match sample count");
    }
    const Eigen::Index p = scores.cols();
    const double inv_n = 1.0 / static_cast<double>(scores.rows());
    Eigen::VectorXd out(p);
#pragma omp parallel for schedule(static) if (parallel(exec))
    for (Eigen::Index j = 0; j < p; ++j) out(j) = scores.col(j).dot(weights) * inv_n;
    return out;
}

}  // namespace hbayes::kernels

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "hbayes/gaussian.hpp"

namespace hbayes {

/// Gaussian mixture with arctan-parameterized weights
///   w_i = (pi/2 + atan(lambda_i)) / sum_j (pi/2 + atan(lambda_j)),
/// where lambda_M = 0 is pinned and not stored.
///
/// Flat parameter layout used by the flow: [component_1 flat, ...,
/// component_M flat, lambda_1, ..., lambda_{M-1}].
class MixtureParams {
public:
    MixtureParams(std::vector<GaussianParams> components, Eigen::VectorXd lambdas);

    static MixtureParams from_flat(std::size_t components, std::size_t d,
                                   std::span<const double> flat);
    static bool admissible(std::size_t components, std::size_t d, std::span<const double> flat);

    std::size_t size() const noexcept { return components_.size(); }
    std::size_t dim() const noexcept { return components_.front().dim(); }
    std::size_t parameter_count() const noexcept {
        return size() * components_.front().parameter_count() + size() - 1;
    }

    const std::vector<GaussianParams>& components() const noexcept { return components_; }
    const Eigen::VectorXd& lambdas() const noexcept { return lambdas_; }

    /// Weight numerators pi/2 + atan(lambda_i), including the pinned last one.
    const Eigen::VectorXd& weight_numerators() const noexcept { return numerators_; }
    const Eigen::VectorXd& log_weights() const noexcept { return log_weights_; }

    Eigen::VectorXd flat() const;

private:
    std::vector<GaussianParams> components_;
    Eigen::VectorXd lambdas_;
    Eigen::VectorXd numerators_;
    Eigen::VectorXd log_weights_;
};

Eigen::VectorXd weights(const MixtureParams& mix);

double mix_logpdf(const MixtureParams& mix, const Eigen::Ref<const Eigen::VectorXd>& point);

/// Posterior component probabilities w_i q_i / g at a point (sum to one).
Eigen::VectorXd responsibilities(const MixtureParams& mix,
                                 const Eigen::Ref<const Eigen::VectorXd>& point);

/// Gradient of mix_logpdf in the flat layout of MixtureParams.
Eigen::VectorXd mix_score(const MixtureParams& mix, const Eigen::Ref<const Eigen::VectorXd>& point);
void mix_score_into(const MixtureParams& mix, const Eigen::Ref<const Eigen::VectorXd>& point,
                    Eigen::Ref<Eigen::VectorXd> out);

/// Ancestral sampling; row k depends only on (seed, k).
Eigen::MatrixXd mix_sample(const MixtureParams& mix, std::size_t count, std::uint64_t seed);
void mix_sample_one(const MixtureParams& mix, std::uint64_t stream_seed,
                    Eigen::Ref<Eigen::VectorXd> out);

}  // namespace hbayes

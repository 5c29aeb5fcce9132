#pragma once

#include <cstdint>
#include <span>

#include <Eigen/Dense>

namespace hbayes {

/// Number of entries in the lower triangle of a d x d matrix.
constexpr std::size_t vech_size(std::size_t d) noexcept { return d * (d + 1) / 2; }

/// Row-major half-vectorization of the lower triangle: (R11, R21, R22, R31, ...).
Eigen::VectorXd vech(const Eigen::MatrixXd& lower);
Eigen::MatrixXd unvech(std::size_t d, std::span<const double> values);

/// Mean and covariance of a Gaussian.
struct MomentParams {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
};

/// Multivariate Gaussian in the (mean, lower-triangular precision factor)
/// parameterization. The precision is P = R^T R with R lower triangular and a
/// strictly positive diagonal. Note this is the reverse of the usual
/// LL^T Cholesky convention: R = L^{-1} where L L^T is the covariance.
///
/// The flat parameter vector is [mean; vech(R)], of length d + d(d+1)/2.
/// Instances are immutable once constructed.
class GaussianParams {
public:
    /// Throws ContractError on shape mismatch or a non-positive diagonal.
    GaussianParams(Eigen::VectorXd mean, Eigen::MatrixXd factor);

    /// Build from [mean; vech(R)].
    static GaussianParams from_flat(std::size_t d, std::span<const double> flat);
    /// Standard normal in d dimensions.
    static GaussianParams standard(std::size_t d);

    std::size_t dim() const noexcept { return static_cast<std::size_t>(mean_.size()); }
    std::size_t parameter_count() const noexcept { return dim() + vech_size(dim()); }

    const Eigen::VectorXd& mean() const noexcept { return mean_; }
    const Eigen::MatrixXd& factor() const noexcept { return factor_; }
    Eigen::VectorXd chol_vech() const { return vech(factor_); }
    Eigen::MatrixXd precision() const { return factor_.transpose() * factor_; }

    /// Sum of log R_ii, i.e. half the log-determinant of the precision.
    double log_det_factor() const noexcept { return log_det_factor_; }

    Eigen::VectorXd flat() const;

    /// True when every entry of the flat vector yields a valid instance.
    static bool admissible(std::size_t d, std::span<const double> flat);

private:
    Eigen::VectorXd mean_;
    Eigen::MatrixXd factor_;
    double log_det_factor_ = 0.0;
};

double logpdf(const GaussianParams& params, const Eigen::Ref<const Eigen::VectorXd>& point);

/// Gradient of logpdf with respect to [mean; vech(R)]. The mean block is
/// R^T R (x - mean); the factor block is vech(diag(R)^{-1} - R (x-m)(x-m)^T).
Eigen::VectorXd score(const GaussianParams& params, const Eigen::Ref<const Eigen::VectorXd>& point);

/// Same as score() but writes into a preallocated row (length parameter_count()).
void score_into(const GaussianParams& params, const Eigen::Ref<const Eigen::VectorXd>& point,
                Eigen::Ref<Eigen::VectorXd> out);

/// Draw `count` rows from N(mean, (R^T R)^{-1}). Row k depends only on
/// (seed, k), so the result does not depend on the number of threads.
Eigen::MatrixXd sample(const GaussianParams& params, std::size_t count, std::uint64_t seed);

/// Draw a single row using the stream keyed by `stream_seed`.
void sample_one(const GaussianParams& params, std::uint64_t stream_seed,
                Eigen::Ref<Eigen::VectorXd> out);

/// Throws FactorizationError when the covariance is not SPD.
GaussianParams moment_to_param(const MomentParams& m);
MomentParams param_to_moment(const GaussianParams& p);

/// Closed forms used by the divergence diagnostics and their tests.
double kl_divergence(const MomentParams& p, const MomentParams& q);
double squared_hellinger(const MomentParams& p, const MomentParams& q);

}  // namespace hbayes

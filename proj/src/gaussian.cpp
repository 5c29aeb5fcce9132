#include "hbayes/gaussian.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "hbayes/errors.hpp"
#include "hbayes/rng.hpp"

namespace hbayes {

namespace {

const double kLogTwoPi = std::log(2.0 * std::numbers::pi);

void check_point(const GaussianParams& params, Eigen::Index size) {
    if (static_cast<std::size_t>(size) != params.dim()) {
        throw ContractError("gaussian: point has length " + std::to_string(size) +
                            ", expected " + std::to_string(params.dim()));
    }
}

}  // namespace

Eigen::VectorXd vech(const Eigen::MatrixXd& lower) {
    const Eigen::Index d = lower.rows();
    Eigen::VectorXd out(d * (d + 1) / 2);
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) out(k++) = lower(i, j);
    }
    return out;
}

Eigen::MatrixXd unvech(std::size_t d, std::span<const double> values) {
    if (values.size() != vech_size(d)) {
        throw ContractError("unvech: expected " + std::to_string(vech_size(d)) + " values, got " +
                            std::to_string(values.size()));
    }
    const auto n = static_cast<Eigen::Index>(d);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) out(i, j) = values[k++];
    }
    return out;
}

GaussianParams::GaussianParams(Eigen::VectorXd mean, Eigen::MatrixXd factor)
    : mean_(std::move(mean)), factor_(std::move(factor)) {
    const Eigen::Index d = mean_.size();
    if (d < 1) throw ContractError("gaussian: dimension must be positive");
    if (factor_.rows() != d || factor_.cols() != d) {
        throw ContractError("gaussian: factor must be " + std::to_string(d) + "x" +
                            std::to_string(d));
    }
    // Only the lower triangle is meaningful.
    factor_.triangularView<Eigen::StrictlyUpper>().setZero();
    for (Eigen::Index i = 0; i < d; ++i) {
        const double r = factor_(i, i);
        if (!(r > 0.0) || !std::isfinite(r)) {
            throw ContractError("gaussian: factor diagonal entry " + std::to_string(i) +
                                " is not strictly positive (" + std::to_string(r) + ")");
        }
        log_det_factor_ += std::log(r);
    }
    if (!mean_.allFinite() || !factor_.allFinite()) {
        throw ContractError("gaussian: parameters must be finite");
    }
}

GaussianParams GaussianParams::from_flat(std::size_t d, std::span<const double> flat) {
    if (flat.size() != d + vech_size(d)) {
        throw ContractError("gaussian: flat vector has length " + std::to_string(flat.size()) +
                            ", expected " + std::to_string(d + vech_size(d)));
    }
    Eigen::VectorXd mean = Eigen::Map<const Eigen::VectorXd>(flat.data(), static_cast<Eigen::Index>(d));
    return GaussianParams(std::move(mean), unvech(d, flat.subspan(d)));
}

GaussianParams GaussianParams::standard(std::size_t d) {
    const auto n = static_cast<Eigen::Index>(d);
    return GaussianParams(Eigen::VectorXd::Zero(n), Eigen::MatrixXd::Identity(n, n));
}

Eigen::VectorXd GaussianParams::flat() const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(parameter_count()));
    out << mean_, vech(factor_);
    return out;
}

bool GaussianParams::admissible(std::size_t d, std::span<const double> flat) {
    if (flat.size() != d + vech_size(d)) return false;
    for (double v : flat) {
        if (!std::isfinite(v)) return false;
    }
    // Diagonal of row i sits at offset d + i(i+1)/2 + i.
    for (std::size_t i = 0; i < d; ++i) {
        if (!(flat[d + i * (i + 1) / 2 + i] > 0.0)) return false;
    }
    return true;
}

double logpdf(const GaussianParams& params, const Eigen::Ref<const Eigen::VectorXd>& point) {
    check_point(params, point.size());
    const Eigen::VectorXd whitened =
        params.factor().triangularView<Eigen::Lower>() * (point - params.mean());
    const auto d = static_cast<double>(params.dim());
    return params.log_det_factor() - 0.5 * d * kLogTwoPi - 0.5 * whitened.squaredNorm();
}

void score_into(const GaussianParams& params, const Eigen::Ref<const Eigen::VectorXd>& point,
                Eigen::Ref<Eigen::VectorXd> out) {
    check_point(params, point.size());
    const Eigen::Index d = point.size();
    const auto& R = params.factor();
    const Eigen::VectorXd delta = point - params.mean();
    const Eigen::VectorXd whitened = R.triangularView<Eigen::Lower>() * delta;
    out.head(d).noalias() = R.transpose().triangularView<Eigen::Upper>() * whitened;
    Eigen::Index k = d;
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            double v = -whitened(i) * delta(j);
            if (i == j) v += 1.0 / R(i, i);
            out(k++) = v;
        }
    }
}

Eigen::VectorXd score(const GaussianParams& params, const Eigen::Ref<const Eigen::VectorXd>& point) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(params.parameter_count()));
    score_into(params, point, out);
    return out;
}

void sample_one(const GaussianParams& params, std::uint64_t stream_seed,
                Eigen::Ref<Eigen::VectorXd> out) {
    StreamRng rng(stream_seed);
    std::normal_distribution<double> normal;
    const Eigen::Index d = static_cast<Eigen::Index>(params.dim());
    Eigen::VectorXd z(d);
    for (Eigen::Index i = 0; i < d; ++i) z(i) = normal(rng);
    // R x = z  =>  x ~ N(0, (R^T R)^{-1})
    params.factor().triangularView<Eigen::Lower>().solveInPlace(z);
    out = params.mean() + z;
}

Eigen::MatrixXd sample(const GaussianParams& params, std::size_t count, std::uint64_t seed) {
    if (count < 1) throw ContractError("gaussian sample: count must be >= 1");
    const auto n = static_cast<Eigen::Index>(count);
    const auto d = static_cast<Eigen::Index>(params.dim());
    Eigen::MatrixXd out(n, d);
    Eigen::VectorXd row(d);
    for (Eigen::Index k = 0; k < n; ++k) {
        sample_one(params, derive_seed(seed, static_cast<std::uint64_t>(k)), row);
        out.row(k) = row.transpose();
    }
    return out;
}

GaussianParams moment_to_param(const MomentParams& m) {
    const Eigen::Index d = m.mean.size();
    if (m.covariance.rows() != d || m.covariance.cols() != d) {
        throw ContractError("moment_to_param: covariance shape does not match mean");
    }
    const Eigen::MatrixXd sym = 0.5 * (m.covariance + m.covariance.transpose());
    Eigen::LLT<Eigen::MatrixXd> llt(sym);
    if (llt.info() != Eigen::Success) {
        throw FactorizationError("moment_to_param: covariance is not symmetric positive definite");
    }
    // Sigma = L L^T  =>  P = L^{-T} L^{-1} = R^T R with R = L^{-1} lower triangular.
    Eigen::MatrixXd R = Eigen::MatrixXd::Identity(d, d);
    llt.matrixL().solveInPlace(R);
    return GaussianParams(m.mean, std::move(R));
}

MomentParams param_to_moment(const GaussianParams& p) {
    const auto d = static_cast<Eigen::Index>(p.dim());
    Eigen::MatrixXd inv = Eigen::MatrixXd::Identity(d, d);
    p.factor().triangularView<Eigen::Lower>().solveInPlace(inv);
    Eigen::MatrixXd cov = inv * inv.transpose();
    cov = 0.5 * (cov + cov.transpose()).eval();
    return {p.mean(), std::move(cov)};
}

double kl_divergence(const MomentParams& p, const MomentParams& q) {
    const Eigen::Index d = p.mean.size();
    Eigen::LLT<Eigen::MatrixXd> lq(q.covariance);
    Eigen::LLT<Eigen::MatrixXd> lp(p.covariance);
    if (lq.info() != Eigen::Success || lp.info() != Eigen::Success) {
        throw FactorizationError("kl_divergence: covariance is not SPD");
    }
    const Eigen::VectorXd diff = q.mean - p.mean;
    const double trace = lq.solve(p.covariance).trace();
    const double maha = diff.dot(lq.solve(diff));
    double logdet_q = 0.0;
    double logdet_p = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
        logdet_q += 2.0 * std::log(lq.matrixL()(i, i));
        logdet_p += 2.0 * std::log(lp.matrixL()(i, i));
    }
    return 0.5 * (trace + maha - static_cast<double>(d) + logdet_q - logdet_p);
}

double squared_hellinger(const MomentParams& p, const MomentParams& q) {
    const Eigen::MatrixXd avg = 0.5 * (p.covariance + q.covariance);
    Eigen::LLT<Eigen::MatrixXd> la(avg);
    Eigen::LLT<Eigen::MatrixXd> lp(p.covariance);
    Eigen::LLT<Eigen::MatrixXd> lq(q.covariance);
    if (la.info() != Eigen::Success || lp.info() != Eigen::Success || lq.info() != Eigen::Success) {
        throw FactorizationError("squared_hellinger: covariance is not SPD");
    }
    auto logdet = [](const Eigen::LLT<Eigen::MatrixXd>& l) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < l.matrixL().rows(); ++i) s += 2.0 * std::log(l.matrixL()(i, i));
        return s;
    };
    const Eigen::VectorXd diff = p.mean - q.mean;
    const double log_bc = 0.25 * logdet(lp) + 0.25 * logdet(lq) - 0.5 * logdet(la) -
                          0.125 * diff.dot(la.solve(diff));
    return 1.0 - std::exp(log_bc);
}

}  // namespace hbayes

#include "hbayes/reference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "hbayes/errors.hpp"
#include "hbayes/rng.hpp"

namespace hbayes::reference {

MomentParams linear_gaussian_posterior(const LinearGaussianProblem& p) {
    const Eigen::Index d = p.A.cols();
    if (p.prior_mean.size() != d || p.prior_cov.rows() != d || p.prior_cov.cols() != d ||
        p.data.size() != p.A.rows()) {
        throw ContractError("linear_gaussian_posterior: inconsistent shapes");
    }
    if (!(p.noise_sd > 0.0)) throw ContractError("linear_gaussian_posterior: noise_sd must be positive");
    Eigen::LLT<Eigen::MatrixXd> prior(p.prior_cov);
    if (prior.info() != Eigen::Success) throw FactorizationError("prior covariance is not SPD");
    const double inv_var = 1.0 / (p.noise_sd * p.noise_sd);
    const Eigen::MatrixXd prior_prec = prior.solve(Eigen::MatrixXd::Identity(d, d));
    const Eigen::MatrixXd post_prec = prior_prec + inv_var * p.A.transpose() * p.A;
    Eigen::LLT<Eigen::MatrixXd> post(post_prec);
    MomentParams out;
    out.covariance = post.solve(Eigen::MatrixXd::Identity(d, d));
    out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
    out.mean = post.solve(prior_prec * p.prior_mean + inv_var * p.A.transpose() * p.data);
    return out;
}

Eigen::VectorXd GridPosterior::node(Eigen::Index flat_index) const {
    Eigen::VectorXd x(static_cast<Eigen::Index>(axes.size()));
    Eigen::Index rest = flat_index;
    for (std::size_t a = 0; a < axes.size(); ++a) {
        const Eigen::Index n = axes[a].size();
        x(static_cast<Eigen::Index>(a)) = axes[a](rest % n);
        rest /= n;
    }
    return x;
}

double GridPosterior::hpd_log_threshold(double mass) const {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(log_density.size()));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](Eigen::Index a, Eigen::Index b) { return log_density(a) > log_density(b); });
    double acc = 0.0;
    for (Eigen::Index idx : order) {
        acc += std::exp(log_density(idx)) * weights(idx);
        if (acc >= mass) return log_density(idx);
    }
    return log_density(order.back());
}

GridPosterior grid_posterior_moments(const Potential& phi, const GaussianParams& prior,
                                     std::span<const Interval> bounds, std::size_t grid_n,
                                     kernels::Execution exec) {
    const std::size_t d = prior.dim();
    if (d > 2) throw ContractError("grid_posterior_moments: unsupported dimension " + std::to_string(d));
    if (bounds.size() != d) throw ContractError("grid_posterior_moments: need one interval per dimension");
    if (grid_n < 3) throw ContractError("grid_posterior_moments: grid_n must be >= 3");

    GridPosterior out;
    const auto n = static_cast<Eigen::Index>(grid_n);
    std::vector<Eigen::VectorXd> axis_w;
    for (const auto& iv : bounds) {
        if (!(iv.hi > iv.lo)) throw ContractError("grid_posterior_moments: empty interval");
        out.axes.push_back(Eigen::VectorXd::LinSpaced(n, iv.lo, iv.hi));
        const double h = (iv.hi - iv.lo) / static_cast<double>(n - 1);
        Eigen::VectorXd w = Eigen::VectorXd::Constant(n, h);
        w(0) = w(n - 1) = 0.5 * h;
        axis_w.push_back(std::move(w));
    }
    Eigen::Index total = 1;
    for (std::size_t a = 0; a < d; ++a) total *= n;

    Eigen::MatrixXd nodes(static_cast<Eigen::Index>(d), total);
    out.weights.resize(total);
    for (Eigen::Index k = 0; k < total; ++k) {
        nodes.col(k) = out.node(k);
        double w = 1.0;
        Eigen::Index rest = k;
        for (std::size_t a = 0; a < d; ++a) {
            w *= axis_w[a](rest % n);
            rest /= n;
        }
        out.weights(k) = w;
    }

    const Eigen::VectorXd values = kernels::evaluate_potential(phi, nodes, exec);
    Eigen::VectorXd log_unnorm(total);
    for (Eigen::Index k = 0; k < total; ++k) log_unnorm(k) = -values(k) + logpdf(prior, nodes.col(k));

    const double shift = log_unnorm.maxCoeff();
    const Eigen::ArrayXd scaled = (log_unnorm.array() - shift).exp() * out.weights.array();
    const double z = scaled.sum();
    out.log_normalizer = shift + std::log(z);
    out.log_density = log_unnorm.array() - out.log_normalizer;

    const Eigen::VectorXd prob = scaled / z;
    out.moments.mean = nodes * prob;
    const Eigen::MatrixXd centered = nodes.colwise() - out.moments.mean;
    out.moments.covariance = centered * prob.asDiagonal() * centered.transpose();
    return out;
}

double posterior_log_density(const Potential& phi, const GaussianParams& prior, double log_normalizer,
                             const Eigen::VectorXd& point) {
    return -phi(point) + logpdf(prior, point) - log_normalizer;
}

std::vector<Interval> focus_box(const Potential& phi, const GaussianParams& prior,
                                std::span<const Interval> start, double half_width,
                                kernels::Execution exec) {
    const std::size_t d = prior.dim();
    if (start.size() != d) throw ContractError("focus_box: need one interval per dimension");
    constexpr Eigen::Index kNodes = 41;
    auto energy = [&](const Eigen::VectorXd& x) { return phi(x) - logpdf(prior, x); };

    std::vector<Interval> box(start.begin(), start.end());
    Eigen::VectorXd best(static_cast<Eigen::Index>(d));
    for (int level = 0; level < 12; ++level) {
        Eigen::Index total = 1;
        for (std::size_t a = 0; a < d; ++a) total *= kNodes;
        Eigen::MatrixXd nodes(static_cast<Eigen::Index>(d), total);
        for (Eigen::Index k = 0; k < total; ++k) {
            Eigen::Index rest = k;
            for (std::size_t a = 0; a < d; ++a) {
                const double frac = static_cast<double>(rest % kNodes) / static_cast<double>(kNodes - 1);
                nodes(static_cast<Eigen::Index>(a), k) = box[a].lo + frac * (box[a].hi - box[a].lo);
                rest /= kNodes;
            }
        }
        const Eigen::VectorXd phis = kernels::evaluate_potential(phi, nodes, exec);
        Eigen::Index arg = 0;
        double lowest = std::numeric_limits<double>::infinity();
        for (Eigen::Index k = 0; k < total; ++k) {
            const double e = phis(k) - logpdf(prior, nodes.col(k));
            if (e < lowest) {
                lowest = e;
                arg = k;
            }
        }
        best = nodes.col(arg);
        for (std::size_t a = 0; a < d; ++a) {
            const double cell = (box[a].hi - box[a].lo) / static_cast<double>(kNodes - 1);
            const auto c = best(static_cast<Eigen::Index>(a));
            box[a] = {c - 3.0 * cell, c + 3.0 * cell};
        }
    }

    // Finite-difference Hessian of the energy at the located mode.
    const double h = 1e-3 * (box[0].hi - box[0].lo) + 1e-7;
    const auto dd = static_cast<Eigen::Index>(d);
    Eigen::MatrixXd hess(dd, dd);
    const double e0 = energy(best);
    for (Eigen::Index i = 0; i < dd; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            double v;
            if (i == j) {
                Eigen::VectorXd p = best, m = best;
                p(i) += h;
                m(i) -= h;
                v = (energy(p) - 2.0 * e0 + energy(m)) / (h * h);
            } else {
                Eigen::VectorXd pp = best, pm = best, mp = best, mm = best;
                pp(i) += h; pp(j) += h;
                pm(i) += h; pm(j) -= h;
                mp(i) -= h; mp(j) += h;
                mm(i) -= h; mm(j) -= h;
                v = (energy(pp) - energy(pm) - energy(mp) + energy(mm)) / (4.0 * h * h);
            }
            hess(i, j) = hess(j, i) = v;
        }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(hess);
    if (llt.info() != Eigen::Success) {
        throw FactorizationError("focus_box: energy Hessian at the mode is not positive definite");
    }
    const Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(dd, dd));
    std::vector<Interval> out;
    for (Eigen::Index i = 0; i < dd; ++i) {
        const double sd = std::sqrt(cov(i, i));
        out.push_back({best(i) - half_width * sd, best(i) + half_width * sd});
    }
    return out;
}

Chain rwmh(const Potential& phi, const GaussianParams& prior, std::size_t n_steps, double step_sd,
           std::uint64_t seed) {
    if (n_steps < 1) throw ContractError("rwmh: n_steps must be >= 1");
    if (!(step_sd > 0.0)) throw ContractError("rwmh: step_sd must be positive");
    const auto d = static_cast<Eigen::Index>(prior.dim());
    StreamRng rng(seed);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    Chain chain;
    chain.states.resize(static_cast<Eigen::Index>(n_steps), d);
    Eigen::VectorXd x = prior.mean();
    double log_target = -phi(x) + logpdf(prior, x);
    std::size_t accepted = 0;
    Eigen::VectorXd proposal(d);
    for (std::size_t s = 0; s < n_steps; ++s) {
        for (Eigen::Index i = 0; i < d; ++i) proposal(i) = x(i) + step_sd * normal(rng);
        const double cand = -phi(proposal) + logpdf(prior, proposal);
        if (std::log(unit(rng)) < cand - log_target) {
            x = proposal;
            log_target = cand;
            ++accepted;
        }
        chain.states.row(static_cast<Eigen::Index>(s)) = x.transpose();
    }
    chain.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(n_steps);
    return chain;
}

MomentParams chain_moments(const Chain& chain, std::size_t burn_in) {
    const Eigen::Index n = chain.states.rows() - static_cast<Eigen::Index>(burn_in);
    if (n < 2) throw ContractError("chain_moments: not enough states after burn-in");
    const Eigen::MatrixXd kept = chain.states.bottomRows(n);
    MomentParams out;
    out.mean = kept.colwise().mean().transpose();
    const Eigen::MatrixXd c = kept.rowwise() - out.mean.transpose();
    out.covariance = c.transpose() * c / static_cast<double>(n - 1);
    return out;
}

}  // namespace hbayes::reference

#include "hbayes/mixture.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "hbayes/errors.hpp"
#include "hbayes/rng.hpp"

namespace hbayes {

namespace {

constexpr double kHalfPi = std::numbers::pi / 2.0;

double log_sum_exp(const Eigen::VectorXd& v) {
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((v.array() - m).exp().sum());
}

Eigen::VectorXd component_logpdfs(const MixtureParams& mix,
                                  const Eigen::Ref<const Eigen::VectorXd>& point) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(mix.size()));
    for (std::size_t i = 0; i < mix.size(); ++i) {
        out(static_cast<Eigen::Index>(i)) = logpdf(mix.components()[i], point);
    }
    return out;
}

}  // namespace

MixtureParams::MixtureParams(std::vector<GaussianParams> components, Eigen::VectorXd lambdas)
    : components_(std::move(components)), lambdas_(std::move(lambdas)) {
    if (components_.empty()) throw ContractError("mixture: at least one component is required");
    const std::size_t d = components_.front().dim();
    for (const auto& c : components_) {
        if (c.dim() != d) throw ContractError("mixture: components must share one dimension");
    }
    if (static_cast<std::size_t>(lambdas_.size()) != components_.size() - 1) {
        throw ContractError("mixture: expected " + std::to_string(components_.size() - 1) +
                            " weight parameters, got " + std::to_string(lambdas_.size()));
    }
    if (!lambdas_.allFinite()) throw ContractError("mixture: weight parameters must be finite");
    const auto m = static_cast<Eigen::Index>(components_.size());
    numerators_.resize(m);
    for (Eigen::Index i = 0; i + 1 < m; ++i) numerators_(i) = kHalfPi + std::atan(lambdas_(i));
    numerators_(m - 1) = kHalfPi;
    log_weights_ = numerators_.array().log() - std::log(numerators_.sum());
}

MixtureParams MixtureParams::from_flat(std::size_t components, std::size_t d,
                                       std::span<const double> flat) {
    const std::size_t block = d + vech_size(d);
    if (components < 1 || flat.size() != components * block + components - 1) {
        throw ContractError("mixture: flat vector length does not match layout");
    }
    std::vector<GaussianParams> comps;
    comps.reserve(components);
    for (std::size_t i = 0; i < components; ++i) {
        comps.push_back(GaussianParams::from_flat(d, flat.subspan(i * block, block)));
    }
    const auto tail = flat.subspan(components * block);
    Eigen::VectorXd lambdas = Eigen::Map<const Eigen::VectorXd>(tail.data(),
                                                                static_cast<Eigen::Index>(tail.size()));
    return MixtureParams(std::move(comps), std::move(lambdas));
}

bool MixtureParams::admissible(std::size_t components, std::size_t d, std::span<const double> flat) {
    const std::size_t block = d + vech_size(d);
    if (components < 1 || flat.size() != components * block + components - 1) return false;
    for (std::size_t i = 0; i < components; ++i) {
        if (!GaussianParams::admissible(d, flat.subspan(i * block, block))) return false;
    }
    for (double v : flat.subspan(components * block)) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Eigen::VectorXd MixtureParams::flat() const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index k = 0;
    for (const auto& c : components_) {
        const Eigen::VectorXd f = c.flat();
        out.segment(k, f.size()) = f;
        k += f.size();
    }
    out.tail(lambdas_.size()) = lambdas_;
    return out;
}

Eigen::VectorXd weights(const MixtureParams& mix) {
    return mix.weight_numerators() / mix.weight_numerators().sum();
}

double mix_logpdf(const MixtureParams& mix, const Eigen::Ref<const Eigen::VectorXd>& point) {
    if (mix.size() == 1) return logpdf(mix.components().front(), point);
    return log_sum_exp(mix.log_weights() + component_logpdfs(mix, point));
}

Eigen::VectorXd responsibilities(const MixtureParams& mix,
                                 const Eigen::Ref<const Eigen::VectorXd>& point) {
    const Eigen::VectorXd joint = mix.log_weights() + component_logpdfs(mix, point);
    const double log_g = log_sum_exp(joint);
    return (joint.array() - log_g).exp();
}

void mix_score_into(const MixtureParams& mix, const Eigen::Ref<const Eigen::VectorXd>& point,
                    Eigen::Ref<Eigen::VectorXd> out) {
    const auto m = static_cast<Eigen::Index>(mix.size());
    const Eigen::VectorXd log_q = component_logpdfs(mix, point);
    const Eigen::VectorXd joint = mix.log_weights() + log_q;
    const double log_g = log_sum_exp(joint);
    const Eigen::Index block = static_cast<Eigen::Index>(mix.components().front().parameter_count());
    for (Eigen::Index i = 0; i < m; ++i) {
        auto seg = out.segment(i * block, block);
        score_into(mix.components()[static_cast<std::size_t>(i)], point, seg);
        seg *= std::exp(joint(i) - log_g);
    }
    const double total = mix.weight_numerators().sum();
    for (Eigen::Index i = 0; i + 1 < m; ++i) {
        const double lam = mix.lambdas()(i);
        const double ratio = std::exp(log_q(i) - log_g);  // q_i / g
        out(m * block + i) = (ratio - 1.0) / ((1.0 + lam * lam) * total);
    }
}

Eigen::VectorXd mix_score(const MixtureParams& mix, const Eigen::Ref<const Eigen::VectorXd>& point) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(mix.parameter_count()));
    mix_score_into(mix, point, out);
    return out;
}

void mix_sample_one(const MixtureParams& mix, std::uint64_t stream_seed,
                    Eigen::Ref<Eigen::VectorXd> out) {
    StreamRng rng(stream_seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double u = unit(rng) * mix.weight_numerators().sum();
    std::size_t pick = mix.size() - 1;
    double acc = 0.0;
    for (std::size_t i = 0; i < mix.size(); ++i) {
        acc += mix.weight_numerators()(static_cast<Eigen::Index>(i));
        if (u < acc) {
            pick = i;
            break;
        }
    }
    sample_one(mix.components()[pick], rng(), out);
}

Eigen::MatrixXd mix_sample(const MixtureParams& mix, std::size_t count, std::uint64_t seed) {
    if (count < 1) throw ContractError("mixture sample: count must be >= 1");
    const auto n = static_cast<Eigen::Index>(count);
    const auto d = static_cast<Eigen::Index>(mix.dim());
    Eigen::MatrixXd out(n, d);
    Eigen::VectorXd row(d);
    for (Eigen::Index k = 0; k < n; ++k) {
        mix_sample_one(mix, derive_seed(seed, static_cast<std::uint64_t>(k)), row);
        out.row(k) = row.transpose();
    }
    return out;
}

}  // namespace hbayes

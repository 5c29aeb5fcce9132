#include "hbayes/density.hpp"

#include <cmath>
#include <span>

#include "hbayes/errors.hpp"

namespace hbayes {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::span<const double> as_span(const Eigen::Ref<const Eigen::VectorXd>& v) {
    return {v.data(), static_cast<std::size_t>(v.size())};
}

std::size_t checked_count(double v, const char* what) {
    if (!(v >= 1.0) || v != std::floor(v) || v > 1e6) {
        throw ContractError(std::string("density record: invalid ") + what);
    }
    return static_cast<std::size_t>(v);
}

}  // namespace

std::size_t dim(const Density& g) {
    return std::visit([](const auto& p) { return p.dim(); }, g);
}

std::size_t parameter_count(const Density& g) {
    return std::visit([](const auto& p) { return p.parameter_count(); }, g);
}

Eigen::VectorXd flat(const Density& g) {
    return std::visit([](const auto& p) { return p.flat(); }, g);
}

std::optional<Density> with_flat(const Density& like, const Eigen::Ref<const Eigen::VectorXd>& v) {
    return std::visit(
        overloaded{
            [&](const GaussianParams& p) -> std::optional<Density> {
                if (!GaussianParams::admissible(p.dim(), as_span(v))) return std::nullopt;
                return GaussianParams::from_flat(p.dim(), as_span(v));
            },
            [&](const MixtureParams& p) -> std::optional<Density> {
                if (!MixtureParams::admissible(p.size(), p.dim(), as_span(v))) return std::nullopt;
                return MixtureParams::from_flat(p.size(), p.dim(), as_span(v));
            },
        },
        like);
}

double log_density(const Density& g, const Eigen::Ref<const Eigen::VectorXd>& point) {
    return std::visit(overloaded{
                          [&](const GaussianParams& p) { return logpdf(p, point); },
                          [&](const MixtureParams& p) { return mix_logpdf(p, point); },
                      },
                      g);
}

void score_into(const Density& g, const Eigen::Ref<const Eigen::VectorXd>& point,
                Eigen::Ref<Eigen::VectorXd> out) {
    std::visit(overloaded{
                   [&](const GaussianParams& p) { score_into(p, point, out); },
                   [&](const MixtureParams& p) { mix_score_into(p, point, out); },
               },
               g);
}

void sample_one(const Density& g, std::uint64_t stream_seed, Eigen::Ref<Eigen::VectorXd> out) {
    std::visit(overloaded{
                   [&](const GaussianParams& p) { sample_one(p, stream_seed, out); },
                   [&](const MixtureParams& p) { mix_sample_one(p, stream_seed, out); },
               },
               g);
}

MomentParams moments(const Density& g) {
    return std::visit(
        overloaded{
            [](const GaussianParams& p) { return param_to_moment(p); },
            [](const MixtureParams& p) {
                const Eigen::VectorXd w = weights(p);
                const auto d = static_cast<Eigen::Index>(p.dim());
                MomentParams out{Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Zero(d, d)};
                std::vector<MomentParams> parts;
                for (const auto& c : p.components()) parts.push_back(param_to_moment(c));
                for (std::size_t i = 0; i < parts.size(); ++i) {
                    out.mean += w(static_cast<Eigen::Index>(i)) * parts[i].mean;
                }
                for (std::size_t i = 0; i < parts.size(); ++i) {
                    const Eigen::VectorXd c = parts[i].mean - out.mean;
                    out.covariance += w(static_cast<Eigen::Index>(i)) *
                                      (parts[i].covariance + c * c.transpose());
                }
                return out;
            },
        },
        g);
}

Eigen::VectorXd serialize(const Density& g) {
    return std::visit(
        overloaded{
            [](const GaussianParams& p) {
                Eigen::VectorXd out(static_cast<Eigen::Index>(1 + p.parameter_count()));
                out << static_cast<double>(p.dim()), p.flat();
                return out;
            },
            [](const MixtureParams& p) {
                const Eigen::Index block = static_cast<Eigen::Index>(1 + p.components()[0].parameter_count());
                const auto m = static_cast<Eigen::Index>(p.size());
                Eigen::VectorXd out(2 + (m - 1) + m * block);
                out(0) = static_cast<double>(m);
                out(1) = static_cast<double>(p.dim());
                out.segment(2, m - 1) = p.lambdas();
                Eigen::Index k = 2 + m - 1;
                for (const auto& c : p.components()) {
                    out.segment(k, block) = serialize(Density{c});
                    k += block;
                }
                return out;
            },
        },
        g);
}

Density deserialize(DensityKind kind, std::span<const double> record) {
    auto gaussian = [](std::span<const double> rec) {
        if (rec.empty()) throw ContractError("density record: empty");
        const std::size_t d = checked_count(rec[0], "dimension");
        if (rec.size() != 1 + d + vech_size(d)) {
            throw ContractError("density record: Gaussian record has wrong length");
        }
        return GaussianParams::from_flat(d, rec.subspan(1));
    };
    if (kind == DensityKind::gaussian) return gaussian(record);

    if (record.size() < 2) throw ContractError("density record: mixture header missing");
    const std::size_t m = checked_count(record[0], "component count");
    const std::size_t d = checked_count(record[1], "dimension");
    const std::size_t block = 1 + d + vech_size(d);
    if (record.size() != 2 + (m - 1) + m * block) {
        throw ContractError("density record: mixture record has wrong length");
    }
    std::vector<GaussianParams> comps;
    for (std::size_t i = 0; i < m; ++i) {
        comps.push_back(gaussian(record.subspan(2 + (m - 1) + i * block, block)));
    }
    Eigen::VectorXd lambdas(static_cast<Eigen::Index>(m - 1));
    for (std::size_t i = 0; i + 1 < m; ++i) lambdas(static_cast<Eigen::Index>(i)) = record[2 + i];
    return MixtureParams(std::move(comps), std::move(lambdas));
}

DensityKind kind_of(const Density& g) {
    return std::holds_alternative<GaussianParams>(g) ? DensityKind::gaussian : DensityKind::mixture;
}

std::vector<std::string> serialized_names(const Density& g) {
    auto gaussian_names = [](const GaussianParams& p, const std::string& prefix) {
        std::vector<std::string> names{prefix + "d"};
        for (std::size_t i = 0; i < p.dim(); ++i) names.push_back(prefix + "mean" + std::to_string(i));
        for (std::size_t i = 0; i < p.dim(); ++i) {
            for (std::size_t j = 0; j <= i; ++j) {
                names.push_back(prefix + "R" + std::to_string(i) + std::to_string(j));
            }
        }
        return names;
    };
    return std::visit(overloaded{
                          [&](const GaussianParams& p) { return gaussian_names(p, ""); },
                          [&](const MixtureParams& p) {
                              std::vector<std::string> names{"M", "d"};
                              for (std::size_t i = 0; i + 1 < p.size(); ++i) {
                                  names.push_back("lambda" + std::to_string(i));
                              }
                              for (std::size_t c = 0; c < p.size(); ++c) {
                                  auto part = gaussian_names(p.components()[c], "c" + std::to_string(c) + "_");
                                  names.insert(names.end(), part.begin(), part.end());
                              }
                              return names;
                          },
                      },
                      g);
}

}  // namespace hbayes

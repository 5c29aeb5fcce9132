#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "hbayes/gaussian.hpp"
#include "hbayes/mixture.hpp"

namespace hbayes {

/// The approximating family visited by the flow: a single Gaussian or a
/// Gaussian mixture. Both expose the same flat-vector view.
using Density = std::variant<GaussianParams, MixtureParams>;

std::size_t dim(const Density& g);
std::size_t parameter_count(const Density& g);
Eigen::VectorXd flat(const Density& g);

/// Rebuild a density with the same shape as `like` from a flat vector.
/// Returns nullopt when the vector violates the family invariants.
std::optional<Density> with_flat(const Density& like, const Eigen::Ref<const Eigen::VectorXd>& flat);

double log_density(const Density& g, const Eigen::Ref<const Eigen::VectorXd>& point);
void score_into(const Density& g, const Eigen::Ref<const Eigen::VectorXd>& point,
                Eigen::Ref<Eigen::VectorXd> out);
void sample_one(const Density& g, std::uint64_t stream_seed, Eigen::Ref<Eigen::VectorXd> out);

/// Mean and covariance of the density (mixture moments are combined).
MomentParams moments(const Density& g);

/// Flat serialization record: [d, mean..., chol_vech...] for a Gaussian,
/// [M, d, lambda..., component records...] for a mixture.
enum class DensityKind { gaussian, mixture };
DensityKind kind_of(const Density& g);

Eigen::VectorXd serialize(const Density& g);
Density deserialize(DensityKind kind, std::span<const double> record);
/// Column names matching serialize().
std::vector<std::string> serialized_names(const Density& g);

}  // namespace hbayes

#pragma once

#include <functional>
#include <string>

#include <Eigen/Dense>

namespace hbayes {

/// Negative log-likelihood (or any potential) evaluated at an unknown vector.
/// Must be safe to call concurrently.
using Potential = std::function<double(const Eigen::VectorXd&)>;

/// Maps an unknown vector to predicted data. evaluate() must be const and
/// thread-safe: the flow calls it concurrently for different samples.
class ForwardModel {
public:
    virtual ~ForwardModel() = default;

    virtual std::size_t input_dim() const = 0;
    virtual std::size_t output_dim() const = 0;
    virtual Eigen::VectorXd evaluate(const Eigen::VectorXd& unknown) const = 0;
    virtual std::string name() const = 0;
};

/// y = A x.
class LinearModel final : public ForwardModel {
public:
    explicit LinearModel(Eigen::MatrixXd A) : A_(std::move(A)) {}

    std::size_t input_dim() const override { return static_cast<std::size_t>(A_.cols()); }
    std::size_t output_dim() const override { return static_cast<std::size_t>(A_.rows()); }
    Eigen::VectorXd evaluate(const Eigen::VectorXd& unknown) const override;
    std::string name() const override { return "linear"; }

    const Eigen::MatrixXd& matrix() const noexcept { return A_; }

private:
    Eigen::MatrixXd A_;
};

/// Model with no observations; its likelihood is constant, so Phi == 0.
class NullModel final : public ForwardModel {
public:
    explicit NullModel(std::size_t input_dim) : input_dim_(input_dim) {}

    std::size_t input_dim() const override { return input_dim_; }
    std::size_t output_dim() const override { return 0; }
    Eigen::VectorXd evaluate(const Eigen::VectorXd& unknown) const override;
    std::string name() const override { return "null"; }

private:
    std::size_t input_dim_;
};

}  // namespace hbayes

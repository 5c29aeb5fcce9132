#include "hbayes/forward_model.hpp"

#include <string>

#include "hbayes/errors.hpp"

namespace hbayes {

Eigen::VectorXd LinearModel::evaluate(const Eigen::VectorXd& unknown) const {
    if (unknown.size() != A_.cols()) {
        throw ContractError("linear model: input has length " + std::to_string(unknown.size()) +
                            ", expected " + std::to_string(A_.cols()));
    }
    return A_ * unknown;
}

Eigen::VectorXd NullModel::evaluate(const Eigen::VectorXd& unknown) const {
    if (static_cast<std::size_t>(unknown.size()) != input_dim_) {
        throw ContractError("null model: input has wrong length");
    }
    return Eigen::VectorXd(0);
}

}  // namespace hbayes

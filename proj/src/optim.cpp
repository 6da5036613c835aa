#include "raftlab/optim.hpp"

#include <cmath>

#include "raftlab/error.hpp"

namespace raftlab {

void Optimizer::step(std::span<Tensor* const> params, std::span<const Tensor> grads, double lr) {
    require(params.size() == grads.size(), ErrorKind::Dimension,
            "optimizer got " + std::to_string(params.size()) + " parameters and " +
                std::to_string(grads.size()) + " gradients");
    for (std::size_t i = 0; i < params.size(); ++i) {
        require(params[i]->same_shape(grads[i]), ErrorKind::Dimension,
                "optimizer: parameter " + std::to_string(i) + " has shape " +
                    shape_string(params[i]->shape()) + " but gradient " +
                    shape_string(grads[i].shape()));
    }
    ++steps_;

    if (kind_ == OptimizerKind::Sgd) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto p = params[i]->values();
            auto g = grads[i].values();
            for (std::size_t j = 0; j < p.size(); ++j) {
                p[j] -= lr * g[j];
            }
        }
        return;
    }

    if (first_moment_.empty()) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            first_moment_.emplace_back(params[i]->shape());
            second_moment_.emplace_back(params[i]->shape());
        }
    }
    require(first_moment_.size() == params.size(), ErrorKind::Dimension,
            "optimizer parameter list changed between steps");

    const double b1 = constants_.beta1;
    const double b2 = constants_.beta2;
    const double t = static_cast<double>(steps_);
    const double correction1 = 1.0 - std::pow(b1, t);
    const double correction2 = 1.0 - std::pow(b2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        require(first_moment_[i].same_shape(*params[i]), ErrorKind::Dimension,
                "optimizer parameter shape changed between steps");
        auto p = params[i]->values();
        auto g = grads[i].values();
        auto m = first_moment_[i].values();
        auto v = second_moment_[i].values();
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            const double m_hat = m[j] / correction1;
            const double v_hat = v[j] / correction2;
            p[j] -= lr * m_hat / (std::sqrt(v_hat) + constants_.epsilon);
        }
    }
}

}  // namespace raftlab

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "raftlab/tensor.hpp"

namespace raftlab {

enum class OptimizerKind { Sgd, Adam };

struct AdamConstants {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Stateful first-order optimizer over a fixed, ordered parameter list.
/// Adam moments are keyed by position, so callers must pass parameters in
/// the same order on every step.
class Optimizer {
public:
    explicit Optimizer(OptimizerKind kind, AdamConstants constants = {})
        : kind_(kind), constants_(constants) {}

    void step(std::span<Tensor* const> params, std::span<const Tensor> grads, double lr);

    OptimizerKind kind() const noexcept { return kind_; }
    std::size_t steps_taken() const noexcept { return steps_; }

private:
    OptimizerKind kind_;
    AdamConstants constants_;
    std::size_t steps_ = 0;
    std::vector<Tensor> first_moment_;
    std::vector<Tensor> second_moment_;
};

}  // namespace raftlab

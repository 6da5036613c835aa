#pragma once

// Define-by-run reverse-mode differentiation over Tensor values.
//
// A Tape is rebuilt for every forward pass. Ops append records in execution
// order, so the record list is already topologically sorted and backward()
// is a single reverse sweep.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "raftlab/tensor.hpp"

namespace raftlab {

using NodeId = std::size_t;

enum class OpKind {
    Variable,
    Constant,
    MatMul,
    AddBias,
    Add,
    Sub,
    Mul,
    Div,
    Scale,
    Relu,
    Exp,
    Log,
    L2Normalize,
    L2NormalizeFrozenNorm,
    SquaredDistance,
    RowDot,
    ScaleRows,
    Sum,
    BatchMean,
    PairwiseSqDist,
    OffDiagMean,
    StopGradient,
    TangentialGrad,
    SoftmaxCrossEntropy,
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;
    Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    NodeId id() const noexcept { return id_; }
    Tape& tape() const noexcept { return *tape_; }
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    Tape* tape_ = nullptr;
    NodeId id_ = 0;
};

/// Gradient of the loss with respect to every node. Nodes that the loss does
/// not reach, constants, and stop-gradient outputs report zeros.
class Gradients {
public:
    Gradients() = default;
    Gradients(const Tape* tape, std::vector<std::optional<Tensor>> grads)
        : tape_(tape), grads_(std::move(grads)) {}

    Tensor wrt(const Var& v) const;
    bool reached(const Var& v) const { return v.id() < grads_.size() && grads_[v.id()].has_value(); }

private:
    const Tape* tape_ = nullptr;
    std::vector<std::optional<Tensor>> grads_;
};

/// Backward rule: given the output gradient, accumulate into `input_grads`
/// (pre-sized zeros, one per input in record order).
using BackwardFn =
    std::function<void(const Tape& tape, const Tensor& out_grad, std::span<Tensor> input_grads)>;

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var variable(Tensor value);
    Var constant(Tensor value);
    Var record(OpKind kind, Tensor value, std::vector<Var> inputs, BackwardFn backward);

    /// Reverse sweep from a rank-0 loss. Does not mutate the tape, so
    /// repeated calls produce identical results.
    Gradients backward(const Var& loss) const;

    std::size_t size() const noexcept { return nodes_.size(); }
    const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
    bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
    OpKind kind(NodeId id) const { return nodes_.at(id).kind; }
    std::span<const NodeId> inputs(NodeId id) const { return nodes_.at(id).inputs; }

private:
    struct Node {
        OpKind kind;
        Tensor value;
        std::vector<NodeId> inputs;
        BackwardFn backward;
        bool requires_grad;
    };
    std::vector<Node> nodes_;
};

// --- primitives -----------------------------------------------------------

Var matmul(const Var& a, const Var& b);
/// x[b x n] + bias[n] broadcast over rows.
Var add_bias(const Var& x, const Var& bias);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var relu(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);

inline constexpr double kNormEpsilon = 1e-12;

/// Row-wise unit normalization with the full Jacobian (I - zz^T)/|a|.
Var l2_normalize(const Var& a);
/// Same forward value; backward treats the row norm as a constant (g/|a|),
/// so radial gradient components pass through.
Var l2_normalize_frozen_norm(const Var& a);

/// Row-wise |a - b|^2, shape [batch].
Var squared_distance(const Var& a, const Var& b);
/// Row-wise <a, b>, shape [batch].
Var row_dot(const Var& a, const Var& b);
/// a[b x d] * s[b] per row.
Var scale_rows(const Var& a, const Var& s);
Var sum(const Var& a);
/// Mean of a rank-1 tensor.
Var batch_mean(const Var& a);
/// D[i][j] = |z_i - z_j|^2, shape [b x b].
Var pairwise_squared_distance(const Var& z);
/// Mean over i != j of a square matrix.
Var offdiag_mean(const Var& m);
Var stop_gradient(const Var& a);

inline constexpr double kUnitNormTolerance = 1e-9;

/// Forward identity on unit rows z; backward replaces each row gradient g by
/// its tangential part g - <g, z> z.
Var tangential_grad(const Var& z);

/// Mean cross-entropy of softmax(logits) against integer labels.
Var softmax_cross_entropy(const Var& logits, std::span<const int> labels);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

// --- untaped helpers ------------------------------------------------------

/// Row-wise g - <g, z> z. Rows of z must be unit-norm within 1e-9.
Tensor tangential_filter(const Tensor& g, const Tensor& z);

/// One bit per ReLU input element (positive or not), concatenated in tape
/// order. Two forward passes with equal signatures are on the same linear
/// piece of the network.
std::vector<bool> relu_pattern(const Tape& tape);

}  // namespace raftlab

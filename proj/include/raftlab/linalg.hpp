#pragma once

#include <cstddef>

#include "raftlab/tensor.hpp"

namespace raftlab {

/// Rank by Gaussian elimination with partial pivoting. A column is skipped
/// when its best pivot is at most rel_tol times the largest |entry| of m.
std::size_t numerical_rank(Tensor m, double rel_tol);

/// Gauss-Jordan inverse with partial pivoting. Throws SingularMoment when
/// the 1-norm condition estimate exceeds 1 / rel_tol.
Tensor invert(const Tensor& m, double rel_tol);

/// Kronecker product a (x) b.
Tensor kron(const Tensor& a, const Tensor& b);

/// Column-major vectorization (stacks columns).
Tensor vec(const Tensor& m);

double one_norm(const Tensor& m);

}  // namespace raftlab

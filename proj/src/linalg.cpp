#include "raftlab/linalg.hpp"

#include <cmath>
#include <utility>

#include "raftlab/error.hpp"

namespace raftlab {

std::size_t numerical_rank(Tensor m, double rel_tol) {
    require(m.rank() == 2, ErrorKind::Dimension, "rank needs a matrix");
    const std::size_t rows = m.shape()[0];
    const std::size_t cols = m.shape()[1];
    const double threshold = rel_tol * m.max_abs();
    if (m.max_abs() == 0.0) {
        return 0;
    }
    std::size_t rank = 0;
    for (std::size_t col = 0; col < cols && rank < rows; ++col) {
        std::size_t pivot = rank;
        for (std::size_t r = rank + 1; r < rows; ++r) {
            if (std::abs(m.at(r, col)) > std::abs(m.at(pivot, col))) {
                pivot = r;
            }
        }
        if (std::abs(m.at(pivot, col)) <= threshold) {
            continue;
        }
        if (pivot != rank) {
            for (std::size_t c = 0; c < cols; ++c) {
                std::swap(m.at(pivot, c), m.at(rank, c));
            }
        }
        const double p = m.at(rank, col);
        for (std::size_t r = rank + 1; r < rows; ++r) {
            const double f = m.at(r, col) / p;
            if (f == 0.0) {
                continue;
            }
            for (std::size_t c = col; c < cols; ++c) {
                m.at(r, c) -= f * m.at(rank, c);
            }
        }
        ++rank;
    }
    return rank;
}

double one_norm(const Tensor& m) {
    double best = 0.0;
    for (std::size_t c = 0; c < m.cols(); ++c) {
        double s = 0.0;
        for (std::size_t r = 0; r < m.rows(); ++r) {
            s += std::abs(m.at(r, c));
        }
        best = std::max(best, s);
    }
    return best;
}

Tensor invert(const Tensor& m, double rel_tol) {
    require(m.rank() == 2 && m.shape()[0] == m.shape()[1], ErrorKind::Dimension,
            "invert needs a square matrix, got " + shape_string(m.shape()));
    const std::size_t n = m.shape()[0];
    Tensor a = m;
    Tensor inv = Tensor::identity(n);
    const double scale = m.max_abs();
    require(scale > 0.0, ErrorKind::SingularMoment, "matrix is zero");
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::abs(a.at(r, col)) > std::abs(a.at(pivot, col))) {
                pivot = r;
            }
        }
        require(std::abs(a.at(pivot, col)) > rel_tol * scale, ErrorKind::SingularMoment,
                "matrix is numerically singular at column " + std::to_string(col));
        if (pivot != col) {
            for (std::size_t c = 0; c < n; ++c) {
                std::swap(a.at(pivot, c), a.at(col, c));
                std::swap(inv.at(pivot, c), inv.at(col, c));
            }
        }
        const double p = a.at(col, col);
        for (std::size_t c = 0; c < n; ++c) {
            a.at(col, c) /= p;
            inv.at(col, c) /= p;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) {
                continue;
            }
            const double f = a.at(r, col);
            if (f == 0.0) {
                continue;
            }
            for (std::size_t c = 0; c < n; ++c) {
                a.at(r, c) -= f * a.at(col, c);
                inv.at(r, c) -= f * inv.at(col, c);
            }
        }
    }
    const double condition = one_norm(m) * one_norm(inv);
    require(condition * rel_tol < 1.0, ErrorKind::SingularMoment,
            "condition estimate " + std::to_string(condition) + " exceeds 1/pivot_tol");
    return inv;
}

Tensor kron(const Tensor& a, const Tensor& b) {
    require(a.rank() == 2 && b.rank() == 2, ErrorKind::Dimension, "kron needs matrices");
    const std::size_t ar = a.shape()[0], ac = a.shape()[1];
    const std::size_t br = b.shape()[0], bc = b.shape()[1];
    Tensor out(Shape{ar * br, ac * bc});
    for (std::size_t i = 0; i < ar; ++i) {
        for (std::size_t j = 0; j < ac; ++j) {
            const double s = a.at(i, j);
            for (std::size_t k = 0; k < br; ++k) {
                for (std::size_t l = 0; l < bc; ++l) {
                    out.at(i * br + k, j * bc + l) = s * b.at(k, l);
                }
            }
        }
    }
    return out;
}

Tensor vec(const Tensor& m) {
    require(m.rank() == 2, ErrorKind::Dimension, "vec needs a matrix");
    Tensor out(Shape{m.size()});
    std::size_t k = 0;
    for (std::size_t c = 0; c < m.shape()[1]; ++c) {
        for (std::size_t r = 0; r < m.shape()[0]; ++r) {
            out[k++] = m.at(r, c);
        }
    }
    return out;
}

}  // namespace raftlab

#include "raftlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "raftlab/error.hpp"

namespace raftlab {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Dimension: return "dimension error";
        case ErrorKind::DegenerateRepresentation: return "degenerate-representation error";
        case ErrorKind::EmptyBatch: return "empty-batch error";
        case ErrorKind::InsufficientBatch: return "insufficient-batch error";
        case ErrorKind::Domain: return "domain error";
        case ErrorKind::Precondition: return "precondition error";
        case ErrorKind::Contract: return "contract error";
        case ErrorKind::Config: return "config error";
        case ErrorKind::Spec: return "spec error";
        case ErrorKind::Schedule: return "schedule error";
        case ErrorKind::Batch: return "batch error";
        case ErrorKind::Format: return "format error";
        case ErrorKind::Io: return "I/O error";
        case ErrorKind::SingularMoment: return "singular-moment error";
        case ErrorKind::NearOrthogonal: return "near-orthogonal-degeneracy error";
        case ErrorKind::NonFiniteLoss: return "non-finite loss";
        case ErrorKind::Eval: return "eval error";
    }
    return "error";
}

std::size_t shape_size(const Shape& shape) noexcept {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) {
            out += "x";
        }
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), values_(shape_size(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
    require(values_.size() == shape_size(shape_), ErrorKind::Dimension,
            "value count " + std::to_string(values_.size()) + " does not match shape " +
                shape_string(shape_));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor(Shape{rows, cols}, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor out(Shape{n, n});
    for (std::size_t i = 0; i < n; ++i) {
        out.at(i, i) = 1.0;
    }
    return out;
}

double Tensor::item() const {
    require(values_.size() == 1, ErrorKind::Contract,
            "item() on tensor of shape " + shape_string(shape_));
    return values_[0];
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double Tensor::max_abs() const noexcept {
    double m = 0.0;
    for (double v : values_) {
        m = std::max(m, std::abs(v));
    }
    return m;
}

Tensor operator-(const Tensor& a) {
    Tensor out = a;
    for (double& v : out.values()) {
        v = -v;
    }
    return out;
}

Tensor transpose(const Tensor& m) {
    require(m.rank() == 2, ErrorKind::Dimension, "transpose needs a matrix");
    Tensor out(Shape{m.shape()[1], m.shape()[0]});
    for (std::size_t i = 0; i < m.shape()[0]; ++i) {
        for (std::size_t j = 0; j < m.shape()[1]; ++j) {
            out.at(j, i) = m.at(i, j);
        }
    }
    return out;
}

Tensor matmul_values(const Tensor& a, const Tensor& b) {
    require(a.rank() == 2 && b.rank() == 2 && a.shape()[1] == b.shape()[0], ErrorKind::Dimension,
            "matmul of " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
    const std::size_t m = a.shape()[0];
    const std::size_t k = a.shape()[1];
    const std::size_t n = b.shape()[1];
    Tensor out(Shape{m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a.at(i, p);
            if (aip == 0.0) {
                continue;
            }
            const double* brow = b.values().data() + p * n;
            double* orow = out.values().data() + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                orow[j] += aip * brow[j];
            }
        }
    }
    return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), ErrorKind::Dimension, "max_abs_diff shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

}  // namespace raftlab

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace raftlab {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles. Rank 0 is a scalar.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double value);
    static Tensor vector(std::vector<double> values);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
    static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape()); }
    static Tensor identity(std::size_t n);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    /// Leading extent (batch rows); 1 for a scalar.
    std::size_t rows() const noexcept { return shape_.empty() ? 1 : shape_[0]; }
    /// Product of the trailing extents; 1 for vectors and scalars.
    std::size_t cols() const noexcept { return shape_.size() < 2 ? 1 : size() / rows(); }

    std::span<const double> values() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_; }
    const std::vector<double>& data() const noexcept { return values_; }

    double operator[](std::size_t i) const noexcept { return values_[i]; }
    double& operator[](std::size_t i) noexcept { return values_[i]; }

    double at(std::size_t r, std::size_t c) const noexcept { return values_[r * cols() + c]; }
    double& at(std::size_t r, std::size_t c) noexcept { return values_[r * cols() + c]; }

    std::span<const double> row(std::size_t r) const noexcept {
        return std::span<const double>(values_).subspan(r * cols(), cols());
    }
    std::span<double> row(std::size_t r) noexcept {
        return std::span<double>(values_).subspan(r * cols(), cols());
    }

    double item() const;

    bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }
    bool all_finite() const noexcept;
    double max_abs() const noexcept;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<double> values_;
};

Tensor operator-(const Tensor& a);
Tensor transpose(const Tensor& m);
/// Plain (untaped) matrix product.
Tensor matmul_values(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace raftlab

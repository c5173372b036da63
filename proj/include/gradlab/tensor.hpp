#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gradlab {

/// Thrown when tensor shapes do not line up for an operation.
class ShapeError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Dense row-major n-dimensional array of doubles.
///
/// Tensor is the only numeric carrier in gradlab: images, parameters,
/// logits and gradients all live in one. It is a plain value type; copies
/// are deep.
class Tensor {
  public:
    using Shape = std::vector<std::size_t>;

    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor from(std::initializer_list<double> values);

    [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
    [[nodiscard]] std::size_t rank() const noexcept { return shape_.size(); }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }
    [[nodiscard]] std::size_t dim(std::size_t axis) const;

    [[nodiscard]] std::span<double> values() noexcept { return data_; }
    [[nodiscard]] std::span<const double> values() const noexcept { return data_; }
    [[nodiscard]] const std::vector<double>& data() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    double& at(std::size_t i, std::size_t j);
    [[nodiscard]] double at(std::size_t i, std::size_t j) const;
    double& at(std::size_t i, std::size_t j, std::size_t k);
    [[nodiscard]] double at(std::size_t i, std::size_t j, std::size_t k) const;

    /// Number of elements in one slice along the leading axis.
    [[nodiscard]] std::size_t row_size() const;
    [[nodiscard]] std::span<double> row(std::size_t i);
    [[nodiscard]] std::span<const double> row(std::size_t i) const;

    /// Copy of slice i along the leading axis, with the leading axis dropped.
    [[nodiscard]] Tensor slice(std::size_t i) const;

    [[nodiscard]] Tensor reshaped(Shape shape) const;
    [[nodiscard]] bool all_finite() const noexcept;

    Tensor& operator+=(const Tensor& other);
    Tensor& operator-=(const Tensor& other);
    Tensor& operator*=(double scale) noexcept;

    friend bool operator==(const Tensor&, const Tensor&) = default;

  private:
    Shape shape_;
    std::vector<double> data_;
};

[[nodiscard]] std::size_t shape_size(const Tensor::Shape& shape);
[[nodiscard]] std::string to_string(const Tensor::Shape& shape);
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

/// Stacks equally shaped tensors along a new leading axis.
[[nodiscard]] Tensor stack(std::span<const Tensor> parts);

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(double scale, Tensor t);

}  // namespace gradlab

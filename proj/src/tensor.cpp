#include "gradlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace gradlab {

std::size_t shape_size(const Tensor::Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

std::string to_string(const Tensor::Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        out << (i ? "x" : "") << shape[i];
    }
    out << ']';
    return out.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
    }
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
    for (auto d : shape_) {
        if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape_));
    }
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size()) {
        throw ShapeError("tensor shape " + to_string(shape_) + " does not hold " +
                         std::to_string(data_.size()) + " elements");
    }
    for (auto d : shape_) {
        if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape_));
    }
}

Tensor Tensor::from(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for " + to_string(shape_));
    }
    return shape_[axis];
}

double& Tensor::at(std::size_t i, std::size_t j) {
    return data_[i * shape_[1] + j];
}

double Tensor::at(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
}

double& Tensor::at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
}

double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
}

std::size_t Tensor::row_size() const {
    if (shape_.empty()) throw ShapeError("row access on an empty tensor");
    return data_.size() / shape_[0];
}

std::span<double> Tensor::row(std::size_t i) {
    const auto n = row_size();
    return std::span<double>(data_).subspan(i * n, n);
}

std::span<const double> Tensor::row(std::size_t i) const {
    const auto n = row_size();
    return std::span<const double>(data_).subspan(i * n, n);
}

Tensor Tensor::slice(std::size_t i) const {
    if (i >= dim(0)) throw ShapeError("slice index out of range");
    Shape inner(shape_.begin() + 1, shape_.end());
    if (inner.empty()) inner.push_back(1);
    auto r = row(i);
    return Tensor(std::move(inner), std::vector<double>(r.begin(), r.end()));
}

Tensor Tensor::reshaped(Shape shape) const {
    return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor& Tensor::operator+=(const Tensor& other) {
    require_same_shape(*this, other, "tensor +=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
    require_same_shape(*this, other, "tensor -=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Tensor& Tensor::operator*=(double scale) noexcept {
    for (auto& v : data_) v *= scale;
    return *this;
}

Tensor stack(std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("stack of zero tensors");
    Tensor::Shape shape{parts.size()};
    shape.insert(shape.end(), parts[0].shape().begin(), parts[0].shape().end());
    std::vector<double> data;
    data.reserve(parts.size() * parts[0].size());
    for (const auto& p : parts) {
        require_same_shape(parts[0], p, "stack");
        data.insert(data.end(), p.data().begin(), p.data().end());
    }
    return Tensor(std::move(shape), std::move(data));
}

Tensor operator+(Tensor a, const Tensor& b) {
    a += b;
    return a;
}

Tensor operator-(Tensor a, const Tensor& b) {
    a -= b;
    return a;
}

Tensor operator*(double scale, Tensor t) {
    t *= scale;
    return t;
}

}  // namespace gradlab

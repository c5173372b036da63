#pragma once

#include <functional>
#include <span>
#include <vector>

#include "gradlab/tensor.hpp"

namespace gradlab {

[[nodiscard]] double dot(std::span<const double> a, std::span<const double> b);
[[nodiscard]] double l2_norm(std::span<const double> v);
[[nodiscard]] double l2_norm(const Tensor& t);

/// <a, b> / (|a| |b|). Throws on shape mismatch or a zero vector.
[[nodiscard]] double cosine_similarity(const Tensor& a, const Tensor& b);
[[nodiscard]] double cosine_similarity(std::span<const double> a, std::span<const double> b);

using ScalarFunction = std::function<double(const Tensor&)>;

/// Central-difference gradient of f at x, one coordinate at a time.
/// Throws std::domain_error if any evaluation is not finite.
[[nodiscard]] Tensor finite_diff_gradient(const ScalarFunction& f, const Tensor& x, double h);

// Small statistics helpers shared by the experiment code and tests.

[[nodiscard]] double median(std::vector<double> values);
[[nodiscard]] double mean(std::span<const double> values);
/// Least-squares slope of y against x.
[[nodiscard]] double regression_slope(std::span<const double> x, std::span<const double> y);
/// Spearman rank correlation, average ranks for ties.
[[nodiscard]] double spearman_correlation(std::span<const double> x, std::span<const double> y);

}  // namespace gradlab

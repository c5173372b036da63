#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

namespace gradlab {

/// Writes the gradient at x into grad and returns f(x).
using DifferentiableFunction = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct LbfgsConfig {
    double lr = 1.0;               ///< initial trial step along the search direction
    std::size_t max_iters = 100;
    std::size_t history = 10;
    double grad_tolerance = 1e-10;
    double armijo = 1e-4;
    std::size_t max_halvings = 20;
};

enum class Termination { MaxIterations, GradientTolerance, LineSearchFailed };

[[nodiscard]] std::string_view to_string(Termination t) noexcept;

struct LbfgsResult {
    std::vector<double> x;
    double value = 0.0;
    std::vector<double> trace;  ///< objective after every accepted step
    std::size_t iterations = 0;
    Termination termination = Termination::MaxIterations;
};

/// Limited-memory BFGS with two-loop recursion and backtracking line search.
/// Throws std::domain_error if f(x0) is not finite.
[[nodiscard]] LbfgsResult lbfgs_minimize(const DifferentiableFunction& f, std::vector<double> x0,
                                         const LbfgsConfig& config = {});

}  // namespace gradlab

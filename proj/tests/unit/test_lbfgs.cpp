#include <doctest.h>

#include <cmath>
#include <limits>

#include "gradlab/lbfgs.hpp"
#include "gradlab/rng.hpp"

using namespace gradlab;

TEST_CASE("quadratic converges to its minimiser") {
    SeededRng rng(1);
    std::vector<double> a(10);
    for (auto& v : a) v = rng.uniform(-2, 2);
    const DifferentiableFunction f = [&](std::span<const double> x, std::span<double> g) {
        double acc = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            g[i] = 2.0 * (x[i] - a[i]);
            acc += (x[i] - a[i]) * (x[i] - a[i]);
        }
        return acc;
    };
    LbfgsConfig cfg;
    cfg.max_iters = 50;
    const auto r = lbfgs_minimize(f, std::vector<double>(10, 0.0), cfg);
    CHECK(r.iterations <= 50);
    for (std::size_t i = 0; i < 10; ++i) CHECK(std::abs(r.x[i] - a[i]) < 1e-8);
}

TEST_CASE("Rosenbrock from (-1.2, 1)") {
    const DifferentiableFunction f = [](std::span<const double> x, std::span<double> g) {
        const double u = 1.0 - x[0];
        const double v = x[1] - x[0] * x[0];
        g[0] = -2.0 * u - 400.0 * x[0] * v;
        g[1] = 200.0 * v;
        return u * u + 100.0 * v * v;
    };
    LbfgsConfig cfg;
    cfg.max_iters = 500;
    const auto r = lbfgs_minimize(f, {-1.2, 1.0}, cfg);
    CHECK(r.value < 1e-6);
}

TEST_CASE("stationary start returns immediately") {
    const DifferentiableFunction f = [](std::span<const double> x, std::span<double> g) {
        g[0] = 2.0 * x[0];
        return x[0] * x[0];
    };
    const auto r = lbfgs_minimize(f, {0.0});
    CHECK(r.iterations == 0);
    CHECK(r.x[0] == 0.0);
    CHECK(r.termination == Termination::GradientTolerance);
    CHECK(r.trace.empty());
}

TEST_CASE("accepted steps never increase the objective") {
    const DifferentiableFunction f = [](std::span<const double> x, std::span<double> g) {
        double acc = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double s = std::sin(3.0 * x[i]);
            acc += x[i] * x[i] + s;
            g[i] = 2.0 * x[i] + 3.0 * std::cos(3.0 * x[i]);
        }
        return acc;
    };
    LbfgsConfig cfg;
    cfg.lr = 0.05;
    cfg.max_iters = 40;
    const auto r = lbfgs_minimize(f, {1.5, -2.0, 0.7}, cfg);
    CHECK(r.trace.size() <= cfg.max_iters);
    for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i] <= r.trace[i - 1]);
}

TEST_CASE("non-finite start is rejected") {
    const DifferentiableFunction f = [](std::span<const double>, std::span<double> g) {
        g[0] = 0.0;
        return std::numeric_limits<double>::quiet_NaN();
    };
    CHECK_THROWS_AS((void)lbfgs_minimize(f, {1.0}), std::domain_error);
}

TEST_CASE("iteration budget is respected") {
    const DifferentiableFunction f = [](std::span<const double> x, std::span<double> g) {
        g[0] = 4.0 * x[0] * x[0] * x[0];
        return x[0] * x[0] * x[0] * x[0];
    };
    LbfgsConfig cfg;
    cfg.max_iters = 3;
    const auto r = lbfgs_minimize(f, {3.0}, cfg);
    CHECK(r.iterations <= 3);
    CHECK(r.trace.size() <= 3);
}

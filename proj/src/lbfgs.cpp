#include "gradlab/lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

#include "gradlab/numerics.hpp"

namespace gradlab {

std::string_view to_string(Termination t) noexcept {
    switch (t) {
        case Termination::MaxIterations: return "max_iterations";
        case Termination::GradientTolerance: return "gradient_tolerance";
        case Termination::LineSearchFailed: return "line_search_failed";
    }
    return "unknown";
}

namespace {

struct Pair {
    std::vector<double> s, y;
    double rho;
};

// Two-loop recursion: d = -H g.
std::vector<double> direction(const std::deque<Pair>& hist, std::span<const double> g) {
    const auto n = g.size();
    std::vector<double> q(g.begin(), g.end());
    if (hist.empty()) {
        double l1 = 0.0;
        for (double v : g) l1 += std::abs(v);
        const double scale = std::min(1.0, 1.0 / l1);
        for (auto& v : q) v *= -scale;
        return q;
    }
    std::vector<double> alpha(hist.size());
    for (std::size_t k = hist.size(); k-- > 0;) {
        alpha[k] = hist[k].rho * dot(hist[k].s, q);
        for (std::size_t i = 0; i < n; ++i) q[i] -= alpha[k] * hist[k].y[i];
    }
    const auto& last = hist.back();
    const double gamma = dot(last.s, last.y) / dot(last.y, last.y);
    for (auto& v : q) v *= gamma;
    for (std::size_t k = 0; k < hist.size(); ++k) {
        const double beta = hist[k].rho * dot(hist[k].y, q);
        for (std::size_t i = 0; i < n; ++i) q[i] += (alpha[k] - beta) * hist[k].s[i];
    }
    for (auto& v : q) v = -v;
    return q;
}

}  // namespace

LbfgsResult lbfgs_minimize(const DifferentiableFunction& f, std::vector<double> x0, const LbfgsConfig& cfg) {
    if (!(cfg.lr > 0.0)) throw std::invalid_argument("lbfgs: lr must be positive");
    const auto n = x0.size();
    LbfgsResult r;
    r.x = std::move(x0);
    std::vector<double> g(n), g_new(n), x_new(n);
    r.value = f(r.x, g);
    if (!std::isfinite(r.value)) throw std::domain_error("lbfgs: objective is not finite at the starting point");

    std::deque<Pair> hist;
    bool retried = false;
    while (r.iterations < cfg.max_iters) {
        if (l2_norm(g) < cfg.grad_tolerance) {
            r.termination = Termination::GradientTolerance;
            return r;
        }
        auto d = direction(hist, g);
        double slope = dot(g, d);
        if (!(slope < 0.0)) {
            hist.clear();
            d = direction(hist, g);
            slope = dot(g, d);
        }

        double t = cfg.lr;
        double f_new = 0.0;
        bool accepted = false;
        for (std::size_t h = 0; h <= cfg.max_halvings; ++h, t *= 0.5) {
            for (std::size_t i = 0; i < n; ++i) x_new[i] = r.x[i] + t * d[i];
            f_new = f(x_new, g_new);
            if (std::isfinite(f_new) && f_new <= r.value + cfg.armijo * t * slope) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            if (hist.empty() || retried) {
                r.termination = Termination::LineSearchFailed;
                return r;
            }
            hist.clear();
            retried = true;
            continue;
        }
        retried = false;

        Pair p{std::vector<double>(n), std::vector<double>(n), 0.0};
        for (std::size_t i = 0; i < n; ++i) {
            p.s[i] = x_new[i] - r.x[i];
            p.y[i] = g_new[i] - g[i];
        }
        const double sy = dot(p.s, p.y);
        if (sy > 1e-10 * dot(p.y, p.y)) {
            p.rho = 1.0 / sy;
            hist.push_back(std::move(p));
            if (hist.size() > cfg.history) hist.pop_front();
        }
        std::swap(r.x, x_new);
        std::swap(g, g_new);
        r.value = f_new;
        r.trace.push_back(f_new);
        ++r.iterations;
    }
    r.termination = l2_norm(g) < cfg.grad_tolerance ? Termination::GradientTolerance : Termination::MaxIterations;
    return r;
}

}  // namespace gradlab

#include "gradlab/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "gradlab/direct_inversion.hpp"
#include "gradlab/numerics.hpp"
#include "gradlab/rng.hpp"

namespace gradlab {

std::string_view to_string(AttackKind k) noexcept {
    switch (k) {
        case AttackKind::TwoNorm: return "two_norm";
        case AttackKind::AngleVar: return "angle_var";
        case AttackKind::AngleVarOrth: return "angle_var_orth";
    }
    return "unknown";
}

AttackKind parse_attack(std::string_view text) {
    if (text == "two_norm" || text == "l2") return AttackKind::TwoNorm;
    if (text == "angle_var" || text == "cosine_tv") return AttackKind::AngleVar;
    if (text == "angle_var_orth" || text == "cosine_tv_orth") return AttackKind::AngleVarOrth;
    throw std::invalid_argument("unknown attack kind '" + std::string(text) + "'");
}

std::string_view to_string(LabelMode m) noexcept {
    switch (m) {
        case LabelMode::Auto: return "auto";
        case LabelMode::FixedInferred: return "fixed_inferred";
        case LabelMode::Optimized: return "optimized";
    }
    return "unknown";
}

LabelMode parse_label_mode(std::string_view text) {
    if (text == "auto") return LabelMode::Auto;
    if (text == "fixed_inferred" || text == "fixed") return LabelMode::FixedInferred;
    if (text == "optimized") return LabelMode::Optimized;
    throw std::invalid_argument("unknown label mode '" + std::string(text) + "'");
}

AttackConfig AttackConfig::slow_profile(AttackKind kind) {
    AttackConfig c;
    c.kind = kind;
    c.lr = 0.025;
    c.max_iters = 1200;
    return c;
}

namespace {

constexpr double kOrthEps = 1e-12;
constexpr double kParamStep = 1e-5;

void check_bundles(const GradientBundle& a, const GradientBundle& b) {
    if (a.per_sample || b.per_sample) throw std::invalid_argument("attack objectives compare batch-averaged bundles");
    require_matching(a, b, "attack objective");
}

bool uses_cosine(AttackKind k) {
    return k != AttackKind::TwoNorm;
}

}  // namespace

double objective_l2(const GradientBundle& candidate, const GradientBundle& observed) {
    check_bundles(candidate, observed);
    double acc = 0.0;
    for (std::size_t t = 0; t < candidate.tensors.size(); ++t) {
        const auto a = candidate.tensors[t].values();
        const auto b = observed.tensors[t].values();
        for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    }
    return std::sqrt(acc);
}

double objective_cosine(const GradientBundle& candidate, const GradientBundle& observed) {
    check_bundles(candidate, observed);
    return 1.0 - cosine_similarity(candidate.flatten(), observed.flatten());
}

double tv_penalty(const Tensor& images) {
    if (images.rank() != 2 && images.rank() != 3) throw ShapeError("tv_penalty expects [H x W] or [B x H x W]");
    const auto b = images.rank() == 3 ? images.dim(0) : 1;
    const auto h = images.dim(images.rank() - 2);
    const auto w = images.dim(images.rank() - 1);
    double acc = 0.0;
    for (std::size_t s = 0; s < b; ++s) {
        const double* v = images.values().data() + s * h * w;
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                if (x + 1 < w) acc += std::abs(v[y * w + x + 1] - v[y * w + x]);
                if (y + 1 < h) acc += std::abs(v[(y + 1) * w + x] - v[y * w + x]);
            }
        }
    }
    return acc;
}

double orth_penalty(const Tensor& batch) {
    if (batch.rank() < 2) throw ShapeError("orth_penalty expects a [B x ...] batch");
    const auto b = batch.dim(0);
    double acc = 0.0;
    for (std::size_t m = 0; m < b; ++m) {
        for (std::size_t k = m + 1; k < b; ++k) {
            const auto x = batch.row(m);
            const auto y = batch.row(k);
            const double c = dot(x, y) / (std::sqrt(dot(x, x) + kOrthEps) * std::sqrt(dot(y, y) + kOrthEps));
            acc += c * c;
        }
    }
    return acc;
}

AttackObjective::AttackObjective(const AttackProblem& problem, const AttackConfig& config, LabelMode mode,
                                 std::vector<std::size_t> fixed_labels)
    : problem_(problem),
      config_(config),
      optimize_labels_(mode == LabelMode::Optimized),
      b_(problem.batch_size),
      n_(input_size(*problem.model)),
      c_(num_classes(*problem.model)) {
    if (mode == LabelMode::Auto) throw std::invalid_argument("AttackObjective needs a resolved label mode");
    if (!optimize_labels_) {
        if (fixed_labels.size() != b_) throw std::invalid_argument("AttackObjective: need one fixed label per sample");
        fixed_targets_ = one_hot(fixed_labels, c_);
    }
    observed_flat_ = problem.observed->flatten();
    observed_norm_ = l2_norm(observed_flat_);
    if (uses_cosine(config.kind) && observed_norm_ == 0.0) {
        throw std::domain_error("cosine attack objective needs a nonzero observed bundle");
    }
}

Tensor AttackObjective::targets(std::span<const double> z) const {
    if (!optimize_labels_) return fixed_targets_;
    Tensor y({b_, c_});
    const auto logits = z.subspan(b_ * n_);
    for (std::size_t m = 0; m < b_; ++m) softmax(logits.subspan(m * c_, c_), y.row(m));
    return y;
}

double AttackObjective::match_term(const Tensor& inputs, const Tensor& targets, std::span<double> gx,
                                   std::span<double> gy, bool want_grad) const {
    const Model& model = *problem_.model;
    const double inv_b = 1.0 / static_cast<double>(b_);

    // Candidate bundle, flattened in parameter order.
    std::vector<double> cand;
    std::vector<double> logits_all, deltas;  // dense only, [B x C] each
    const auto* dense = std::get_if<DenseModel>(&model);
    if (dense) {
        const Tensor logits = forward(model, inputs);
        logits_all.assign(logits.values().begin(), logits.values().end());
        deltas.assign(b_ * c_, 0.0);
        cand.assign(n_ * c_ + c_, 0.0);
        for (std::size_t m = 0; m < b_; ++m) {
            std::span<double> d(deltas.data() + m * c_, c_);
            logit_space::loss_and_delta(logits.row(m), targets.row(m), problem_.loss, d);
            const auto x = inputs.row(m);
            for (std::size_t i = 0; i < n_; ++i) {
                const double xi = inv_b * x[i];
                double* row = cand.data() + i * c_;
                for (std::size_t j = 0; j < c_; ++j) row[j] += xi * d[j];
            }
            for (std::size_t j = 0; j < c_; ++j) cand[n_ * c_ + j] += inv_b * d[j];
        }
    } else {
        cand = backward(model, inputs, targets, problem_.loss).gradients.flatten();
    }

    // Objective value and R = dF/d(candidate).
    const std::size_t p = cand.size();
    std::vector<double> r(p);
    double value = 0.0;
    if (config_.kind == AttackKind::TwoNorm) {
        for (std::size_t i = 0; i < p; ++i) {
            const double d = cand[i] - observed_flat_[i];
            value += d * d;
            r[i] = 2.0 * d;
        }
    } else {
        const double na = l2_norm(cand);
        const double nb = observed_norm_;
        if (na == 0.0) {
            value = 1.0;
            for (std::size_t i = 0; i < p; ++i) r[i] = -observed_flat_[i] / nb;
        } else {
            const double ab = dot(cand, observed_flat_);
            value = 1.0 - ab / (na * nb);
            for (std::size_t i = 0; i < p; ++i) {
                r[i] = -(observed_flat_[i] / (na * nb) - ab * cand[i] / (na * na * na * nb));
            }
        }
    }
    if (!want_grad) return value;

    if (dense) {
        const double* w = dense->weight.values().data();
        const double* rw = r.data();
        const double* rb = r.data() + n_ * c_;
        std::vector<double> u(c_), v(c_);
        for (std::size_t m = 0; m < b_; ++m) {
            const auto x = inputs.row(m);
            const std::span<const double> o(logits_all.data() + m * c_, c_);
            const std::span<const double> d(deltas.data() + m * c_, c_);
            for (std::size_t j = 0; j < c_; ++j) u[j] = rb[j];
            for (std::size_t i = 0; i < n_; ++i) {
                if (x[i] == 0.0) continue;
                for (std::size_t j = 0; j < c_; ++j) u[j] += rw[i * c_ + j] * x[i];
            }
            logit_space::delta_jacobian_t(o, targets.row(m), problem_.loss, u, v);
            auto g = gx.subspan(m * n_, n_);
            for (std::size_t i = 0; i < n_; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < c_; ++j) acc += rw[i * c_ + j] * d[j] + w[i * c_ + j] * v[j];
                g[i] = inv_b * acc;
            }
            if (!gy.empty()) {
                auto gym = gy.subspan(m * c_, c_);
                logit_space::delta_target_jacobian_t(o, targets.row(m), problem_.loss, u, gym);
                for (auto& e : gym) e *= inv_b;
            }
        }
        return value;
    }

    // Mixed partials: d/dx (R . grad_theta L) equals the directional
    // derivative of grad_x L along R in parameter space.
    const double rn = l2_norm(r);
    std::fill(gx.begin(), gx.end(), 0.0);
    std::fill(gy.begin(), gy.end(), 0.0);
    if (rn == 0.0) return value;
    BackwardOptions opt;
    opt.input_gradient = true;
    opt.target_gradient = !gy.empty();
    auto shifted = [&](double sign) {
        Model m = model;
        std::size_t k = 0;
        for (Tensor* t : parameters(m)) {
            for (auto& e : t->values()) e += sign * kParamStep * r[k++] / rn;
        }
        return backward(m, inputs, targets, problem_.loss, opt);
    };
    const auto plus = shifted(1.0);
    const auto minus = shifted(-1.0);
    const double scale = rn / (2.0 * kParamStep);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = scale * (plus.input_gradient[i] - minus.input_gradient[i]);
    for (std::size_t i = 0; i < gy.size(); ++i) gy[i] = scale * (plus.target_gradient[i] - minus.target_gradient[i]);
    return value;
}

double AttackObjective::regularizers(std::span<const double> x, std::span<double> gx, bool want_grad) const {
    if (!uses_cosine(config_.kind)) return 0.0;
    double value = 0.0;
    const auto h = problem_.height;
    const auto w = problem_.width;
    if (config_.tv_weight > 0.0) {
        if (h * w != n_) throw ShapeError("total variation needs the input geometry");
        const double scale = config_.tv_weight / static_cast<double>(b_ * n_);
        for (std::size_t s = 0; s < b_; ++s) {
            const double* v = x.data() + s * n_;
            double* g = want_grad ? gx.data() + s * n_ : nullptr;
            for (std::size_t r = 0; r < h; ++r) {
                for (std::size_t c = 0; c < w; ++c) {
                    const auto i = r * w + c;
                    for (const auto j : {c + 1 < w ? i + 1 : i, r + 1 < h ? i + w : i}) {
                        if (j == i) continue;
                        const double d = v[j] - v[i];
                        value += scale * std::abs(d);
                        if (g && d != 0.0) {
                            const double sgn = d > 0.0 ? scale : -scale;
                            g[j] += sgn;
                            g[i] -= sgn;
                        }
                    }
                }
            }
        }
    }
    if (config_.kind == AttackKind::AngleVarOrth && config_.orth_weight > 0.0 && b_ > 1) {
        const double wgt = config_.orth_weight;
        for (std::size_t m = 0; m < b_; ++m) {
            for (std::size_t k = m + 1; k < b_; ++k) {
                const auto a = x.subspan(m * n_, n_);
                const auto b = x.subspan(k * n_, n_);
                const double na = std::sqrt(dot(a, a) + kOrthEps);
                const double nb = std::sqrt(dot(b, b) + kOrthEps);
                const double ab = dot(a, b);
                const double c = ab / (na * nb);
                value += wgt * c * c;
                if (!want_grad) continue;
                const double f = 2.0 * wgt * c;
                for (std::size_t i = 0; i < n_; ++i) {
                    gx[m * n_ + i] += f * (b[i] / (na * nb) - ab * a[i] / (na * na * na * nb));
                    gx[k * n_ + i] += f * (a[i] / (na * nb) - ab * b[i] / (na * nb * nb * nb));
                }
            }
        }
    }
    return value;
}

double AttackObjective::operator()(std::span<const double> z, std::span<double> grad) const {
    const Tensor inputs({b_, n_}, std::vector<double>(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(b_ * n_)));
    const Tensor y = targets(z);
    auto gx = grad.subspan(0, b_ * n_);
    std::vector<double> gy(optimize_labels_ ? b_ * c_ : 0);
    double value = match_term(inputs, y, gx, gy, true);
    value += regularizers(z.subspan(0, b_ * n_), gx, true);
    if (optimize_labels_) {
        // Through the softmax: dF/dz = p * (g - p.g).
        auto gz = grad.subspan(b_ * n_);
        for (std::size_t m = 0; m < b_; ++m) {
            const auto p = y.row(m);
            const std::span<const double> g(gy.data() + m * c_, c_);
            const double pg = dot(p, g);
            for (std::size_t j = 0; j < c_; ++j) gz[m * c_ + j] = p[j] * (g[j] - pg);
        }
    }
    return value;
}

double AttackObjective::value_at(const Tensor& inputs, const Tensor& targets) const {
    if (inputs.size() != b_ * n_) throw ShapeError("value_at: inputs do not match the batch");
    require_same_shape(targets, Tensor({b_, c_}), "value_at targets");
    const Tensor x = inputs.reshaped({b_, n_});
    double m = match_term(x, targets, {}, {}, false);
    if (config_.kind == AttackKind::TwoNorm) m = std::sqrt(m);
    std::span<double> none;
    return m + regularizers(x.values(), none, false);
}

double AttackObjective::reported(std::span<const double> z) const {
    const Tensor inputs({b_, n_}, std::vector<double>(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(b_ * n_)));
    return value_at(inputs, targets(z));
}

AttackResult run_attack(const AttackProblem& problem, const AttackConfig& config) {
    if (!problem.model || !problem.observed) throw std::invalid_argument("run_attack: model and bundle are required");
    const Model& model = *problem.model;
    const GradientBundle& observed = *problem.observed;
    if (observed.per_sample) throw std::invalid_argument("run_attack: observed bundle must be batch-averaged");
    const auto params = parameters(model);
    if (params.size() != observed.tensors.size()) throw ShapeError("run_attack: bundle does not match the model");
    for (std::size_t i = 0; i < params.size(); ++i) require_same_shape(*params[i], observed.tensors[i], "run_attack");
    if (problem.batch_size == 0) throw std::invalid_argument("run_attack: batch size must be positive");

    AttackProblem prob = problem;
    if (const auto* ln = std::get_if<LeNetModel>(&model); ln && prob.height == 0) {
        prob.height = ln->height;
        prob.width = ln->width;
    }
    const auto b = prob.batch_size;
    const auto n = input_size(model);
    const auto c = num_classes(model);
    if (prob.height * prob.width != n) {
        throw ShapeError("run_attack: geometry " + std::to_string(prob.height) + "x" + std::to_string(prob.width) +
                         " does not match " + std::to_string(n) + " inputs");
    }

    const auto inferred = infer_label_distribution(observed.tensors.back(), c, b);
    LabelMode mode = config.label_mode;
    if (mode == LabelMode::Auto) {
        const bool fixed = prob.loss == LossKind::SoftmaxCE && inferred.confidence == Confidence::High;
        mode = fixed ? LabelMode::FixedInferred : LabelMode::Optimized;
    }

    SeededRng rng(config.seed, config.stream);
    const AttackObjective objective(prob, config, mode, inferred.labels);
    std::vector<double> z(objective.size(), 0.0);
    for (std::size_t i = 0; i < b * n; ++i) z[i] = rng.uniform01();
    if (mode == LabelMode::Optimized && prob.loss == LossKind::SoftmaxCE) {
        for (std::size_t m = 0; m < b; ++m) z[b * n + m * c + inferred.labels[m]] = 1.0;
    }

    AttackResult res;
    res.label_mode = mode;
    res.initial = Tensor({b, prob.height, prob.width}, std::vector<double>(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(b * n)));

    LbfgsConfig lc;
    lc.lr = config.lr;
    lc.max_iters = config.max_iters;
    lc.history = config.history_size;
    auto opt = lbfgs_minimize([&](std::span<const double> x, std::span<double> g) { return objective(x, g); },
                              std::move(z), lc);

    res.trace = std::move(opt.trace);
    if (config.kind == AttackKind::TwoNorm) {
        for (auto& v : res.trace) v = std::sqrt(v);
    }
    res.iterations = opt.iterations;
    res.termination = opt.termination;
    res.final_objective = objective.reported(opt.x);
    res.recovered = Tensor({b, prob.height, prob.width});
    for (std::size_t i = 0; i < b * n; ++i) res.recovered[i] = std::clamp(opt.x[i], 0.0, 1.0);
    res.label_probs = objective.targets(opt.x);
    for (std::size_t m = 0; m < b; ++m) {
        const auto row = res.label_probs.row(m);
        res.labels.push_back(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()));
    }
    return res;
}

}  // namespace gradlab

#include "gradlab/models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "gradlab/numerics.hpp"

namespace gradlab {

std::string_view to_string(LossKind k) noexcept {
    switch (k) {
        case LossKind::SoftmaxCE: return "softmax_ce";
        case LossKind::MSE: return "mse";
        case LossKind::SoftmaxMSE: return "softmax_mse";
    }
    return "?";
}

LossKind parse_loss(std::string_view text) {
    if (text == "softmax_ce" || text == "ce") return LossKind::SoftmaxCE;
    if (text == "mse") return LossKind::MSE;
    if (text == "softmax_mse") return LossKind::SoftmaxMSE;
    throw std::invalid_argument("unknown loss '" + std::string(text) + "' (softmax_ce|mse|softmax_mse)");
}

DenseModel DenseModel::zeros(std::size_t inputs, std::size_t classes) {
    return DenseModel{Tensor({inputs, classes}), Tensor({classes})};
}

DenseModel DenseModel::random(std::size_t inputs, std::size_t classes, SeededRng& rng, double lo, double hi) {
    DenseModel m;
    m.weight = uniform(rng, {inputs, classes}, lo, hi);
    m.bias = uniform(rng, {classes}, lo, hi);
    return m;
}

LeNetModel LeNetModel::random(std::size_t height, std::size_t width, std::size_t channels, std::size_t classes,
                              SeededRng& rng) {
    if (height < 4 || width < 4) throw ShapeError("LeNet needs inputs of at least 4x4");
    if (channels == 0 || classes < 2) throw std::invalid_argument("LeNet needs channels >= 1 and classes >= 2");
    LeNetModel m;
    m.height = height;
    m.width = width;
    m.channels = channels;
    m.classes = classes;
    const auto k2 = kKernel * kKernel;
    const double b1 = 1.0 / std::sqrt(static_cast<double>(k2));
    const double b2 = 1.0 / std::sqrt(static_cast<double>(channels * k2));
    const double b3 = 1.0 / std::sqrt(static_cast<double>(m.features()));
    m.conv1_weight = uniform(rng, {channels, 1, kKernel, kKernel}, -b1, b1);
    m.conv1_bias = uniform(rng, {channels}, -b1, b1);
    m.conv2_weight = uniform(rng, {2 * channels, channels, kKernel, kKernel}, -b2, b2);
    m.conv2_bias = uniform(rng, {2 * channels}, -b2, b2);
    m.fc_weight = uniform(rng, {m.features(), classes}, -b3, b3);
    m.fc_bias = uniform(rng, {classes}, -b3, b3);
    return m;
}

std::vector<const Tensor*> parameters(const Model& model) {
    return std::visit(
        [](const auto& m) -> std::vector<const Tensor*> {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, DenseModel>) {
                return {&m.weight, &m.bias};
            } else {
                return {&m.conv1_weight, &m.conv1_bias, &m.conv2_weight, &m.conv2_bias, &m.fc_weight, &m.fc_bias};
            }
        },
        model);
}

std::vector<Tensor*> parameters(Model& model) {
    return std::visit(
        [](auto& m) -> std::vector<Tensor*> {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, DenseModel>) {
                return {&m.weight, &m.bias};
            } else {
                return {&m.conv1_weight, &m.conv1_bias, &m.conv2_weight, &m.conv2_bias, &m.fc_weight, &m.fc_bias};
            }
        },
        model);
}

std::size_t input_size(const Model& model) {
    return std::visit(
        [](const auto& m) -> std::size_t {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, DenseModel>) {
                return m.inputs();
            } else {
                return m.height * m.width;
            }
        },
        model);
}

std::size_t num_classes(const Model& model) {
    return std::visit(
        [](const auto& m) -> std::size_t {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, DenseModel>) {
                return m.classes();
            } else {
                return m.classes;
            }
        },
        model);
}

std::string_view model_name(const Model& model) {
    return std::holds_alternative<DenseModel>(model) ? "dense" : "lenet";
}

std::size_t GradientBundle::total_size() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
}

std::vector<double> GradientBundle::flatten() const {
    std::vector<double> out;
    out.reserve(total_size());
    for (const auto& t : tensors) out.insert(out.end(), t.data().begin(), t.data().end());
    return out;
}

GradientBundle average(const GradientBundle& per_sample) {
    if (!per_sample.per_sample) return per_sample;
    GradientBundle out;
    for (const auto& t : per_sample.tensors) {
        const auto b = t.dim(0);
        Tensor::Shape inner(t.shape().begin() + 1, t.shape().end());
        if (inner.empty()) inner.push_back(1);
        Tensor acc(inner);
        for (std::size_t m = 0; m < b; ++m) {
            const auto r = t.row(m);
            for (std::size_t i = 0; i < r.size(); ++i) acc[i] += r[i];
        }
        acc *= 1.0 / static_cast<double>(b);
        out.tensors.push_back(std::move(acc));
    }
    return out;
}

void require_matching(const GradientBundle& a, const GradientBundle& b, const char* what) {
    if (a.tensors.size() != b.tensors.size()) {
        throw ShapeError(std::string(what) + ": bundles hold different parameter counts");
    }
    for (std::size_t i = 0; i < a.tensors.size(); ++i) require_same_shape(a.tensors[i], b.tensors[i], what);
}

GradientBundle mean_of(std::span<const GradientBundle> bundles) {
    if (bundles.empty()) throw std::invalid_argument("mean_of: no bundles");
    GradientBundle out = bundles[0];
    for (std::size_t k = 1; k < bundles.size(); ++k) {
        require_matching(out, bundles[k], "mean_of");
        for (std::size_t i = 0; i < out.tensors.size(); ++i) out.tensors[i] += bundles[k].tensors[i];
    }
    for (auto& t : out.tensors) t *= 1.0 / static_cast<double>(bundles.size());
    return out;
}

void softmax(std::span<const double> logits, std::span<double> out) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        out[k] = std::exp(logits[k] - mx);
        z += out[k];
    }
    for (auto& v : out) v /= z;
}

Tensor softmax(const Tensor& logits) {
    Tensor out(logits.shape());
    if (logits.rank() == 1) {
        softmax(logits.values(), out.values());
    } else if (logits.rank() == 2) {
        for (std::size_t m = 0; m < logits.dim(0); ++m) softmax(logits.row(m), out.row(m));
    } else {
        throw ShapeError("softmax expects a vector or a [B x C] matrix");
    }
    return out;
}

Tensor one_hot(std::span<const std::size_t> labels, std::size_t classes) {
    Tensor t({labels.size(), classes});
    for (std::size_t m = 0; m < labels.size(); ++m) {
        if (labels[m] >= classes) throw std::invalid_argument("one_hot: label out of range");
        t.at(m, labels[m]) = 1.0;
    }
    return t;
}

namespace logit_space {

namespace {

double log_sum_exp(std::span<const double> o) {
    const double mx = *std::max_element(o.begin(), o.end());
    double z = 0.0;
    for (double v : o) z += std::exp(v - mx);
    return mx + std::log(z);
}

// out = S^T v with S = diag(p) - p p^T (symmetric)
void softmax_jacobian_apply(std::span<const double> p, std::span<const double> v, std::span<double> out) {
    double pv = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) pv += p[k] * v[k];
    for (std::size_t k = 0; k < p.size(); ++k) out[k] = p[k] * (v[k] - pv);
}

}  // namespace

double loss_and_delta(std::span<const double> o, std::span<const double> y, LossKind kind, std::span<double> delta) {
    const auto c = o.size();
    switch (kind) {
        case LossKind::SoftmaxCE: {
            const double lse = log_sum_exp(o);
            double sy = 0.0;
            double l = 0.0;
            for (std::size_t k = 0; k < c; ++k) {
                sy += y[k];
                if (y[k] != 0.0) l += y[k] * (lse - o[k]);
            }
            for (std::size_t k = 0; k < c; ++k) delta[k] = sy * std::exp(o[k] - lse) - y[k];
            return l;
        }
        case LossKind::MSE: {
            double l = 0.0;
            for (std::size_t k = 0; k < c; ++k) {
                const double r = o[k] - y[k];
                l += r * r;
                delta[k] = 2.0 * r;
            }
            return l;
        }
        case LossKind::SoftmaxMSE: {
            std::vector<double> p(c);
            softmax(o, p);
            double l = 0.0;
            double s = 0.0;
            for (std::size_t k = 0; k < c; ++k) {
                const double g = 2.0 * (p[k] - y[k]);
                l += (p[k] - y[k]) * (p[k] - y[k]);
                s += g * p[k];
            }
            for (std::size_t k = 0; k < c; ++k) delta[k] = p[k] * (2.0 * (p[k] - y[k]) - s);
            return l;
        }
    }
    throw std::logic_error("unhandled loss kind");
}

void delta_jacobian_t(std::span<const double> o, std::span<const double> y, LossKind kind, std::span<const double> u,
                      std::span<double> out) {
    const auto c = o.size();
    switch (kind) {
        case LossKind::SoftmaxCE: {
            std::vector<double> p(c);
            softmax(o, p);
            double sy = 0.0;
            for (double v : y) sy += v;
            softmax_jacobian_apply(p, u, out);
            for (auto& v : out) v *= sy;
            return;
        }
        case LossKind::MSE:
            for (std::size_t k = 0; k < c; ++k) out[k] = 2.0 * u[k];
            return;
        case LossKind::SoftmaxMSE: {
            std::vector<double> p(c), g(c), tmp(c), acc(c);
            softmax(o, p);
            double s = 0.0;
            double pu = 0.0;
            for (std::size_t k = 0; k < c; ++k) {
                g[k] = 2.0 * (p[k] - y[k]);
                s += g[k] * p[k];
                pu += p[k] * u[k];
            }
            for (std::size_t k = 0; k < c; ++k) tmp[k] = (g[k] - s) * u[k] + 2.0 * p[k] * u[k];
            softmax_jacobian_apply(p, tmp, acc);
            for (std::size_t k = 0; k < c; ++k) tmp[k] = 2.0 * p[k] + g[k];
            softmax_jacobian_apply(p, tmp, out);  // out = t
            for (std::size_t k = 0; k < c; ++k) out[k] = acc[k] - out[k] * pu;
            return;
        }
    }
    throw std::logic_error("unhandled loss kind");
}

void delta_target_jacobian_t(std::span<const double> o, std::span<const double> /*y*/, LossKind kind,
                             std::span<const double> u, std::span<double> out) {
    const auto c = o.size();
    switch (kind) {
        case LossKind::SoftmaxCE: {
            std::vector<double> p(c);
            softmax(o, p);
            double pu = 0.0;
            for (std::size_t k = 0; k < c; ++k) pu += p[k] * u[k];
            for (std::size_t k = 0; k < c; ++k) out[k] = pu - u[k];
            return;
        }
        case LossKind::MSE:
            for (std::size_t k = 0; k < c; ++k) out[k] = -2.0 * u[k];
            return;
        case LossKind::SoftmaxMSE: {
            std::vector<double> p(c);
            softmax(o, p);
            double pu = 0.0;
            for (std::size_t k = 0; k < c; ++k) pu += p[k] * u[k];
            for (std::size_t k = 0; k < c; ++k) out[k] = 2.0 * p[k] * (pu - u[k]);
            return;
        }
    }
    throw std::logic_error("unhandled loss kind");
}

void loss_target_gradient(std::span<const double> o, std::span<const double> y, LossKind kind, std::span<double> out) {
    const auto c = o.size();
    switch (kind) {
        case LossKind::SoftmaxCE: {
            const double lse = log_sum_exp(o);
            for (std::size_t k = 0; k < c; ++k) out[k] = lse - o[k];
            return;
        }
        case LossKind::MSE:
            for (std::size_t k = 0; k < c; ++k) out[k] = 2.0 * (y[k] - o[k]);
            return;
        case LossKind::SoftmaxMSE: {
            std::vector<double> p(c);
            softmax(o, p);
            for (std::size_t k = 0; k < c; ++k) out[k] = 2.0 * (y[k] - p[k]);
            return;
        }
    }
    throw std::logic_error("unhandled loss kind");
}

}  // namespace logit_space

LossValue loss(const Tensor& logits, const Tensor& targets, LossKind kind) {
    require_same_shape(logits, targets, "loss");
    if (logits.rank() != 2) throw ShapeError("loss expects [B x C] logits");
    for (double v : targets.values()) {
        if (v != 0.0 && v != 1.0) throw std::invalid_argument("loss: targets must be one-hot");
    }
    LossValue out;
    std::vector<double> delta(logits.dim(1));
    for (std::size_t m = 0; m < logits.dim(0); ++m) {
        const auto row = targets.row(m);
        if (std::count(row.begin(), row.end(), 1.0) != 1) throw std::invalid_argument("loss: targets must be one-hot");
        out.per_sample.push_back(logit_space::loss_and_delta(logits.row(m), row, kind, delta));
    }
    out.mean = mean(out.per_sample);
    return out;
}

namespace {

void require_targets(const Tensor& targets, std::size_t batch, std::size_t classes) {
    if (targets.rank() != 2 || targets.dim(0) != batch || targets.dim(1) != classes) {
        throw ShapeError("targets must be [B x C] = [" + std::to_string(batch) + "x" + std::to_string(classes) + "], got " +
                         to_string(targets.shape()));
    }
}

std::size_t batch_of(const Tensor& inputs, std::size_t per_sample, const char* who) {
    if (inputs.rank() < 2 || inputs.row_size() != per_sample) {
        throw ShapeError(std::string(who) + ": inputs " + to_string(inputs.shape()) + " do not hold samples of size " +
                         std::to_string(per_sample));
    }
    return inputs.dim(0);
}

Tensor dense_forward(const DenseModel& m, const Tensor& inputs) {
    const auto n = m.inputs();
    const auto c = m.classes();
    const auto b = batch_of(inputs, n, "forward");
    Tensor out({b, c});
    for (std::size_t s = 0; s < b; ++s) {
        auto o = out.row(s);
        std::copy(m.bias.values().begin(), m.bias.values().end(), o.begin());
        const auto x = inputs.row(s);
        for (std::size_t i = 0; i < n; ++i) {
            const double xi = x[i];
            if (xi == 0.0) continue;
            const double* w = m.weight.values().data() + i * c;
            for (std::size_t j = 0; j < c; ++j) o[j] += w[j] * xi;
        }
    }
    return out;
}

BackwardResult dense_backward(const DenseModel& m, const Tensor& inputs, const Tensor& targets, LossKind kind,
                              const BackwardOptions& opt) {
    const auto n = m.inputs();
    const auto c = m.classes();
    const auto b = batch_of(inputs, n, "backward");
    require_targets(targets, b, c);
    const Tensor logits = dense_forward(m, inputs);
    const double inv_b = 1.0 / static_cast<double>(b);

    BackwardResult r;
    Tensor gw = opt.per_sample ? Tensor({b, n, c}) : Tensor({n, c});
    Tensor gb = opt.per_sample ? Tensor({b, c}) : Tensor({c});
    if (opt.input_gradient) r.input_gradient = Tensor(inputs.shape());
    if (opt.target_gradient) r.target_gradient = Tensor({b, c});

    std::vector<double> delta(c);
    double total = 0.0;
    for (std::size_t s = 0; s < b; ++s) {
        total += logit_space::loss_and_delta(logits.row(s), targets.row(s), kind, delta);
        const auto x = inputs.row(s);
        const double scale = opt.per_sample ? 1.0 : inv_b;
        double* gw_base = gw.values().data() + (opt.per_sample ? s * n * c : 0);
        double* gb_base = gb.values().data() + (opt.per_sample ? s * c : 0);
        for (std::size_t j = 0; j < c; ++j) gb_base[j] += scale * delta[j];
        for (std::size_t i = 0; i < n; ++i) {
            const double xi = scale * x[i];
            if (xi == 0.0) continue;
            double* row = gw_base + i * c;
            for (std::size_t j = 0; j < c; ++j) row[j] += xi * delta[j];
        }
        if (opt.input_gradient) {
            auto gx = r.input_gradient.row(s);
            for (std::size_t i = 0; i < n; ++i) {
                const double* w = m.weight.values().data() + i * c;
                double acc = 0.0;
                for (std::size_t j = 0; j < c; ++j) acc += w[j] * delta[j];
                gx[i] = inv_b * acc;
            }
        }
        if (opt.target_gradient) {
            auto gy = r.target_gradient.row(s);
            logit_space::loss_target_gradient(logits.row(s), targets.row(s), kind, gy);
            for (auto& v : gy) v *= inv_b;
        }
    }
    r.mean_loss = total * inv_b;
    r.gradients.tensors.push_back(std::move(gw));
    r.gradients.tensors.push_back(std::move(gb));
    r.gradients.per_sample = opt.per_sample;
    return r;
}

}  // namespace

Tensor forward(const Model& model, const Tensor& inputs) {
    Tensor out = std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, DenseModel>) {
                return dense_forward(m, inputs);
            } else {
                return detail::lenet_forward(m, inputs);
            }
        },
        model);
    if (!out.all_finite()) throw std::domain_error("forward: non-finite logits");
    return out;
}

BackwardResult backward(const Model& model, const Tensor& inputs, const Tensor& targets, LossKind kind,
                        BackwardOptions options) {
    return std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, DenseModel>) {
                return dense_backward(m, inputs, targets, kind, options);
            } else {
                return detail::lenet_backward(m, inputs, targets, kind, options);
            }
        },
        model);
}

BackwardResult backward(const Model& model, const Batch& batch, LossKind kind, BackwardOptions options) {
    return backward(model, batch.inputs, one_hot(batch.labels, num_classes(model)), kind, options);
}

Model sgd_step(Model model, const GradientBundle& bundle, double lr) {
    if (bundle.per_sample) throw std::invalid_argument("sgd_step expects a batch-averaged bundle");
    auto params = parameters(model);
    if (params.size() != bundle.tensors.size()) throw ShapeError("sgd_step: bundle does not match model");
    for (std::size_t i = 0; i < params.size(); ++i) require_same_shape(*params[i], bundle.tensors[i], "sgd_step");
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i]->values();
        const auto g = bundle.tensors[i].values();
        for (std::size_t k = 0; k < p.size(); ++k) p[k] -= lr * g[k];
    }
    return model;
}

}  // namespace gradlab

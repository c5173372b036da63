#include <cmath>
#include <string>
#include <vector>

#include "gradlab/models.hpp"

namespace gradlab::detail {

namespace {

constexpr std::size_t kK = LeNetModel::kKernel;
constexpr std::ptrdiff_t kPad = static_cast<std::ptrdiff_t>(kK / 2);

struct Dims {
    std::size_t c, h, w;
    [[nodiscard]] std::size_t size() const { return c * h * w; }
};

// "same" convolution, stride 1, zero padding kK/2.
void conv_forward(const double* in, Dims d, const Tensor& weight, const Tensor& bias, std::size_t cout, double* out) {
    const auto h = static_cast<std::ptrdiff_t>(d.h);
    const auto w = static_cast<std::ptrdiff_t>(d.w);
    for (std::size_t co = 0; co < cout; ++co) {
        double* o = out + co * d.h * d.w;
        for (std::size_t i = 0; i < d.h * d.w; ++i) o[i] = bias[co];
        for (std::size_t ci = 0; ci < d.c; ++ci) {
            const double* src = in + ci * d.h * d.w;
            const double* k = weight.values().data() + (co * d.c + ci) * kK * kK;
            for (std::ptrdiff_t y = 0; y < h; ++y) {
                for (std::ptrdiff_t x = 0; x < w; ++x) {
                    double acc = 0.0;
                    for (std::ptrdiff_t ky = 0; ky < static_cast<std::ptrdiff_t>(kK); ++ky) {
                        const auto yy = y + ky - kPad;
                        if (yy < 0 || yy >= h) continue;
                        for (std::ptrdiff_t kx = 0; kx < static_cast<std::ptrdiff_t>(kK); ++kx) {
                            const auto xx = x + kx - kPad;
                            if (xx < 0 || xx >= w) continue;
                            acc += k[ky * static_cast<std::ptrdiff_t>(kK) + kx] * src[yy * w + xx];
                        }
                    }
                    o[y * w + x] += acc;
                }
            }
        }
    }
}

// Accumulates weight/bias gradients and (optionally) the input gradient.
void conv_backward(const double* in, Dims d, const Tensor& weight, std::size_t cout, const double* dout, double* dweight,
                   double* dbias, double* din) {
    const auto h = static_cast<std::ptrdiff_t>(d.h);
    const auto w = static_cast<std::ptrdiff_t>(d.w);
    for (std::size_t co = 0; co < cout; ++co) {
        const double* g = dout + co * d.h * d.w;
        for (std::size_t i = 0; i < d.h * d.w; ++i) dbias[co] += g[i];
        for (std::size_t ci = 0; ci < d.c; ++ci) {
            const double* src = in + ci * d.h * d.w;
            const double* k = weight.values().data() + (co * d.c + ci) * kK * kK;
            double* dk = dweight + (co * d.c + ci) * kK * kK;
            double* dsrc = din ? din + ci * d.h * d.w : nullptr;
            for (std::ptrdiff_t y = 0; y < h; ++y) {
                for (std::ptrdiff_t x = 0; x < w; ++x) {
                    const double gv = g[y * w + x];
                    if (gv == 0.0) continue;
                    for (std::ptrdiff_t ky = 0; ky < static_cast<std::ptrdiff_t>(kK); ++ky) {
                        const auto yy = y + ky - kPad;
                        if (yy < 0 || yy >= h) continue;
                        for (std::ptrdiff_t kx = 0; kx < static_cast<std::ptrdiff_t>(kK); ++kx) {
                            const auto xx = x + kx - kPad;
                            if (xx < 0 || xx >= w) continue;
                            const auto ki = ky * static_cast<std::ptrdiff_t>(kK) + kx;
                            dk[ki] += gv * src[yy * w + xx];
                            if (dsrc) dsrc[yy * w + xx] += gv * k[ki];
                        }
                    }
                }
            }
        }
    }
}

double sigmoid(double z) {
    return 1.0 / (1.0 + std::exp(-z));
}

// 2x2 average pooling; trailing odd rows/columns are dropped.
void pool_forward(const double* in, Dims d, double* out) {
    const auto ho = d.h / 2;
    const auto wo = d.w / 2;
    for (std::size_t c = 0; c < d.c; ++c) {
        const double* s = in + c * d.h * d.w;
        double* o = out + c * ho * wo;
        for (std::size_t y = 0; y < ho; ++y) {
            for (std::size_t x = 0; x < wo; ++x) {
                const auto base = 2 * y * d.w + 2 * x;
                o[y * wo + x] = 0.25 * (s[base] + s[base + 1] + s[base + d.w] + s[base + d.w + 1]);
            }
        }
    }
}

void pool_backward(const double* dout, Dims d, double* din) {
    const auto ho = d.h / 2;
    const auto wo = d.w / 2;
    for (std::size_t c = 0; c < d.c; ++c) {
        const double* g = dout + c * ho * wo;
        double* s = din + c * d.h * d.w;
        for (std::size_t y = 0; y < ho; ++y) {
            for (std::size_t x = 0; x < wo; ++x) {
                const auto base = 2 * y * d.w + 2 * x;
                const double v = 0.25 * g[y * wo + x];
                s[base] += v;
                s[base + 1] += v;
                s[base + d.w] += v;
                s[base + d.w + 1] += v;
            }
        }
    }
}

struct Activations {
    std::vector<double> s1, p1, s2, p2, logits;
};

struct Geometry {
    Dims in, c1, p1, c2, p2;
};

Geometry geometry(const LeNetModel& m) {
    Geometry g{};
    g.in = {1, m.height, m.width};
    g.c1 = {m.channels, m.height, m.width};
    g.p1 = {m.channels, m.height / 2, m.width / 2};
    g.c2 = {2 * m.channels, m.height / 2, m.width / 2};
    g.p2 = {2 * m.channels, m.height / 4, m.width / 4};
    return g;
}

void run_forward(const LeNetModel& m, const Geometry& g, std::span<const double> x, Activations& a) {
    a.s1.assign(g.c1.size(), 0.0);
    a.p1.assign(g.p1.size(), 0.0);
    a.s2.assign(g.c2.size(), 0.0);
    a.p2.assign(g.p2.size(), 0.0);
    a.logits.assign(m.classes, 0.0);
    conv_forward(x.data(), g.in, m.conv1_weight, m.conv1_bias, m.channels, a.s1.data());
    for (auto& v : a.s1) v = sigmoid(v);
    pool_forward(a.s1.data(), g.c1, a.p1.data());
    conv_forward(a.p1.data(), g.p1, m.conv2_weight, m.conv2_bias, 2 * m.channels, a.s2.data());
    for (auto& v : a.s2) v = sigmoid(v);
    pool_forward(a.s2.data(), g.c2, a.p2.data());
    for (std::size_t j = 0; j < m.classes; ++j) a.logits[j] = m.fc_bias[j];
    for (std::size_t f = 0; f < a.p2.size(); ++f) {
        const double v = a.p2[f];
        const double* w = m.fc_weight.values().data() + f * m.classes;
        for (std::size_t j = 0; j < m.classes; ++j) a.logits[j] += w[j] * v;
    }
}

void check_inputs(const LeNetModel& m, const Tensor& inputs) {
    if (inputs.rank() < 2 || inputs.row_size() != m.height * m.width) {
        throw ShapeError("LeNet expects inputs of " + std::to_string(m.height) + "x" + std::to_string(m.width) +
                         " per sample, got " + to_string(inputs.shape()));
    }
}

}  // namespace

Tensor lenet_forward(const LeNetModel& m, const Tensor& inputs) {
    check_inputs(m, inputs);
    const auto g = geometry(m);
    const auto b = inputs.dim(0);
    Tensor out({b, m.classes});
    Activations a;
    for (std::size_t s = 0; s < b; ++s) {
        run_forward(m, g, inputs.row(s), a);
        std::copy(a.logits.begin(), a.logits.end(), out.row(s).begin());
    }
    return out;
}

BackwardResult lenet_backward(const LeNetModel& m, const Tensor& inputs, const Tensor& targets, LossKind kind,
                              const BackwardOptions& opt) {
    check_inputs(m, inputs);
    const auto b = inputs.dim(0);
    if (targets.rank() != 2 || targets.dim(0) != b || targets.dim(1) != m.classes) {
        throw ShapeError("LeNet backward: targets must be [B x C]");
    }
    const auto g = geometry(m);
    const double inv_b = 1.0 / static_cast<double>(b);

    std::vector<Tensor> grads;
    for (const Tensor* p : {&m.conv1_weight, &m.conv1_bias, &m.conv2_weight, &m.conv2_bias, &m.fc_weight, &m.fc_bias}) {
        Tensor::Shape shape = p->shape();
        if (opt.per_sample) shape.insert(shape.begin(), b);
        grads.emplace_back(shape);
    }

    BackwardResult r;
    if (opt.input_gradient) r.input_gradient = Tensor(inputs.shape());
    if (opt.target_gradient) r.target_gradient = Tensor({b, m.classes});

    Activations a;
    std::vector<double> delta(m.classes), dp2, ds2, dp1, ds1;
    double total = 0.0;
    for (std::size_t s = 0; s < b; ++s) {
        const auto x = inputs.row(s);
        run_forward(m, g, x, a);
        total += logit_space::loss_and_delta(a.logits, targets.row(s), kind, delta);
        if (opt.target_gradient) {
            auto gy = r.target_gradient.row(s);
            logit_space::loss_target_gradient(a.logits, targets.row(s), kind, gy);
            for (auto& v : gy) v *= inv_b;
        }
        const double scale = opt.per_sample ? 1.0 : inv_b;
        for (auto& d : delta) d *= scale;

        auto slot = [&](std::size_t param) -> double* {
            auto& t = grads[param];
            return t.values().data() + (opt.per_sample ? s * t.row_size() : 0);
        };

        // Dense classifier.
        double* dfw = slot(4);
        double* dfb = slot(5);
        dp2.assign(a.p2.size(), 0.0);
        for (std::size_t j = 0; j < m.classes; ++j) dfb[j] += delta[j];
        for (std::size_t f = 0; f < a.p2.size(); ++f) {
            const double* w = m.fc_weight.values().data() + f * m.classes;
            double acc = 0.0;
            for (std::size_t j = 0; j < m.classes; ++j) {
                dfw[f * m.classes + j] += a.p2[f] * delta[j];
                acc += w[j] * delta[j];
            }
            dp2[f] = acc;
        }

        // Second block.
        ds2.assign(a.s2.size(), 0.0);
        pool_backward(dp2.data(), g.c2, ds2.data());
        for (std::size_t i = 0; i < ds2.size(); ++i) ds2[i] *= a.s2[i] * (1.0 - a.s2[i]);
        dp1.assign(a.p1.size(), 0.0);
        conv_backward(a.p1.data(), g.p1, m.conv2_weight, 2 * m.channels, ds2.data(), slot(2), slot(3), dp1.data());

        // First block.
        ds1.assign(a.s1.size(), 0.0);
        pool_backward(dp1.data(), g.c1, ds1.data());
        for (std::size_t i = 0; i < ds1.size(); ++i) ds1[i] *= a.s1[i] * (1.0 - a.s1[i]);
        double* dx = nullptr;
        std::vector<double> dx_local;
        if (opt.input_gradient) {
            dx_local.assign(x.size(), 0.0);
            dx = dx_local.data();
        }
        conv_backward(x.data(), g.in, m.conv1_weight, m.channels, ds1.data(), slot(0), slot(1), dx);
        if (opt.input_gradient) {
            // dx carries the same scale as delta; the input gradient is of the batch mean loss.
            const double fix = opt.per_sample ? inv_b : 1.0;
            auto out = r.input_gradient.row(s);
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = fix * dx_local[i];
        }
    }
    r.mean_loss = total * inv_b;
    r.gradients.tensors = std::move(grads);
    r.gradients.per_sample = opt.per_sample;
    return r;
}

}  // namespace gradlab::detail

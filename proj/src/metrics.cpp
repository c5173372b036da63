#include "gradlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gradlab {

namespace {

void require_image(const Tensor& t, const char* who) {
    if (t.rank() != 2) throw ShapeError(std::string(who) + ": expected an [H x W] image, got " + to_string(t.shape()));
}

std::vector<double> abs_gradient(const Tensor& image) {
    const auto g = spatial_gradient(image);
    std::vector<double> out(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = std::abs(g[i]);
    return out;
}

}  // namespace

Tensor spatial_gradient(const Tensor& v) {
    require_image(v, "spatial_gradient");
    const auto h = v.dim(0);
    const auto w = v.dim(1);
    if (h < 2 || w < 2) throw ShapeError("spatial_gradient: both dimensions must be at least 2");
    Tensor g({h, w});
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double here = v[y * w + x];
            double d = 0.0;
            if (x + 1 < w) d += v[y * w + x + 1] - here;
            if (y + 1 < h) d += v[(y + 1) * w + x] - here;
            g[y * w + x] = d;
        }
    }
    return g;
}

double avd(const Tensor& source, const Tensor& target) {
    require_same_shape(source, target, "avd");
    const auto a = abs_gradient(source);
    const auto b = abs_gradient(target);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(acc);
}

double normalized_avd(const Tensor& source, const Tensor& target, const Tensor& init_noise) {
    const double div = avd(init_noise, Tensor(init_noise.shape()));
    if (!(div > 0.0)) throw std::domain_error("normalized_avd: initial image has no spatial variation");
    return avd(source, target) / div;
}

double normalized_mse(const Tensor& source, const Tensor& target, const Tensor& init_noise) {
    require_same_shape(source, target, "normalized_mse");
    require_same_shape(source, init_noise, "normalized_mse");
    double num = 0.0;
    double div = 0.0;
    for (std::size_t i = 0; i < source.size(); ++i) {
        num += (source[i] - target[i]) * (source[i] - target[i]);
        div += init_noise[i] * init_noise[i];
    }
    if (!(div > 0.0)) throw std::domain_error("normalized_mse: initial image is black");
    return num / div;
}

double entropy_variation(const Tensor& source, const Tensor& target, EntropyVariationConfig cfg) {
    if (!(cfg.p0 > 0.0 && cfg.p0 < 1.0)) throw std::invalid_argument("entropy_variation: p0 must lie in (0, 1)");
    require_same_shape(source, target, "entropy_variation");
    const auto a = abs_gradient(source);
    const auto b = abs_gradient(target);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::log(a[i] + cfg.eps) - std::log(b[i] + cfg.eps);
    return -cfg.p0 * acc;
}

bool classify_success(double value, double threshold) {
    return value < threshold;
}

LeakageReport leakage_report(const Tensor& source, const Tensor& recovered, const Tensor& init_noise,
                             const std::vector<double>& thresholds, MetricKind success_metric) {
    LeakageReport r;
    r.avd_raw = avd(source, recovered);
    r.avd_normalized = normalized_avd(source, recovered, init_noise);
    r.mse_normalized = normalized_mse(source, recovered, init_noise);
    const double v = success_metric == MetricKind::AVD ? r.avd_normalized : r.mse_normalized;
    for (double t : thresholds) r.success_at[t] = classify_success(v, t);
    return r;
}

BatchScore score_batch(const Tensor& sources, const Tensor& recovered, const Tensor& init_noise) {
    if (sources.rank() != 3 || recovered.rank() != 3) throw ShapeError("score_batch expects [B x H x W] batches");
    require_same_shape(recovered, init_noise, "score_batch");
    if (sources.shape()[1] != recovered.shape()[1] || sources.shape()[2] != recovered.shape()[2]) {
        throw ShapeError("score_batch: image sizes differ");
    }
    BatchScore best{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    for (std::size_t k = 0; k < recovered.dim(0); ++k) {
        const Tensor rec = recovered.slice(k);
        const Tensor init = init_noise.slice(k);
        for (std::size_t m = 0; m < sources.dim(0); ++m) {
            const Tensor src = sources.slice(m);
            best.normalized_avd = std::min(best.normalized_avd, normalized_avd(src, rec, init));
            best.normalized_mse = std::min(best.normalized_mse, normalized_mse(src, rec, init));
        }
    }
    return best;
}

}  // namespace gradlab

#pragma once

#include <map>
#include <vector>

#include "gradlab/tensor.hpp"

namespace gradlab {

/// Forward difference in x plus forward difference in y; the difference
/// past the last column (row) is taken as zero. Needs H, W >= 2.
[[nodiscard]] Tensor spatial_gradient(const Tensor& image);

/// L2 norm over pixels of |grad source| - |grad target|.
[[nodiscard]] double avd(const Tensor& source, const Tensor& target);

/// avd(source, target) / avd(init_noise, black).
[[nodiscard]] double normalized_avd(const Tensor& source, const Tensor& target, const Tensor& init_noise);

/// mean((source - target)^2) / mean(init_noise^2).
[[nodiscard]] double normalized_mse(const Tensor& source, const Tensor& target, const Tensor& init_noise);

struct EntropyVariationConfig {
    double p0 = 0.5;
    double eps = 1e-8;
};

/// -p0 * sum over pixels of log(|grad source| + eps) - log(|grad target| + eps).
[[nodiscard]] double entropy_variation(const Tensor& source, const Tensor& target, EntropyVariationConfig cfg = {});

/// Strictly below the threshold counts as a recovery.
[[nodiscard]] bool classify_success(double value, double threshold);

enum class MetricKind { AVD, MSE };

struct LeakageReport {
    double avd_raw = 0.0;
    double avd_normalized = 0.0;
    double mse_normalized = 0.0;
    std::map<double, bool> success_at;
};

/// Scores one recovered image against one source.
[[nodiscard]] LeakageReport leakage_report(const Tensor& source, const Tensor& recovered, const Tensor& init_noise,
                                           const std::vector<double>& thresholds, MetricKind success_metric);

/// Batch score: every recovered image is compared with every source and the
/// smallest metric wins. Inputs are [B x H x W]; init_noise rows pair with
/// the recovered rows.
struct BatchScore {
    double normalized_avd = 0.0;
    double normalized_mse = 0.0;
};
[[nodiscard]] BatchScore score_batch(const Tensor& sources, const Tensor& recovered, const Tensor& init_noise);

}  // namespace gradlab

#include "gradlab/direct_inversion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "gradlab/numerics.hpp"

namespace gradlab {

std::optional<std::span<const double>> DirectInversionEstimate::estimate_for(std::size_t j) const {
    const auto it = std::lower_bound(classes.begin(), classes.end(), j);
    if (it == classes.end() || *it != j) return std::nullopt;
    return estimates.row(static_cast<std::size_t>(it - classes.begin()));
}

DirectInversionEstimate invert_dense_batch(const Tensor& grad_w, const Tensor& grad_b, double eps) {
    if (grad_w.rank() != 2 || grad_b.rank() != 1 || grad_w.dim(1) != grad_b.dim(0)) {
        throw ShapeError("invert_dense_batch: expected grad_W [n x C] and grad_b [C], got " +
                         to_string(grad_w.shape()) + " and " + to_string(grad_b.shape()));
    }
    const auto n = grad_w.dim(0);
    const auto c = grad_w.dim(1);
    DirectInversionEstimate est;
    for (std::size_t j = 0; j < c; ++j) {
        (std::abs(grad_b[j]) > eps ? est.classes : est.skipped).push_back(j);
    }
    if (est.classes.empty()) throw std::domain_error("invert_dense_batch: every bias gradient is below threshold");
    est.estimates = Tensor({est.classes.size(), n});
    for (std::size_t k = 0; k < est.classes.size(); ++k) {
        const auto j = est.classes[k];
        auto row = est.estimates.row(k);
        for (std::size_t i = 0; i < n; ++i) row[i] = grad_w[i * c + j] / grad_b[j];
    }
    return est;
}

DirectInversionEstimate invert_dense_batch(const GradientBundle& bundle, double eps) {
    if (bundle.per_sample || bundle.tensors.size() != 2) {
        throw ShapeError("invert_dense_batch: expected the averaged bundle of a dense model");
    }
    return invert_dense_batch(bundle.tensors[0], bundle.tensors[1], eps);
}

LabelInference infer_label_distribution(const Tensor& grad_b, std::size_t classes, std::size_t batch_size) {
    if (grad_b.rank() != 1 || grad_b.dim(0) != classes) throw ShapeError("infer_label_distribution: grad_b must be [C]");
    if (batch_size == 0) throw std::invalid_argument("infer_label_distribution: B must be positive");
    const double b = static_cast<double>(batch_size);
    const double uniform = 1.0 / static_cast<double>(classes);

    LabelInference out;
    out.counts.assign(classes, 0);
    std::size_t total = 0;
    for (std::size_t j = 0; j < classes; ++j) {
        if (grad_b[j] >= 0.0) continue;
        const double raw = std::round(b * (uniform - grad_b[j]));
        out.counts[j] = static_cast<std::size_t>(std::clamp(raw, 1.0, b));
        total += out.counts[j];
    }

    // Most negative bias gradient first: strongest evidence of presence.
    std::vector<std::size_t> order(classes);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto c) { return grad_b[a] < grad_b[c]; });

    auto counts = out.counts;
    std::size_t have = total;
    for (std::size_t k = 0; have < batch_size; k = (k + 1) % classes) {
        ++counts[order[k]];
        ++have;
    }
    for (std::size_t k = classes; have > batch_size;) {
        k = (k == 0 ? classes : k) - 1;
        if (counts[order[k]] > 0) {
            --counts[order[k]];
            --have;
        }
    }
    for (std::size_t j = 0; j < classes; ++j) out.labels.insert(out.labels.end(), counts[j], j);
    out.confidence = (classes >= 10 * batch_size && total == batch_size) ? Confidence::High : Confidence::Low;
    return out;
}

GradientBundle apply_noise_defense(const GradientBundle& bundle, double sigma, SeededRng& rng) {
    if (!(sigma >= 0.0)) throw std::invalid_argument("apply_noise_defense: sigma must be non-negative");
    GradientBundle out = bundle;
    if (sigma == 0.0) return out;
    for (auto& t : out.tensors) {
        for (auto& v : t.values()) v += sigma * rng.normal();
    }
    return out;
}

std::size_t LogHistogram::bin_of(double value) {
    if (!(value > 0.0)) return 0;
    const double pos = (std::log10(value) - kLow) / kWidth;
    if (pos < 0.0) return 0;
    return std::min(static_cast<std::size_t>(pos), kBins - 1);
}

void LogHistogram::add(double value) {
    ++counts[bin_of(value)];
}

void LogHistogram::merge(const LogHistogram& other) {
    for (std::size_t i = 0; i < kBins; ++i) counts[i] += other.counts[i];
}

std::size_t LogHistogram::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

InversionError inversion_error(const DirectInversionEstimate& estimate, const Batch& batch) {
    const auto n = batch.inputs.row_size();
    if (estimate.estimates.row_size() != n) throw ShapeError("inversion_error: estimate and batch sizes differ");
    InversionError err;
    for (std::size_t m = 0; m < batch.size(); ++m) {
        const auto est = estimate.estimate_for(batch.labels[m]);
        if (!est) continue;
        const auto x = batch.inputs.row(m);
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += std::abs((*est)[i] - x[i]);
        const double e = acc / static_cast<double>(n);
        err.per_vector.push_back(e);
        err.matched.push_back(m);
        err.histogram.add(e);
    }
    if (err.per_vector.empty()) throw std::invalid_argument("inversion_error: no estimate matches a batch label");
    err.median = median(err.per_vector);
    err.mean = mean(err.per_vector);
    return err;
}

void write_histogram_header(std::ostream& out) {
    out << "experiment_id,strategy,loss_kind,B,C,sigma,log10_error_bin,count\n";
}

void write_histogram_rows(std::ostream& out, const HistogramKey& key, const LogHistogram& hist) {
    for (std::size_t i = 0; i < LogHistogram::kBins; ++i) {
        char tail[96];
        std::snprintf(tail, sizeof tail, "%zu,%zu,%g,%.2f,%zu\n", key.batch_size, key.classes, key.sigma,
                      LogHistogram::lower_edge(i), hist.counts[i]);
        out << key.experiment_id << ',' << key.strategy << ',' << key.loss << ',' << tail;
    }
}

}  // namespace gradlab

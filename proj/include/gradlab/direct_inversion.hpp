#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gradlab/datasets.hpp"
#include "gradlab/models.hpp"
#include "gradlab/rng.hpp"
#include "gradlab/tensor.hpp"

namespace gradlab {

inline constexpr double kDivisorEpsilon = 1e-8;

/// Per-class input estimates x^(j) = grad_W[:, j] / grad_b[j].
struct DirectInversionEstimate {
    std::vector<std::size_t> classes;  ///< classes with |grad_b[j]| > eps, ascending
    Tensor estimates;                  ///< [classes.size() x n], row k belongs to classes[k]
    std::vector<std::size_t> skipped;  ///< classes below the divisor threshold

    /// Row for class j, if it was invertible.
    [[nodiscard]] std::optional<std::span<const double>> estimate_for(std::size_t j) const;
};

/// Throws std::domain_error when no bias gradient clears the threshold.
[[nodiscard]] DirectInversionEstimate invert_dense_batch(const Tensor& grad_w, const Tensor& grad_b,
                                                         double eps = kDivisorEpsilon);
/// Same, taking the averaged bundle of a dense model.
[[nodiscard]] DirectInversionEstimate invert_dense_batch(const GradientBundle& bundle, double eps = kDivisorEpsilon);

enum class Confidence { Low, High };

struct LabelInference {
    std::vector<std::size_t> labels;  ///< inferred multiset, ascending, size B
    std::vector<std::size_t> counts;  ///< raw per-class count estimate
    Confidence confidence = Confidence::Low;
};

/// Labels of a batch read off the signs of the averaged bias gradient.
///
/// Classes with a negative bias gradient are present; the count for class
/// j is round(B * (1/C - grad_b[j])) clamped to [1, B]. The returned
/// multiset is padded or trimmed to exactly B labels, largest evidence
/// first. Confidence is High only when C >= 10 B and the raw counts already
/// summed to B.
[[nodiscard]] LabelInference infer_label_distribution(const Tensor& grad_b, std::size_t classes,
                                                      std::size_t batch_size);

/// Adds independent N(0, sigma^2) noise to every entry of every tensor.
[[nodiscard]] GradientBundle apply_noise_defense(const GradientBundle& bundle, double sigma, SeededRng& rng);

/// Counts of log10 values in fixed-width bins. Values below the first edge,
/// including exact zeros, land in bin 0; values above the last edge in the
/// last bin.
struct LogHistogram {
    static constexpr double kLow = -16.0;
    static constexpr double kHigh = 2.0;
    static constexpr double kWidth = 0.25;
    static constexpr std::size_t kBins = 72;

    std::vector<std::size_t> counts = std::vector<std::size_t>(kBins, 0);

    void add(double value);
    void merge(const LogHistogram& other);
    [[nodiscard]] static std::size_t bin_of(double value);
    [[nodiscard]] static double lower_edge(std::size_t bin) { return kLow + kWidth * static_cast<double>(bin); }
    [[nodiscard]] std::size_t total() const;
};

struct InversionError {
    std::vector<double> per_vector;  ///< mean absolute pixel error of each matched sample
    std::vector<std::size_t> matched;  ///< batch rows that had an estimate
    double median = 0.0;
    double mean = 0.0;
    LogHistogram histogram;
};

/// Compares estimates with the batch, pairing each sample with the estimate
/// of its true label. Throws std::invalid_argument if nothing pairs up.
[[nodiscard]] InversionError inversion_error(const DirectInversionEstimate& estimate, const Batch& batch);

struct HistogramKey {
    std::string experiment_id;
    std::string strategy;
    std::string loss;
    std::size_t batch_size = 0;
    std::size_t classes = 0;
    double sigma = 0.0;
};

void write_histogram_header(std::ostream& out);
/// One row per bin: experiment_id,strategy,loss,B,C,sigma,log10_error_bin,count
void write_histogram_rows(std::ostream& out, const HistogramKey& key, const LogHistogram& hist);

}  // namespace gradlab

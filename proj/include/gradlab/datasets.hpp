#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gradlab/rng.hpp"
#include "gradlab/tensor.hpp"

namespace gradlab {

/// Malformed or inconsistent data file.
class DataFormatError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Requested batch cannot be drawn under the chosen strategy.
class InfeasibleBatch : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

enum class SamplingStrategy { RandomLabels, EqualLabels, UniqueLabels };

[[nodiscard]] std::string_view to_string(SamplingStrategy s) noexcept;
[[nodiscard]] SamplingStrategy parse_strategy(std::string_view text);

/// Labelled grayscale images, pixels in [0, 1].
class Dataset {
  public:
    Dataset(std::string name, Tensor images, std::vector<std::size_t> labels, std::size_t num_classes);

    [[nodiscard]] const std::string& name() const noexcept { return name_; }
    [[nodiscard]] const Tensor& images() const noexcept { return images_; }
    [[nodiscard]] const std::vector<std::size_t>& labels() const noexcept { return labels_; }
    [[nodiscard]] std::size_t num_classes() const noexcept { return num_classes_; }
    [[nodiscard]] std::size_t size() const noexcept { return labels_.size(); }
    [[nodiscard]] std::size_t height() const noexcept { return images_.shape()[1]; }
    [[nodiscard]] std::size_t width() const noexcept { return images_.shape()[2]; }
    [[nodiscard]] std::size_t pixels() const noexcept { return height() * width(); }

    [[nodiscard]] std::span<const double> image(std::size_t i) const { return images_.row(i); }
    /// Indices of every sample carrying label c.
    [[nodiscard]] const std::vector<std::size_t>& indices_of(std::size_t c) const { return by_class_.at(c); }

    /// First n samples (or all, when n is 0 or >= size).
    [[nodiscard]] Dataset head(std::size_t n) const;

  private:
    std::string name_;
    Tensor images_;
    std::vector<std::size_t> labels_;
    std::size_t num_classes_;
    std::vector<std::vector<std::size_t>> by_class_;
};

struct Batch {
    Tensor inputs;  ///< [B x H x W]
    std::vector<std::size_t> labels;
    std::vector<std::size_t> indices;  ///< rows of the source dataset
    SamplingStrategy strategy = SamplingStrategy::RandomLabels;

    [[nodiscard]] std::size_t size() const noexcept { return labels.size(); }
};

/// Reads an IDX image file (magic 0x803) and label file (magic 0x801).
[[nodiscard]] Dataset load_mnist_idx(const std::filesystem::path& images_path,
                                     const std::filesystem::path& labels_path);

/// Loads `<split>-images-idx3-ubyte` / `<split>-labels-idx1-ubyte` from dir.
[[nodiscard]] Dataset load_mnist_split(const std::filesystem::path& dir, std::string_view split);

/// Writes pixels (rounded to bytes) and labels as IDX files.
void write_idx(const Dataset& data, const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

/// Smooth random fields standing in for a face dataset with many classes.
///
/// Every sample is a sum of four random low-frequency cosine modes plus two
/// modes shared by its class, min-max scaled into [0, 1].
[[nodiscard]] Dataset make_synthetic(std::size_t num_classes, std::size_t per_class, std::size_t height,
                                     std::size_t width, SeededRng& rng);

[[nodiscard]] Batch sample_batch(const Dataset& data, SamplingStrategy strategy, std::size_t batch_size, SeededRng& rng);

/// Batch made of explicit dataset rows.
[[nodiscard]] Batch gather(const Dataset& data, std::span<const std::size_t> indices,
                           SamplingStrategy strategy = SamplingStrategy::RandomLabels);

}  // namespace gradlab

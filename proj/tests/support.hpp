#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <span>

#include "gradlab/datasets.hpp"
#include "gradlab/models.hpp"
#include "gradlab/numerics.hpp"

namespace support {

inline std::filesystem::path data_dir() {
    if (const char* env = std::getenv("GRADLAB_DATA_DIR"); env && *env) return env;
    return GRADLAB_TEST_DATA_DIR;
}

inline bool have_mnist() {
    const auto d = data_dir();
    return std::filesystem::exists(d / "train-images-idx3-ubyte") &&
           std::filesystem::exists(d / "train-labels-idx1-ubyte") &&
           std::filesystem::exists(d / "t10k-images-idx3-ubyte") &&
           std::filesystem::exists(d / "t10k-labels-idx1-ubyte");
}

inline const gradlab::Dataset& mnist_train() {
    static const gradlab::Dataset d = gradlab::load_mnist_split(data_dir(), "train");
    return d;
}

inline const gradlab::Dataset& mnist_test() {
    static const gradlab::Dataset d = gradlab::load_mnist_split(data_dir(), "t10k");
    return d;
}

// |a - b| / max(|a|, |b|) over whole vectors; 0 when both vanish.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double scale = std::sqrt(std::max(na, nb));
    return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

inline gradlab::Tensor random_targets(std::size_t b, std::size_t c, gradlab::SeededRng& rng) {
    std::vector<std::size_t> labels(b);
    for (auto& l : labels) l = rng.below(c);
    return gradlab::one_hot(labels, c);
}

}  // namespace support

#define SKIP_WITHOUT_MNIST()                                                  \
    do {                                                                      \
        if (!support::have_mnist()) {                                         \
            MESSAGE("MNIST not found under " << support::data_dir().string()); \
            return;                                                           \
        }                                                                     \
    } while (0)

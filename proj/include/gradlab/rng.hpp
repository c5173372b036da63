#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string_view>

#include "gradlab/tensor.hpp"

namespace gradlab {

/// Deterministic random stream keyed by (seed, stream_id).
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. Distributions are implemented here rather than with the
/// <random> adaptors, which are allowed to differ between standard
/// libraries. Two generators with the same key produce bit-identical draws
/// on every platform.
class SeededRng {
  public:
    explicit SeededRng(std::uint64_t seed, std::uint64_t stream_id = 0);

    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
    [[nodiscard]] std::uint64_t stream_id() const noexcept { return stream_id_; }

    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform01();
    double uniform(double lo, double hi);
    /// Standard normal, Box-Muller.
    double normal();
    /// Uniform integer in [0, n), unbiased.
    std::size_t below(std::size_t n);

    /// Independent generator for a sub-stream of this one's key.
    [[nodiscard]] SeededRng derive(std::uint64_t sub_stream) const;

  private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::mt19937_64 engine_;
    std::optional<double> spare_normal_;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Stable 64-bit stream id for a named work item, e.g. (cell key, trial).
std::uint64_t stream_key(std::string_view tag, std::uint64_t index) noexcept;

/// Elements drawn uniformly from [lo, hi).
Tensor uniform(SeededRng& rng, Tensor::Shape shape, double lo, double hi);

/// Elements drawn from N(0, stddev^2).
Tensor gaussian(SeededRng& rng, Tensor::Shape shape, double stddev);

}  // namespace gradlab

#include "gradlab/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace gradlab {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t stream_key(std::string_view tag, std::uint64_t index) noexcept {
    // FNV-1a over the tag, then mixed with the index.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return splitmix64(h ^ splitmix64(index));
}

SeededRng::SeededRng(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(splitmix64(seed ^ splitmix64(stream_id ^ 0x5851f42d4c957f2dULL))) {}

std::uint64_t SeededRng::next_u64() {
    return engine_();
}

double SeededRng::uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::uniform(double lo, double hi) {
    if (!(lo < hi)) throw std::invalid_argument("uniform: empty range, need lo < hi");
    const double v = lo + (hi - lo) * uniform01();
    return v < hi ? v : lo;
}

double SeededRng::normal() {
    if (spare_normal_) {
        const double v = *spare_normal_;
        spare_normal_.reset();
        return v;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_normal_ = r * std::sin(theta);
    return r * std::cos(theta);
}

std::size_t SeededRng::below(std::size_t n) {
    if (n == 0) throw std::invalid_argument("below: n must be positive");
    const std::uint64_t bound = n;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return static_cast<std::size_t>(v % bound);
}

SeededRng SeededRng::derive(std::uint64_t sub_stream) const {
    return SeededRng(seed_, splitmix64(stream_id_) ^ splitmix64(sub_stream + 0x2545f4914f6cdd1dULL));
}

Tensor uniform(SeededRng& rng, Tensor::Shape shape, double lo, double hi) {
    if (!(lo < hi)) throw std::invalid_argument("uniform: empty range, need lo < hi");
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

Tensor gaussian(SeededRng& rng, Tensor::Shape shape, double stddev) {
    if (!(stddev >= 0.0)) throw std::invalid_argument("gaussian: standard deviation must be >= 0");
    Tensor t(std::move(shape));
    if (stddev == 0.0) return t;
    for (auto& v : t.values()) v = stddev * rng.normal();
    return t;
}

}  // namespace gradlab

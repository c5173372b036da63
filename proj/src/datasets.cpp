#include "gradlab/datasets.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>

namespace gradlab {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(std::istream& in, const std::filesystem::path& path) {
    std::array<unsigned char, 4> b{};
    if (!in.read(reinterpret_cast<char*>(b.data()), 4)) {
        throw DataFormatError(path.string() + ": truncated header");
    }
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
    const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                                static_cast<char>(v)};
    out.write(b.data(), 4);
}

std::ifstream open_binary(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataFormatError(path.string() + ": cannot open");
    return in;
}

std::vector<unsigned char> read_payload(std::istream& in, std::size_t count, const std::filesystem::path& path) {
    std::vector<unsigned char> bytes(count);
    if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(count))) {
        throw DataFormatError(path.string() + ": truncated payload, expected " + std::to_string(count) + " bytes");
    }
    return bytes;
}

}  // namespace

std::string_view to_string(SamplingStrategy s) noexcept {
    switch (s) {
        case SamplingStrategy::RandomLabels: return "random";
        case SamplingStrategy::EqualLabels: return "equal";
        case SamplingStrategy::UniqueLabels: return "unique";
    }
    return "?";
}

SamplingStrategy parse_strategy(std::string_view text) {
    if (text == "random") return SamplingStrategy::RandomLabels;
    if (text == "equal") return SamplingStrategy::EqualLabels;
    if (text == "unique") return SamplingStrategy::UniqueLabels;
    throw std::invalid_argument("unknown sampling strategy '" + std::string(text) + "' (random|equal|unique)");
}

Dataset::Dataset(std::string name, Tensor images, std::vector<std::size_t> labels, std::size_t num_classes)
    : name_(std::move(name)), images_(std::move(images)), labels_(std::move(labels)), num_classes_(num_classes) {
    if (images_.rank() != 3) throw ShapeError("dataset images must be [N x H x W]");
    if (images_.dim(0) != labels_.size()) throw DataFormatError("dataset: image/label count mismatch");
    if (labels_.empty()) throw DataFormatError("dataset: no samples");
    if (num_classes_ < 2) throw DataFormatError("dataset: need at least two classes");
    for (double v : images_.values()) {
        if (!(v >= 0.0 && v <= 1.0)) throw DataFormatError("dataset: pixel outside [0, 1]");
    }
    by_class_.resize(num_classes_);
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        if (labels_[i] >= num_classes_) throw DataFormatError("dataset: label out of range");
        by_class_[labels_[i]].push_back(i);
    }
}

Dataset Dataset::head(std::size_t n) const {
    if (n == 0 || n >= size()) return *this;
    const auto stride = pixels();
    std::vector<double> pix(images_.data().begin(), images_.data().begin() + static_cast<std::ptrdiff_t>(n * stride));
    return Dataset(name_, Tensor({n, height(), width()}, std::move(pix)),
                   std::vector<std::size_t>(labels_.begin(), labels_.begin() + static_cast<std::ptrdiff_t>(n)),
                   num_classes_);
}

Dataset load_mnist_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
    auto img = open_binary(images_path);
    if (auto magic = read_be32(img, images_path); magic != kImageMagic) {
        throw DataFormatError(images_path.string() + ": bad magic number for an IDX image file");
    }
    const auto n = read_be32(img, images_path);
    const auto h = read_be32(img, images_path);
    const auto w = read_be32(img, images_path);
    if (n == 0 || h == 0 || w == 0) throw DataFormatError(images_path.string() + ": empty dimensions");
    const auto pixels = read_payload(img, std::size_t{n} * h * w, images_path);

    auto lab = open_binary(labels_path);
    if (auto magic = read_be32(lab, labels_path); magic != kLabelMagic) {
        throw DataFormatError(labels_path.string() + ": bad magic number for an IDX label file");
    }
    const auto nl = read_be32(lab, labels_path);
    if (nl != n) {
        throw DataFormatError("image/label count mismatch: " + std::to_string(n) + " images, " + std::to_string(nl) +
                              " labels");
    }
    const auto label_bytes = read_payload(lab, nl, labels_path);

    std::vector<double> data(pixels.size());
    std::transform(pixels.begin(), pixels.end(), data.begin(), [](unsigned char b) { return b / 255.0; });
    std::vector<std::size_t> labels(label_bytes.begin(), label_bytes.end());
    for (auto l : labels) {
        if (l >= 10) throw DataFormatError(labels_path.string() + ": label outside 0..9");
    }
    return Dataset("mnist", Tensor({n, h, w}, std::move(data)), std::move(labels), 10);
}

Dataset load_mnist_split(const std::filesystem::path& dir, std::string_view split) {
    const std::string s(split);
    return load_mnist_idx(dir / (s + "-images-idx3-ubyte"), dir / (s + "-labels-idx1-ubyte"));
}

void write_idx(const Dataset& data, const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
    std::ofstream img(images_path, std::ios::binary);
    std::ofstream lab(labels_path, std::ios::binary);
    if (!img || !lab) throw std::runtime_error("write_idx: cannot open output files");
    write_be32(img, kImageMagic);
    write_be32(img, static_cast<std::uint32_t>(data.size()));
    write_be32(img, static_cast<std::uint32_t>(data.height()));
    write_be32(img, static_cast<std::uint32_t>(data.width()));
    for (double v : data.images().values()) {
        img.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
    }
    write_be32(lab, kLabelMagic);
    write_be32(lab, static_cast<std::uint32_t>(data.size()));
    for (auto l : data.labels()) {
        if (l > 255) throw std::runtime_error("write_idx: label does not fit in a byte");
        lab.put(static_cast<char>(static_cast<unsigned char>(l)));
    }
    if (!img || !lab) throw std::runtime_error("write_idx: write failed");
}

namespace {

struct CosineMode {
    double fx, fy, phase, amplitude;
};

CosineMode draw_mode(SeededRng& rng) {
    CosineMode m{};
    do {
        m.fx = static_cast<double>(rng.below(4));
        m.fy = static_cast<double>(rng.below(4));
    } while (m.fx == 0.0 && m.fy == 0.0);
    m.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    m.amplitude = rng.uniform(0.5, 1.0);
    return m;
}

}  // namespace

Dataset make_synthetic(std::size_t num_classes, std::size_t per_class, std::size_t height, std::size_t width,
                       SeededRng& rng) {
    if (num_classes < 2) throw std::invalid_argument("make_synthetic: need at least two classes");
    if (per_class == 0) throw std::invalid_argument("make_synthetic: need at least one sample per class");
    if (height == 0 || width == 0) throw std::invalid_argument("make_synthetic: empty image size");

    constexpr std::size_t kClassModes = 2;
    constexpr std::size_t kSampleModes = 4;
    const std::size_t n = num_classes * per_class;
    const std::size_t px = height * width;
    Tensor images({n, height, width});
    std::vector<std::size_t> labels(n);
    std::vector<double> field(px);

    auto add_mode = [&](const CosineMode& m, double scale) {
        for (std::size_t y = 0; y < height; ++y) {
            for (std::size_t x = 0; x < width; ++x) {
                const double arg = 2.0 * std::numbers::pi *
                                       (m.fx * static_cast<double>(x) / static_cast<double>(width) +
                                        m.fy * static_cast<double>(y) / static_cast<double>(height)) +
                                   m.phase;
                field[y * width + x] += scale * m.amplitude * std::cos(arg);
            }
        }
    };

    for (std::size_t c = 0; c < num_classes; ++c) {
        auto class_rng = rng.derive(c);
        std::array<CosineMode, kClassModes> modes{};
        for (auto& m : modes) m = draw_mode(class_rng);
        for (std::size_t k = 0; k < per_class; ++k) {
            std::fill(field.begin(), field.end(), 0.0);
            for (const auto& m : modes) add_mode(m, 1.0);
            auto sample_rng = class_rng.derive(k);
            for (std::size_t s = 0; s < kSampleModes; ++s) add_mode(draw_mode(sample_rng), 1.0);
            const auto [lo, hi] = std::minmax_element(field.begin(), field.end());
            const double span = *hi - *lo;
            const std::size_t row = c * per_class + k;
            auto out = images.row(row);
            for (std::size_t i = 0; i < px; ++i) {
                out[i] = span > 0.0 ? (field[i] - *lo) / span : 0.5;
            }
            labels[row] = c;
        }
    }
    // Consume one draw so callers sharing the stream see it advance.
    (void)rng.next_u64();
    return Dataset("synthetic", std::move(images), std::move(labels), num_classes);
}

Batch gather(const Dataset& data, std::span<const std::size_t> indices, SamplingStrategy strategy) {
    if (indices.empty()) throw InfeasibleBatch("batch size must be at least 1");
    Batch batch;
    batch.strategy = strategy;
    batch.inputs = Tensor({indices.size(), data.height(), data.width()});
    for (std::size_t m = 0; m < indices.size(); ++m) {
        const auto src = data.image(indices[m]);
        std::copy(src.begin(), src.end(), batch.inputs.row(m).begin());
        batch.labels.push_back(data.labels()[indices[m]]);
        batch.indices.push_back(indices[m]);
    }
    return batch;
}

Batch sample_batch(const Dataset& data, SamplingStrategy strategy, std::size_t batch_size, SeededRng& rng) {
    if (batch_size == 0) throw InfeasibleBatch("batch size must be at least 1");
    std::vector<std::size_t> picked;
    picked.reserve(batch_size);

    auto draw_distinct = [&](const std::vector<std::size_t>& pool, std::size_t count) {
        // Partial Fisher-Yates over a copy of the pool.
        std::vector<std::size_t> work(pool);
        for (std::size_t i = 0; i < count; ++i) {
            const auto j = i + rng.below(work.size() - i);
            std::swap(work[i], work[j]);
            picked.push_back(work[i]);
        }
    };

    std::vector<std::size_t> present;
    for (std::size_t c = 0; c < data.num_classes(); ++c) {
        if (!data.indices_of(c).empty()) present.push_back(c);
    }

    switch (strategy) {
        case SamplingStrategy::RandomLabels: {
            if (batch_size <= data.size()) {
                std::vector<std::size_t> all(data.size());
                for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
                draw_distinct(all, batch_size);
            } else {
                for (std::size_t i = 0; i < batch_size; ++i) picked.push_back(rng.below(data.size()));
            }
            break;
        }
        case SamplingStrategy::EqualLabels: {
            const auto c = present[rng.below(present.size())];
            const auto& pool = data.indices_of(c);
            if (pool.size() >= batch_size) {
                draw_distinct(pool, batch_size);
            } else {
                for (std::size_t i = 0; i < batch_size; ++i) picked.push_back(pool[rng.below(pool.size())]);
            }
            break;
        }
        case SamplingStrategy::UniqueLabels: {
            if (batch_size > present.size()) {
                throw InfeasibleBatch("unique labels need B <= number of classes (B=" + std::to_string(batch_size) +
                                      ", C=" + std::to_string(present.size()) + ")");
            }
            std::vector<std::size_t> work(present);
            for (std::size_t i = 0; i < batch_size; ++i) {
                const auto j = i + rng.below(work.size() - i);
                std::swap(work[i], work[j]);
                const auto& pool = data.indices_of(work[i]);
                picked.push_back(pool[rng.below(pool.size())]);
            }
            break;
        }
    }
    return gather(data, picked, strategy);
}

}  // namespace gradlab

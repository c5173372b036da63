#include "gradlab/serialization.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "gradlab/datasets.hpp"

namespace gradlab {

namespace {

constexpr char kModelMagic[8] = {'G', 'L', 'S', 'N', 'A', 'P', '1', '\0'};
constexpr char kBundleMagic[8] = {'G', 'L', 'G', 'R', 'A', 'D', '1', '\0'};
constexpr std::uint64_t kMaxDim = std::uint64_t{1} << 40;

void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char buf[8];
    if (!in.read(reinterpret_cast<char*>(buf), 8)) throw DataFormatError("truncated binary stream");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

void put_tensor(std::ostream& out, const Tensor& t) {
    put_u64(out, t.rank());
    for (auto d : t.shape()) put_u64(out, d);
    for (double v : t.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
}

Tensor get_tensor(std::istream& in) {
    const auto rank = get_u64(in);
    if (rank == 0 || rank > 8) throw DataFormatError("bad tensor rank " + std::to_string(rank));
    Tensor::Shape shape;
    std::uint64_t total = 1;
    for (std::uint64_t i = 0; i < rank; ++i) {
        const auto d = get_u64(in);
        if (d == 0 || d > kMaxDim || total > kMaxDim / d) throw DataFormatError("bad tensor dimension");
        total *= d;
        shape.push_back(static_cast<std::size_t>(d));
    }
    std::vector<double> data(static_cast<std::size_t>(total));
    for (auto& v : data) v = std::bit_cast<double>(get_u64(in));
    return Tensor(std::move(shape), std::move(data));
}

void expect_magic(std::istream& in, const char (&magic)[8], const char* what) {
    char buf[8];
    if (!in.read(buf, 8) || std::memcmp(buf, magic, 8) != 0) {
        throw DataFormatError(std::string("not a gradlab ") + what + " file");
    }
}

void check_shape(const Tensor& t, const Tensor::Shape& want, const char* what) {
    if (t.shape() != want) {
        throw DataFormatError(std::string("model file: ") + what + " has shape " + to_string(t.shape()) +
                              ", expected " + to_string(want));
    }
}

}  // namespace

void write_model(std::ostream& out, const Model& model) {
    out.write(kModelMagic, 8);
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, DenseModel>) {
                put_u64(out, 0);
            } else {
                put_u64(out, 1);
                put_u64(out, m.height);
                put_u64(out, m.width);
                put_u64(out, m.channels);
                put_u64(out, m.classes);
            }
        },
        model);
    for (const Tensor* p : parameters(model)) put_tensor(out, *p);
    if (!out) throw std::runtime_error("write_model: stream error");
}

Model read_model(std::istream& in) {
    expect_magic(in, kModelMagic, "model");
    const auto kind = get_u64(in);
    if (kind == 0) {
        DenseModel m;
        m.weight = get_tensor(in);
        m.bias = get_tensor(in);
        if (m.weight.rank() != 2) throw DataFormatError("model file: dense weight must be 2-D");
        check_shape(m.bias, {m.weight.dim(1)}, "bias");
        return m;
    }
    if (kind != 1) throw DataFormatError("model file: unknown model kind");
    LeNetModel m;
    m.height = get_u64(in);
    m.width = get_u64(in);
    m.channels = get_u64(in);
    m.classes = get_u64(in);
    const auto k = LeNetModel::kKernel;
    m.conv1_weight = get_tensor(in);
    m.conv1_bias = get_tensor(in);
    m.conv2_weight = get_tensor(in);
    m.conv2_bias = get_tensor(in);
    m.fc_weight = get_tensor(in);
    m.fc_bias = get_tensor(in);
    check_shape(m.conv1_weight, {m.channels, 1, k, k}, "conv1 weight");
    check_shape(m.conv1_bias, {m.channels}, "conv1 bias");
    check_shape(m.conv2_weight, {2 * m.channels, m.channels, k, k}, "conv2 weight");
    check_shape(m.conv2_bias, {2 * m.channels}, "conv2 bias");
    check_shape(m.fc_weight, {m.features(), m.classes}, "fc weight");
    check_shape(m.fc_bias, {m.classes}, "fc bias");
    return m;
}

void write_bundle(std::ostream& out, const GradientBundle& bundle) {
    out.write(kBundleMagic, 8);
    put_u64(out, bundle.per_sample ? 1 : 0);
    put_u64(out, bundle.tensors.size());
    for (const auto& t : bundle.tensors) put_tensor(out, t);
    if (!out) throw std::runtime_error("write_bundle: stream error");
}

GradientBundle read_bundle(std::istream& in) {
    expect_magic(in, kBundleMagic, "gradient bundle");
    GradientBundle b;
    b.per_sample = get_u64(in) != 0;
    const auto n = get_u64(in);
    if (n == 0 || n > 64) throw DataFormatError("gradient bundle: bad tensor count");
    for (std::uint64_t i = 0; i < n; ++i) b.tensors.push_back(get_tensor(in));
    return b;
}

void save_model(const std::filesystem::path& path, const Model& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
    write_model(out, model);
}

Model load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataFormatError(path.string() + ": cannot open");
    return read_model(in);
}

void save_bundle(const std::filesystem::path& path, const GradientBundle& bundle) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
    write_bundle(out, bundle);
}

GradientBundle load_bundle(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataFormatError(path.string() + ": cannot open");
    return read_bundle(in);
}

}  // namespace gradlab

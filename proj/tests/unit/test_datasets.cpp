#include <doctest.h>

#include <cstdint>
#include <fstream>
#include <iterator>
#include <set>

#include "gradlab/datasets.hpp"
#include "support.hpp"

using namespace gradlab;
namespace fs = std::filesystem;

namespace {

// Minimal reader kept separate from the library one.
struct RawIdx {
    std::uint32_t magic = 0;
    std::vector<std::uint32_t> dims;
    std::vector<unsigned char> payload;
};

RawIdx read_raw(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto be32 = [&](std::size_t off) {
        return (std::uint32_t(bytes[off]) << 24) | (std::uint32_t(bytes[off + 1]) << 16) |
               (std::uint32_t(bytes[off + 2]) << 8) | std::uint32_t(bytes[off + 3]);
    };
    RawIdx r;
    r.magic = be32(0);
    const std::size_t ndims = bytes[3];
    for (std::size_t d = 0; d < ndims; ++d) r.dims.push_back(be32(4 + 4 * d));
    r.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(4 + 4 * ndims), bytes.end());
    return r;
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> header(std::uint32_t magic, std::initializer_list<std::uint32_t> dims) {
    std::vector<unsigned char> out;
    auto put = [&](std::uint32_t v) {
        for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<unsigned char>(v >> s));
    };
    put(magic);
    for (auto d : dims) put(d);
    return out;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("gradlab_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

Dataset tiny_dataset() {
    Tensor images({6, 2, 2});
    for (std::size_t i = 0; i < images.size(); ++i) images[i] = static_cast<double>(i % 256) / 255.0;
    return Dataset("tiny", images, {0, 1, 2, 0, 1, 2}, 3);
}

}  // namespace

TEST_CASE("MNIST loader agrees with an independent reader") {
    SKIP_WITHOUT_MNIST();
    const auto dir = support::data_dir();
    const auto& d = support::mnist_train();
    const auto raw_img = read_raw(dir / "train-images-idx3-ubyte");
    const auto raw_lbl = read_raw(dir / "train-labels-idx1-ubyte");
    REQUIRE(raw_img.magic == 0x803);
    REQUIRE(raw_lbl.magic == 0x801);
    CHECK(d.size() == raw_img.dims[0]);
    CHECK(d.height() == 28);
    CHECK(d.width() == 28);
    CHECK(d.num_classes() == 10);
    CHECK(d.labels().front() == raw_lbl.payload.front());
    for (std::size_t i : {std::size_t{0}, d.size() / 2, d.size() - 1}) {
        CHECK(d.labels()[i] == raw_lbl.payload[i]);
        const auto img = d.image(i);
        for (std::size_t p = 0; p < img.size(); ++p) {
            CHECK(img[p] == static_cast<double>(raw_img.payload[i * 784 + p]) / 255.0);
        }
    }
    if (d.size() == 60000) CHECK(d.labels().front() == 5);
}

TEST_CASE("IDX loader rejects malformed files") {
    TempDir tmp("idx_bad");
    const auto img = tmp.path / "img";
    const auto lbl = tmp.path / "lbl";
    auto good_img = header(0x803, {2, 2, 2});
    good_img.insert(good_img.end(), 8, 128);
    auto good_lbl = header(0x801, {2});
    good_lbl.insert(good_lbl.end(), {1, 2});

    write_bytes(img, good_img);
    write_bytes(lbl, good_lbl);
    const auto d = load_mnist_idx(img, lbl);
    CHECK(d.size() == 2);
    CHECK(d.image(0)[0] == 128.0 / 255.0);

    SUBCASE("labels file with the image magic") {
        auto bad = header(0x803, {2});
        bad.insert(bad.end(), {1, 2});
        write_bytes(lbl, bad);
        CHECK_THROWS_AS((void)load_mnist_idx(img, lbl), DataFormatError);
    }
    SUBCASE("truncated payload") {
        auto bad = good_img;
        bad.pop_back();
        write_bytes(img, bad);
        CHECK_THROWS_AS((void)load_mnist_idx(img, lbl), DataFormatError);
    }
    SUBCASE("count mismatch") {
        auto bad = header(0x801, {3});
        bad.insert(bad.end(), {1, 2, 3});
        write_bytes(lbl, bad);
        CHECK_THROWS_AS((void)load_mnist_idx(img, lbl), DataFormatError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS((void)load_mnist_idx(tmp.path / "nope", lbl));
    }
}

TEST_CASE("IDX write and read round trip") {
    TempDir tmp("idx_rt");
    const auto d = tiny_dataset();
    write_idx(d, tmp.path / "i", tmp.path / "l");
    const auto back = load_mnist_idx(tmp.path / "i", tmp.path / "l");
    CHECK(back.images() == d.images());
    CHECK(back.labels() == d.labels());
}

TEST_CASE("synthetic dataset") {
    SeededRng r1(7), r2(7);
    const auto a = make_synthetic(2, 1, 8, 8, r1);
    const auto b = make_synthetic(2, 1, 8, 8, r2);
    CHECK(a.images() == b.images());
    CHECK(a.labels() == b.labels());

    SeededRng r3(1);
    const auto big = make_synthetic(5749, 1, 32, 32, r3);
    CHECK(big.size() == 5749);
    CHECK(big.num_classes() == 5749);
    for (double v : big.images().values()) {
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
    }
    // distinct classes give distinct images
    CHECK(big.images().slice(0) != big.images().slice(1));

    SeededRng r4(1);
    CHECK_THROWS((void)make_synthetic(0, 1, 8, 8, r4));
    CHECK_THROWS((void)make_synthetic(10, 0, 8, 8, r4));
}

TEST_CASE("batches obey their strategy") {
    SeededRng data_rng(3);
    const auto d = make_synthetic(10, 3, 6, 6, data_rng);
    SeededRng rng(4);
    for (int i = 0; i < 1000; ++i) {
        const auto eq = sample_batch(d, SamplingStrategy::EqualLabels, 4, rng);
        CHECK(std::set<std::size_t>(eq.labels.begin(), eq.labels.end()).size() == 1);
        const auto un = sample_batch(d, SamplingStrategy::UniqueLabels, 8, rng);
        CHECK(std::set<std::size_t>(un.labels.begin(), un.labels.end()).size() == 8);
    }
    CHECK_THROWS_AS((void)sample_batch(d, SamplingStrategy::UniqueLabels, 11, rng), InfeasibleBatch);
    CHECK_THROWS((void)sample_batch(d, SamplingStrategy::RandomLabels, 0, rng));
}

TEST_CASE("equal-label batches larger than a class sample with replacement") {
    SeededRng data_rng(3);
    const auto d = make_synthetic(4, 1, 6, 6, data_rng);
    SeededRng rng(5);
    const auto b = sample_batch(d, SamplingStrategy::EqualLabels, 3, rng);
    CHECK(b.size() == 3);
    CHECK(b.labels[0] == b.labels[1]);
    CHECK(b.labels[1] == b.labels[2]);
}

TEST_CASE("batch rows are exact copies of dataset rows") {
    const auto d = tiny_dataset();
    SeededRng rng(6);
    for (auto s : {SamplingStrategy::RandomLabels, SamplingStrategy::EqualLabels, SamplingStrategy::UniqueLabels}) {
        const auto b = sample_batch(d, s, 3, rng);
        REQUIRE(b.indices.size() == 3);
        for (std::size_t m = 0; m < 3; ++m) {
            REQUIRE(b.indices[m] < d.size());
            CHECK(b.labels[m] == d.labels()[b.indices[m]]);
            const auto row = b.inputs.row(m);
            const auto src = d.image(b.indices[m]);
            CHECK(std::equal(row.begin(), row.end(), src.begin()));
        }
    }
}

TEST_CASE("strategy names round trip") {
    for (auto s : {SamplingStrategy::RandomLabels, SamplingStrategy::EqualLabels, SamplingStrategy::UniqueLabels}) {
        CHECK(parse_strategy(to_string(s)) == s);
    }
    CHECK_THROWS((void)parse_strategy("sorted"));
}

TEST_CASE("dataset validates labels and pixels") {
    CHECK_THROWS(Dataset("x", Tensor({1, 2, 2}, 0.5), {3}, 3));
    CHECK_THROWS(Dataset("x", Tensor({1, 2, 2}, 1.5), {0}, 3));
    CHECK_THROWS(Dataset("x", Tensor({1, 2, 2}, 0.5), {0}, 1));
}

#include "gradlab/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "gradlab/datasets.hpp"

namespace gradlab {

namespace {

// Next whitespace-separated header token, skipping '#' comments.
std::string next_token(std::istream& in) {
    std::string tok;
    int ch = 0;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {
            }
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    return tok;
}

std::size_t parse_dim(const std::string& tok, const std::filesystem::path& path) {
    try {
        const long v = std::stol(tok);
        if (v <= 0) throw DataFormatError(path.string() + ": non-positive PGM header value");
        return static_cast<std::size_t>(v);
    } catch (const std::logic_error&) {
        throw DataFormatError(path.string() + ": malformed PGM header");
    }
}

}  // namespace

Tensor read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataFormatError(path.string() + ": cannot open");
    const auto magic = next_token(in);
    if (magic != "P5" && magic != "P2") throw DataFormatError(path.string() + ": not a P2/P5 PGM file");
    const auto width = parse_dim(next_token(in), path);
    const auto height = parse_dim(next_token(in), path);
    const auto maxval = parse_dim(next_token(in), path);
    if (maxval > 255) throw DataFormatError(path.string() + ": only 8-bit PGM is supported");

    Tensor image({height, width});
    if (magic == "P5") {
        std::string bytes(height * width, '\0');
        if (!in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
            throw DataFormatError(path.string() + ": truncated PGM payload");
        }
        for (std::size_t i = 0; i < bytes.size(); ++i) {
            image[i] = static_cast<unsigned char>(bytes[i]) / static_cast<double>(maxval);
        }
    } else {
        for (std::size_t i = 0; i < image.size(); ++i) {
            const auto tok = next_token(in);
            if (tok.empty() || !std::all_of(tok.begin(), tok.end(), ::isdigit)) {
                throw DataFormatError(path.string() + ": truncated or malformed PGM payload");
            }
            image[i] = static_cast<double>(std::min<unsigned long>(std::stoul(tok), maxval)) /
                       static_cast<double>(maxval);
        }
    }
    return image;
}

void write_pgm(const std::filesystem::path& path, const Tensor& image) {
    if (image.rank() != 2) throw ShapeError("write_pgm: expected an [H x W] image");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
    out << "P5\n" << image.dim(1) << ' ' << image.dim(0) << "\n255\n";
    for (double v : image.values()) {
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
    }
    if (!out) throw std::runtime_error(path.string() + ": write failed");
}

}  // namespace gradlab

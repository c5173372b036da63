#pragma once

#include <filesystem>

#include "gradlab/tensor.hpp"

namespace gradlab {

/// Reads a binary (P5) or ASCII (P2) PGM into an [H x W] tensor scaled to [0, 1].
[[nodiscard]] Tensor read_pgm(const std::filesystem::path& path);

/// Writes an [H x W] tensor as 8-bit binary PGM, clamping to [0, 1].
void write_pgm(const std::filesystem::path& path, const Tensor& image);

}  // namespace gradlab

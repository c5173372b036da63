#pragma once

#include <filesystem>
#include <iosfwd>

#include "gradlab/models.hpp"

namespace gradlab {

// Little-endian binary formats, bit-exact on round trip.

void write_model(std::ostream& out, const Model& model);
[[nodiscard]] Model read_model(std::istream& in);
void save_model(const std::filesystem::path& path, const Model& model);
[[nodiscard]] Model load_model(const std::filesystem::path& path);

void write_bundle(std::ostream& out, const GradientBundle& bundle);
[[nodiscard]] GradientBundle read_bundle(std::istream& in);
void save_bundle(const std::filesystem::path& path, const GradientBundle& bundle);
[[nodiscard]] GradientBundle load_bundle(const std::filesystem::path& path);

}  // namespace gradlab

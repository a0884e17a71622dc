#pragma once

// File formats: PFT1 tensors, binary PPM/PGM images, atomic file writes.
//
// PFT1 layout (all little-endian):
//   "PFT1" | u32 rank | rank x u32 dims | row-major IEEE-754 float32 payload

#include <filesystem>
#include <iosfwd>
#include <string>

#include "rwpatch/tensor.hpp"

namespace rwpatch::io {

void write_pft(std::ostream& os, const Tensor& t);
/// Throws FormatError on bad magic or a truncated stream.
Tensor read_pft(std::istream& is);

void save_pft(const std::filesystem::path& path, const Tensor& t);
Tensor load_pft(const std::filesystem::path& path);

/// [3,H,W] values in [0,1] -> P6, maxval 255 (round to nearest).
void save_ppm(const std::filesystem::path& path, const Tensor& image);
Tensor load_ppm(const std::filesystem::path& path);

/// Class ids as P5 gray levels, maxval 255.
void save_pgm(const std::filesystem::path& path, const LabelMap& labels);
LabelMap load_pgm(const std::filesystem::path& path);

/// Quantises to 8 bits and back, as a PPM round trip would.
Tensor quantize_u8(const Tensor& image);

/// Writes via a sibling temporary file and rename(), so readers never observe
/// a partially written file.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace rwpatch::io

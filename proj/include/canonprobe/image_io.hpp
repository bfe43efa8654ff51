#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "canonprobe/rotgroup.hpp"

namespace canonprobe {

struct PngLoadOptions {
  /// Composite alpha over white instead of rejecting the image.
  bool flatten_alpha_to_white = false;
  /// Replicate grayscale sources to three channels.
  bool force_rgb = false;
};

/// Decodes 8-bit (or 16-bit, reduced to 8) grayscale/RGB PNG data.
/// Throws std::runtime_error on malformed data or unflattened alpha.
RasterImage decode_png(const std::vector<std::uint8_t>& bytes, const PngLoadOptions& options = {});
RasterImage load_png(const std::filesystem::path& path, const PngLoadOptions& options = {});

/// 8-bit encoding with fixed compression settings, so equal images always
/// produce equal bytes.
std::vector<std::uint8_t> encode_png(const RasterImage& img);
void save_png(const RasterImage& img, const std::filesystem::path& path);

/// Nearest 8-bit level for a normalized value.
std::uint8_t to_byte(float v);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace canonprobe

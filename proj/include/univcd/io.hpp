#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "univcd/core.hpp"

namespace univcd {

// Raster container: "UVCD", u32 height, u32 width, u32 channels (all little-endian),
// then float32 LE values in row-major (row, col, channel) order.
inline constexpr char kRasterMagic[4] = {'U', 'V', 'C', 'D'};
inline constexpr std::size_t kRasterHeaderBytes = 16;

void write_raster(std::ostream& out, const Raster& r);
Raster read_raster(std::istream& in);
void save_raster(const std::filesystem::path& path, const Raster& r);
Raster load_raster(const std::filesystem::path& path);

/// Writes a mask as 8-bit grayscale PNG with values {0, 255}.
void save_mask_png(const std::filesystem::path& path, const BinaryMask& mask);
/// Reads any PNG; nonzero gray (or any nonzero channel) is foreground.
BinaryMask load_mask_png(const std::filesystem::path& path);

/// Writes 1 (gray) or 3 (RGB) channel rasters with values in [0,1] as 8-bit PNG.
void save_png(const std::filesystem::path& path, const Raster& r);
/// Reads a PNG as a raster with values in [0,1]; gray stays 1 channel, color becomes RGB.
Raster load_png(const std::filesystem::path& path);
/// Reads a PNG and returns raw 8-bit sample values of the first channel (label maps).
std::vector<std::uint8_t> load_png_labels(const std::filesystem::path& path, int& height, int& width);

/// Loads an image by extension: .png or .uvcd.
Raster load_image(const std::filesystem::path& path);

/// Writes via a temporary sibling and rename so readers never see partial files.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace univcd

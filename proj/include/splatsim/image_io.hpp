#pragma once

#include "splatsim/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace splatsim {

/// 8-bit RGB PNG; values are clamped to [0,1] and rounded.
void write_png(const std::filesystem::path& path, const ImageRGB& image);
std::vector<std::uint8_t> encode_png(const ImageRGB& image);
ImageRGB read_png_rgb(const std::filesystem::path& path);
/// Single channel view of a PNG (gray, or the first channel of RGB/RGBA).
Mask read_png_gray(const std::filesystem::path& path);
void write_png_gray(const std::filesystem::path& path, const Mask& mask);

/// Single channel float32 PFM ("Pf"), little-endian, rows stored bottom-to-top.
void write_pfm(const std::filesystem::path& path, const ImageF& image);
ImageF read_pfm(const std::filesystem::path& path);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);

}  // namespace splatsim

#include "splatsim/image_io.hpp"

#include <openssl/evp.h>
#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

namespace splatsim {
namespace {

std::uint8_t to_byte(double v) { return std::uint8_t(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

struct PngWriteBuffer {
  std::vector<std::uint8_t>* out;
};

void png_write_to_vector(png_structp png, png_bytep data, png_size_t length) {
  auto* buf = static_cast<PngWriteBuffer*>(png_get_io_ptr(png));
  buf->out->insert(buf->out->end(), data, data + length);
}

void png_flush_noop(png_structp) {}

[[noreturn]] void png_error_throw(png_structp, png_const_charp msg) { throw ValidationError(std::string("png: ") + msg); }

void png_warning_ignore(png_structp, png_const_charp) {}

std::vector<std::uint8_t> encode(const std::vector<std::uint8_t>& pixels, int width, int height, int channels) {
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_throw, png_warning_ignore);
  if (!png) throw RuntimeFailure("png: cannot create write struct");
  png_infop info = png_create_info_struct(png);
  PngWriteBuffer buf{&out};
  try {
    png_set_write_fn(png, &buf, png_write_to_vector, png_flush_noop);
    png_set_IHDR(png, info, png_uint_32(width), png_uint_32(height), 8,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 3);
    png_write_info(png, info);
    for (int y = 0; y < height; ++y) {
      png_write_row(png, const_cast<png_bytep>(pixels.data() + std::size_t(y) * width * channels));
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!f) throw RuntimeFailure("write failed: " + path.string());
}

struct DecodedPng {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;
};

DecodedPng decode_file(const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!fp) throw ValidationError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_throw, png_warning_ignore);
  png_infop info = png_create_info_struct(png);
  DecodedPng out;
  try {
    png_init_io(png, fp.get());
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_packing(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    out.width = int(png_get_image_width(png, info));
    out.height = int(png_get_image_height(png, info));
    out.channels = int(png_get_channels(png, info));
    const std::size_t stride = png_get_rowbytes(png, info);
    out.pixels.resize(stride * out.height);
    std::vector<png_bytep> rows(out.height);
    for (int y = 0; y < out.height; ++y) rows[y] = out.pixels.data() + std::size_t(y) * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  } catch (const ValidationError& e) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ValidationError(path.string() + ": " + e.what());
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const ImageRGB& image) {
  std::vector<std::uint8_t> pixels(image.size() * 3);
  for (std::size_t i = 0; i < image.size(); ++i) {
    for (int c = 0; c < 3; ++c) pixels[3 * i + c] = to_byte(image.data[i][c]);
  }
  return encode(pixels, image.width, image.height, 3);
}

void write_png(const std::filesystem::path& path, const ImageRGB& image) { write_bytes(path, encode_png(image)); }

void write_png_gray(const std::filesystem::path& path, const Mask& mask) {
  write_bytes(path, encode(mask.data, mask.width, mask.height, 1));
}

ImageRGB read_png_rgb(const std::filesystem::path& path) {
  const DecodedPng png = decode_file(path);
  ImageRGB img(png.width, png.height);
  for (std::size_t i = 0; i < img.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      const int src = png.channels >= 3 ? c : 0;
      img.data[i][c] = png.pixels[i * png.channels + src] / 255.0;
    }
  }
  return img;
}

Mask read_png_gray(const std::filesystem::path& path) {
  const DecodedPng png = decode_file(path);
  Mask m(png.width, png.height);
  for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = png.pixels[i * png.channels];
  return m;
}

void write_pfm(const std::filesystem::path& path, const ImageF& image) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open " + path.string() + " for writing");
  f << "Pf\n" << image.width << " " << image.height << "\n-1.0\n";
  std::vector<float> row(image.width);
  for (int y = image.height - 1; y >= 0; --y) {
    for (int x = 0; x < image.width; ++x) row[x] = float(image(x, y));
    if constexpr (std::endian::native == std::endian::big) {
      for (auto& v : row) v = std::bit_cast<float>(__builtin_bswap32(std::bit_cast<std::uint32_t>(v)));
    }
    f.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size() * sizeof(float)));
  }
  if (!f) throw RuntimeFailure("write failed: " + path.string());
}

ImageF read_pfm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open " + path.string());
  std::string magic;
  int width = 0, height = 0;
  double scale = 0;
  f >> magic >> width >> height >> scale;
  f.get();
  if (!f || magic != "Pf" || width <= 0 || height <= 0 || scale == 0) {
    throw ValidationError(path.string() + ": not a single-channel PFM file");
  }
  const bool little = scale < 0;
  ImageF img(width, height);
  std::vector<std::uint32_t> row(width);
  for (int y = height - 1; y >= 0; --y) {
    f.read(reinterpret_cast<char*>(row.data()), std::streamsize(row.size() * sizeof(float)));
    if (!f) throw ValidationError(path.string() + ": truncated PFM data");
    for (int x = 0; x < width; ++x) {
      std::uint32_t bits = row[x];
      if (little != (std::endian::native == std::endian::little)) bits = __builtin_bswap32(bits);
      img(x, y) = std::bit_cast<float>(bits);
    }
  }
  return img;
}

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(), int(bytes.size()));
  out.resize(std::size_t(n));
  return out;
}

}  // namespace splatsim

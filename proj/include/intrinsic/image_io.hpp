#pragma once

#include <png.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "intrinsic/errors.hpp"
#include "intrinsic/image.hpp"

namespace intrinsic {

// ---------------------------------------------------------------------------
// PFM (portable float map). Header "PF"/"Pf", width height, scale; negative
// scale means little-endian payload. Rows are stored bottom-to-top.
// ---------------------------------------------------------------------------

inline void write_pfm(const std::filesystem::path& path, const Image& im) {
  if (im.channels != 1 && im.channels != 3)
    throw IoError("write_pfm: only 1- or 3-channel images, got " + shape_str(im));
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("write_pfm: cannot open " + path.string());
  f << (im.channels == 3 ? "PF" : "Pf") << "\n"
    << im.width << " " << im.height << "\n"
    << "-1.0\n";
  std::vector<float> row(static_cast<std::size_t>(im.width) * im.channels);
  for (int y = im.height - 1; y >= 0; --y) {
    std::memcpy(row.data(), &im.data[static_cast<std::size_t>(y) * im.width * im.channels],
                row.size() * sizeof(float));
    f.write(reinterpret_cast<const char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!f) throw IoError("write_pfm: write failed for " + path.string());
}

inline Image read_pfm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("read_pfm: cannot open " + path.string());
  std::string magic;
  int width = 0, height = 0;
  double scale = 0.0;
  f >> magic >> width >> height >> scale;
  if ((magic != "PF" && magic != "Pf") || width <= 0 || height <= 0 || scale == 0.0)
    throw IoError("read_pfm: bad header in " + path.string());
  f.get();  // the single whitespace byte after the scale
  const int channels = magic == "PF" ? 3 : 1;
  Image im(height, width, channels);
  std::vector<float> row(static_cast<std::size_t>(width) * channels);
  for (int y = height - 1; y >= 0; --y) {
    f.read(reinterpret_cast<char*>(row.data()),
           static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!f) throw IoError("read_pfm: truncated data in " + path.string());
    std::memcpy(&im.data[static_cast<std::size_t>(y) * width * channels], row.data(),
                row.size() * sizeof(float));
  }
  if (scale > 0.0) {  // big-endian payload
    for (float& v : im.data) {
      std::uint32_t u;
      std::memcpy(&u, &v, 4);
      u = ((u & 0xFF000000u) >> 24) | ((u & 0x00FF0000u) >> 8) | ((u & 0x0000FF00u) << 8) |
          ((u & 0x000000FFu) << 24);
      std::memcpy(&v, &u, 4);
    }
  }
  const float mag = static_cast<float>(std::abs(scale));
  if (mag != 1.0f)
    for (float& v : im.data) v *= mag;
  for (float v : im.data)
    if (!std::isfinite(v) || v < 0.0f)
      throw IoError("read_pfm: NaN or negative pixel in " + path.string());
  return im;
}

// ---------------------------------------------------------------------------
// PNG. 8-bit previews out, 8-bit reads in (palette and 16-bit inputs are
// reduced). Values map linearly to [0,1]; an optional display gamma can be
// inverted on read for externally supplied LDR data.
// ---------------------------------------------------------------------------

/// Writes an 8-bit PNG. Input values are clamped to [0,1]; gamma encoding is
/// the caller's job (see to_display).
inline void write_png(const std::filesystem::path& path, const Image& im) {
  if (im.channels != 1 && im.channels != 3)
    throw IoError("write_png: only 1- or 3-channel images, got " + shape_str(im));
  std::FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw IoError("write_png: cannot open " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    throw IoError("write_png: libpng failure for " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, im.width, im.height, 8,
               im.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<std::size_t>(im.width) * im.channels);
  for (int y = 0; y < im.height; ++y) {
    for (int x = 0; x < im.width; ++x)
      for (int c = 0; c < im.channels; ++c) {
        float v = std::min(std::max(im.at(y, x, c), 0.0f), 1.0f);
        row[static_cast<std::size_t>(x) * im.channels + c] =
            static_cast<png_byte>(std::lround(v * 255.0f));
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

struct PngReadResult {
  Image image;                 // [0,1] floats, 1 or 3 channels
  std::optional<Image> alpha;  // [0,1], present when the file has alpha
};

/// Reads an 8-bit PNG into [0,1] floats. When `linearize_gamma` > 0 the
/// values are raised to that power to undo display encoding.
inline PngReadResult read_png(const std::filesystem::path& path, float linearize_gamma = 0.0f) {
  std::FILE* fp = std::fopen(path.string().c_str(), "rb");
  if (!fp) throw IoError("read_png: cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    std::fclose(fp);
    throw IoError("read_png: libpng failure for " + path.string());
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_packing(png);
  const png_byte color_type = png_get_color_type(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int file_channels = png_get_channels(png, info);
  std::vector<png_byte> row(static_cast<std::size_t>(width) * file_channels);

  const bool has_alpha = file_channels == 2 || file_channels == 4;
  const int color_channels = file_channels >= 3 ? 3 : 1;
  PngReadResult out;
  out.image = Image(height, width, color_channels);
  if (has_alpha) out.alpha = Image(height, width, 1);

  for (int y = 0; y < height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < width; ++x) {
      const png_byte* px = &row[static_cast<std::size_t>(x) * file_channels];
      for (int c = 0; c < color_channels; ++c) {
        float v = static_cast<float>(px[c]) / 255.0f;
        if (linearize_gamma > 0.0f) v = std::pow(v, linearize_gamma);
        out.image.at(y, x, c) = v;
      }
      if (has_alpha)
        out.alpha->at(y, x, 0) = static_cast<float>(px[color_channels]) / 255.0f;
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return out;
}

/// Reads an image by extension: .pfm stays linear HDR, .png maps to [0,1]
/// (optionally linearized).
inline Image read_image(const std::filesystem::path& path, float png_linearize_gamma = 0.0f) {
  const std::string ext = path.extension().string();
  if (ext == ".pfm" || ext == ".PFM") return read_pfm(path);
  if (ext == ".png" || ext == ".PNG") return read_png(path, png_linearize_gamma).image;
  throw IoError("read_image: unsupported extension for " + path.string());
}

}  // namespace intrinsic

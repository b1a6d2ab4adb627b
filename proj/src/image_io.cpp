#include "niv/image_io.hpp"

#include <png.h>

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "niv/error.hpp"

namespace niv {

static_assert(std::endian::native == std::endian::little, "PFM writer assumes a little-endian host");

void write_pfm(const FrameHDR& frame, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << "PF\n" << frame.width << ' ' << frame.height << "\n-1.0\n";
  std::vector<float> row(static_cast<size_t>(frame.width) * 3);
  for (int y = frame.height - 1; y >= 0; --y) {
    for (int x = 0; x < frame.width; ++x)
      for (int c = 0; c < 3; ++c) row[static_cast<size_t>(x) * 3 + c] = static_cast<float>(frame.at(x, y)[c]);
    f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!f) throw IoError("failed writing " + path.string());
}

FrameHDR read_pfm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0;
  double scale = 0;
  f >> magic >> w >> h >> scale;
  if (magic != "PF" || w <= 0 || h <= 0 || !f) throw InputError("not a colour PFM file: " + path.string());
  if (scale >= 0) throw InputError("big-endian PFM is not supported: " + path.string());
  f.get();  // single whitespace before the raster
  FrameHDR frame(w, h);
  std::vector<float> row(static_cast<size_t>(w) * 3);
  for (int y = h - 1; y >= 0; --y) {
    f.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!f) throw InputError("truncated PFM file: " + path.string());
    for (int x = 0; x < w; ++x)
      frame.at(x, y) = {row[static_cast<size_t>(x) * 3], row[static_cast<size_t>(x) * 3 + 1],
                        row[static_cast<size_t>(x) * 3 + 2]};
  }
  return frame;
}

uint8_t tonemap_byte(double v) {
  if (!(v > 0)) return 0;  // also maps NaN to black
  const double t = std::isinf(v) ? 1.0 : v / (1 + v);
  const double s = t <= 0.0031308 ? 12.92 * t : 1.055 * std::pow(t, 1 / 2.4) - 0.055;
  return static_cast<uint8_t>(std::lround(std::clamp(s, 0.0, 1.0) * 255));
}

std::vector<uint8_t> tonemap_rgb8(const FrameHDR& frame) {
  std::vector<uint8_t> out(frame.pixels.size() * 3);
  for (size_t i = 0; i < frame.pixels.size(); ++i)
    for (int c = 0; c < 3; ++c) out[i * 3 + c] = tonemap_byte(frame.pixels[i][c]);
  return out;
}

void write_png(const FrameHDR& frame, const std::filesystem::path& path) {
  const std::vector<uint8_t> rgb = tonemap_rgb8(frame);
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.string().c_str(), "wb"), &std::fclose);
  if (!fp) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(frame.width), static_cast<png_uint_32>(frame.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_sRGB(png, info, PNG_sRGB_INTENT_PERCEPTUAL);
  png_write_info(png, info);
  for (int y = 0; y < frame.height; ++y)
    png_write_row(png, const_cast<png_bytep>(rgb.data() + static_cast<size_t>(y) * frame.width * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void tonemap_write(const FrameHDR& frame, const std::filesystem::path& pfm, const std::filesystem::path& png) {
  if (!pfm.empty()) write_pfm(frame, pfm);
  if (!png.empty()) write_png(frame, png);
}

}  // namespace niv

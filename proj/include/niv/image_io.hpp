#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "niv/tracer.hpp"

namespace niv {

// Little-endian colour PFM, rows stored bottom-up as the format expects.
void write_pfm(const FrameHDR& frame, const std::filesystem::path& path);
FrameHDR read_pfm(const std::filesystem::path& path);

// Reinhard x/(1+x), then the sRGB transfer curve, rounded to 8 bits.
uint8_t tonemap_byte(double linear);
std::vector<uint8_t> tonemap_rgb8(const FrameHDR& frame);
void write_png(const FrameHDR& frame, const std::filesystem::path& path);

// PFM + PNG side by side; either path may be empty to skip it.
void tonemap_write(const FrameHDR& frame, const std::filesystem::path& pfm, const std::filesystem::path& png);

}  // namespace niv

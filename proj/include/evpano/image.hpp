#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace evpano {

/// Row-major grayscale image. 8-bit images have maxval 255; 16-bit PGMs keep
/// their maxval.
struct GrayImage {
  int width = 0;
  int height = 0;
  int maxval = 255;
  std::vector<std::uint16_t> pixels;

  std::uint16_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

/// Reads binary (P5) or ASCII (P2) PGM, 8 or 16 bit.
GrayImage read_pgm(const std::string& path);

/// Writes a P5 PGM. Values above 255 make it a 16-bit file.
void write_pgm(const std::string& path, const GrayImage& img);

}  // namespace evpano

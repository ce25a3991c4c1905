#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace forge {

// Grayscale raster with binary PGM (P5) I/O. Enough image machinery for the
// zoom tool; anything heavier stays behind scripted executors.
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels; // row-major

  static Raster load_pgm(const std::string &path);
  void save_pgm(const std::string &path) const;

  std::uint8_t at(int x, int y) const {
    return pixels[static_cast<std::size_t>(y) * width + x];
  }
};

// Crops using a [x1, y1, x2, y2] box on a 0-1000 normalized grid. Throws
// ForgeError when the resulting crop is empty.
Raster crop_normalized(const Raster &src, const std::vector<double> &box);

} // namespace forge

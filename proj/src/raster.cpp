#include "forge/raster.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "forge/errors.hpp"

namespace forge {

Raster Raster::load_pgm(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ForgeError("cannot open image: " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5")
    throw ForgeError("unsupported image format (want P5 PGM): " + path);
  auto next_int = [&in, &path]() {
    // skip whitespace and '#' comment lines
    while (true) {
      int c = in.peek();
      if (c == '#') {
        std::string line;
        std::getline(in, line);
      } else if (std::isspace(c)) {
        in.get();
      } else {
        break;
      }
    }
    int v;
    if (!(in >> v))
      throw ForgeError("truncated PGM header: " + path);
    return v;
  };
  Raster r;
  r.width = next_int();
  r.height = next_int();
  int maxval = next_int();
  if (r.width <= 0 || r.height <= 0 || maxval != 255)
    throw ForgeError("unsupported PGM geometry: " + path);
  in.get(); // single whitespace after maxval
  r.pixels.resize(static_cast<std::size_t>(r.width) * r.height);
  in.read(reinterpret_cast<char *>(r.pixels.data()),
          static_cast<std::streamsize>(r.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(r.pixels.size()))
    throw ForgeError("truncated PGM payload: " + path);
  return r;
}

void Raster::save_pgm(const std::string &path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw ForgeError("cannot write image: " + path);
  out << "P5\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char *>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
}

Raster crop_normalized(const Raster &src, const std::vector<double> &box) {
  if (box.size() != 4)
    throw ForgeError("crop box must be [x1, y1, x2, y2]");
  auto to_px = [](double v, int extent) {
    double clamped = std::clamp(v, 0.0, 1000.0);
    return static_cast<int>(std::lround(clamped / 1000.0 * extent));
  };
  int x1 = to_px(box[0], src.width);
  int y1 = to_px(box[1], src.height);
  int x2 = to_px(box[2], src.width);
  int y2 = to_px(box[3], src.height);
  if (x2 <= x1 || y2 <= y1)
    throw ForgeError("cannot write empty image");
  Raster out;
  out.width = x2 - x1;
  out.height = y2 - y1;
  out.pixels.resize(static_cast<std::size_t>(out.width) * out.height);
  for (int y = y1; y < y2; ++y)
    std::copy_n(&src.pixels[static_cast<std::size_t>(y) * src.width + x1],
                out.width,
                &out.pixels[static_cast<std::size_t>(y - y1) * out.width]);
  return out;
}

} // namespace forge

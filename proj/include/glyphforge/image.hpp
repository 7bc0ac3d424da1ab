#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "glyphforge/common.hpp"

namespace glyphforge {

/// One grayscale image in ink space: 1 = ink, 0 = background.
struct Image {
  int64_t height = 0, width = 0;
  std::vector<real> pixels;

  Image() = default;
  Image(int64_t h, int64_t w) : height(h), width(w), pixels(static_cast<size_t>(h * w), real(0)) {}
  Image(int64_t h, int64_t w, std::vector<real> p) : height(h), width(w), pixels(std::move(p)) {
    if (static_cast<int64_t>(pixels.size()) != h * w)
      throw shape_error("image pixel count does not match dimensions");
  }
};

/// Binary PGM (P5), 8-bit, ink rendered black on white:
/// byte = round(255 * (1 - pixel)).
inline void write_pgm(const Image& img, const std::string& path) {
  for (real p : img.pixels)
    if (!(p >= 0 && p <= 1)) throw parameter_error("pixel outside [0,1]: " + std::to_string(p));
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw io_error("cannot open " + path + " for writing");
  f << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::vector<uint8_t> bytes(img.pixels.size());
  for (size_t i = 0; i < img.pixels.size(); ++i)
    bytes[i] = static_cast<uint8_t>(std::lround(255.0 * (1.0 - static_cast<double>(img.pixels[i]))));
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw io_error("write failed for " + path);
}

inline void write_image(const Image& img, const std::string& path, const std::string& format) {
  if (format == "pgm") {
    write_pgm(img, path);
    return;
  }
  throw parameter_error("unsupported image format: " + format);
}

/// Lays out equally sized cells row-major with white gutters between them.
inline Image compose_grid(const std::vector<std::vector<real>>& cells, int64_t rows, int64_t cols,
                          int64_t cell_h, int64_t cell_w, int64_t gutter = 2) {
  if (rows < 1 || cols < 1) throw parameter_error("grid must have positive dimensions");
  if (static_cast<int64_t>(cells.size()) > rows * cols)
    throw parameter_error("more cells than grid positions");
  for (const auto& c : cells)
    if (static_cast<int64_t>(c.size()) != cell_h * cell_w)
      throw shape_error("grid cell geometry mismatch");
  Image out(rows * cell_h + (rows - 1) * gutter, cols * cell_w + (cols - 1) * gutter);
  for (size_t i = 0; i < cells.size(); ++i) {
    const int64_t r = static_cast<int64_t>(i) / cols;
    const int64_t c = static_cast<int64_t>(i) % cols;
    const int64_t oy = r * (cell_h + gutter);
    const int64_t ox = c * (cell_w + gutter);
    for (int64_t y = 0; y < cell_h; ++y)
      for (int64_t x = 0; x < cell_w; ++x)
        out.pixels[static_cast<size_t>((oy + y) * out.width + ox + x)] =
            cells[i][static_cast<size_t>(y * cell_w + x)];
  }
  return out;
}

}  // namespace glyphforge

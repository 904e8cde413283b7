#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cephmark/common.hpp"

namespace cephmark {

// Grayscale raster with values in [0, 1], row-major.
struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  GrayImage() = default;
  GrayImage(int h, int w, float fill = 0.0f)
      : height(h), width(w), pixels(static_cast<size_t>(h) * w, fill) {}

  float& at(int y, int x) { return pixels[static_cast<size_t>(y) * width + x]; }
  float at(int y, int x) const { return pixels[static_cast<size_t>(y) * width + x]; }
};

// PGM (P5 binary / P2 ascii), 8- or 16-bit. Writes P5 with maxval 65535.
GrayImage read_pgm(const std::string& path);
void write_pgm(const std::string& path, const GrayImage& image);

// Box-filter (area-average) resample to the exact target size. Alias-free
// for shrink factors; preserves constant images up to rounding.
GrayImage resample_area(const GrayImage& src, int dst_height, int dst_width);

// Target dimension for a uniform scale: round-half-up of dim * factor.
inline int scaled_dim(int dim, double factor) { return round_half_up(dim * factor); }

// Keeps rows [top, top+height) x cols [left, left+width).
GrayImage crop(const GrayImage& src, int top, int left, int height, int width);

// Reflect-pad (edge mirror without repeating the border sample) on the
// bottom/right so each spatial dim becomes a multiple of `multiple`.
GrayImage pad_to_multiple_reflect(const GrayImage& src, int multiple);

}  // namespace cephmark

//
// Copyright 2026 The Grounder Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef GROUNDER_VIZ_HPP
#define GROUNDER_VIZ_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "grounder/common.hpp"
#include "grounder/nn/tensor.hpp"
#include "grounder/world.hpp"

namespace grounder {

// ---------------------------------------------------------------------------
// Minimal netpbm output: binary PGM for heatmaps, binary PPM for scenes.
// ---------------------------------------------------------------------------

inline void write_pgm(const std::string& path, const std::vector<std::uint8_t>& gray,
                      int width, int height) {
  if (static_cast<int>(gray.size()) != width * height)
    throw ValidationError("pgm: buffer size does not match dimensions");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("pgm: cannot open " + path);
  f << "P5\n" << width << " " << height << "\n255\n";
  f.write(reinterpret_cast<const char*>(gray.data()),
          static_cast<std::streamsize>(gray.size()));
  if (!f) throw ValidationError("pgm: write failed for " + path);
}

inline void write_ppm(const std::string& path, const std::vector<std::uint8_t>& rgb,
                      int width, int height) {
  if (static_cast<int>(rgb.size()) != 3 * width * height)
    throw ValidationError("ppm: buffer size does not match dimensions");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("ppm: cannot open " + path);
  f << "P6\n" << width << " " << height << "\n255\n";
  f.write(reinterpret_cast<const char*>(rgb.data()),
          static_cast<std::streamsize>(rgb.size()));
  if (!f) throw ValidationError("ppm: write failed for " + path);
}

// Planar float raster (3 x S x S in [0,1]) to interleaved 8-bit RGB.
inline std::vector<std::uint8_t> raster_to_rgb(const std::vector<float>& raster,
                                               int image_size) {
  const int plane = image_size * image_size;
  if (static_cast<int>(raster.size()) != 3 * plane)
    throw ValidationError("viz: raster size does not match image size");
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(3 * plane));
  for (int p = 0; p < plane; ++p)
    for (int c = 0; c < 3; ++c) {
      float v = std::clamp(raster[static_cast<std::size_t>(c * plane + p)], 0.0f, 1.0f);
      rgb[static_cast<std::size_t>(3 * p + c)] =
          static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
  return rgb;
}

// Heatmap grid upsampled to image resolution with nearest-neighbour blocks,
// min-max normalized so the peak is white.
template <Real T>
std::vector<std::uint8_t> heatmap_to_gray(const Tensor<T>& grid, int image_size) {
  if (grid.ndim() != 2) throw ValidationError("viz: heatmap must be 2-D");
  const int gh = grid.dim(0), gw = grid.dim(1);
  if (gh <= 0 || gw <= 0 || image_size % gh != 0 || image_size % gw != 0)
    throw ValidationError("viz: heatmap grid does not divide image size");
  double lo = static_cast<double>(grid[0]), hi = lo;
  for (int i = 0; i < grid.numel(); ++i) {
    lo = std::min(lo, static_cast<double>(grid[i]));
    hi = std::max(hi, static_cast<double>(grid[i]));
  }
  const double span = (hi - lo) > 1e-12 ? (hi - lo) : 1.0;
  const int sy = image_size / gh, sx = image_size / gw;
  std::vector<std::uint8_t> gray(static_cast<std::size_t>(image_size * image_size));
  for (int y = 0; y < image_size; ++y)
    for (int x = 0; x < image_size; ++x) {
      const double v = (static_cast<double>(grid(y / sy, x / sx)) - lo) / span;
      gray[static_cast<std::size_t>(y * image_size + x)] =
          static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    }
  return gray;
}

// One-pixel rectangle outline over an interleaved RGB buffer, clipped to the
// image; used to mark predicted and ground-truth boxes.
inline void draw_box_outline(std::vector<std::uint8_t>& rgb, int image_size,
                             const PixelBox& box, std::uint8_t r, std::uint8_t g,
                             std::uint8_t b) {
  auto put = [&](int x, int y) {
    if (x < 0 || y < 0 || x >= image_size || y >= image_size) return;
    const std::size_t at = static_cast<std::size_t>(3 * (y * image_size + x));
    rgb[at] = r;
    rgb[at + 1] = g;
    rgb[at + 2] = b;
  };
  const int x1 = static_cast<int>(std::lround(box.x1));
  const int y1 = static_cast<int>(std::lround(box.y1));
  const int x2 = static_cast<int>(std::lround(box.x2));
  const int y2 = static_cast<int>(std::lround(box.y2));
  for (int x = x1; x <= x2; ++x) {
    put(x, y1);
    put(x, y2);
  }
  for (int y = y1; y <= y2; ++y) {
    put(x1, y);
    put(x2, y);
  }
}

}  // namespace grounder

#endif  // GROUNDER_VIZ_HPP

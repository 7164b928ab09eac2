#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "sweepfuse/errors.hpp"

namespace sweepfuse {

/// Interleaved row-major image with values in [0,1].
struct ImageBuffer {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;

  ImageBuffer() = default;
  ImageBuffer(int w, int h, int c, float fill = 0.0f)
      : width(w), height(h), channels(c) {
    if (c != 1 && c != 3) throw InvalidArgument("image channels must be 1 or 3");
    if (w <= 0 || h <= 0) throw InvalidArgument("image size must be positive");
    data.assign(static_cast<std::size_t>(w) * h * c, fill);
  }

  float& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  // 0.299/0.587/0.114 luma for RGB, identity for grayscale.
  float gray(int x, int y) const {
    if (channels == 1) return at(x, y);
    return 0.299f * at(x, y, 0) + 0.587f * at(x, y, 1) + 0.114f * at(x, y, 2);
  }
};

/// Per-pixel depth with an explicit validity mask.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<float> depth;
  std::vector<std::uint8_t> valid;

  DepthMap() = default;
  DepthMap(int w, int h, float fill = 0.0f, bool valid_fill = false)
      : width(w), height(h),
        depth(static_cast<std::size_t>(w) * h, fill),
        valid(static_cast<std::size_t>(w) * h, valid_fill ? 1 : 0) {}

  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * width + x;
  }
  bool contains(int x, int y) const {
    return x >= 0 && y >= 0 && x < width && y < height;
  }
  bool is_valid(int x, int y) const { return valid[index(x, y)] != 0; }
  float at(int x, int y) const { return depth[index(x, y)]; }

  void set(int x, int y, float d) {
    depth[index(x, y)] = d;
    valid[index(x, y)] = 1;
  }
  void invalidate(int x, int y) { valid[index(x, y)] = 0; }

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (auto v : valid) n += v != 0;
    return n;
  }
};

/// Per-pixel probability of the selected depth, in [0,1].
struct ConfidenceMap {
  int width = 0;
  int height = 0;
  std::vector<float> prob;

  ConfidenceMap() = default;
  ConfidenceMap(int w, int h, float fill = 0.0f)
      : width(w), height(h), prob(static_cast<std::size_t>(w) * h, fill) {}

  float at(int x, int y) const {
    return prob[static_cast<std::size_t>(y) * width + x];
  }
};

}  // namespace sweepfuse

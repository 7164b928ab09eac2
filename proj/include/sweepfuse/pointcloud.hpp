#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "sweepfuse/geometry.hpp"

namespace sweepfuse {

using Rgb8 = std::array<std::uint8_t, 3>;

/// 3D points with optional per-point colour. `colors` is either empty or
/// the same length as `points`.
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Rgb8> colors;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
  bool has_colors() const noexcept { return !colors.empty(); }
};

}  // namespace sweepfuse

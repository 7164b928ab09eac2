#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "sweepfuse/errors.hpp"
#include "sweepfuse/features.hpp"
#include "sweepfuse/geometry.hpp"
#include "sweepfuse/tensor.hpp"

namespace sweepfuse {

/// One depth plane of the matching volume: per-pixel, per-channel variance
/// of the reference feature and every source feature that warps inside its
/// image. `view_count` holds |V| (reference included); a pixel with
/// view_count == 1 had no source support and carries zero cost.
struct CostSlice {
  int index = 0;
  double depth = 0.0;
  Tensor cost;
  tracked_vector<std::uint8_t> view_count;

  bool unsupported(int x, int y) const {
    return view_count[static_cast<std::size_t>(y) * cost.width() + x] <= 1;
  }
};

/// Views entering one plane sweep. All references must outlive the sweep.
struct SweepViews {
  std::reference_wrapper<const FeatureMap> reference;
  std::reference_wrapper<const Camera> reference_camera;
  std::vector<std::reference_wrapper<const FeatureMap>> sources;
  std::vector<std::reference_wrapper<const Camera>> source_cameras;
};

// Bilinear sample of one channel; (x, y) must satisfy 0 <= x <= W-1 and
// 0 <= y <= H-1. Integer coordinates return the stored value exactly.
inline float bilinear_sample(std::span<const float> plane, int width, int height,
                             double x, double y) {
  int x0 = static_cast<int>(std::floor(x));
  int y0 = static_cast<int>(std::floor(y));
  if (x0 >= width - 1) x0 = width - 1;
  if (y0 >= height - 1) y0 = height - 1;
  const double fx = x - x0;
  const double fy = y - y0;
  const int x1 = std::min(x0 + 1, width - 1);
  const int y1 = std::min(y0 + 1, height - 1);
  const auto at = [&](int xx, int yy) {
    return static_cast<double>(plane[static_cast<std::size_t>(yy) * width + xx]);
  };
  const double top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
  const double bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
  return static_cast<float>(top * (1.0 - fy) + bottom * fy);
}

inline CostSlice build_cost_slice(const SweepViews& views, double depth,
                                  int index = 0) {
  const FeatureMap& ref = views.reference.get();
  if (views.sources.empty()) {
    throw InvalidArgument("build_cost_slice requires at least one source view");
  }
  if (views.sources.size() != views.source_cameras.size()) {
    throw ShapeMismatch("build_cost_slice: source features and cameras differ in count");
  }
  for (const auto& s : views.sources) {
    if (!s.get().same_shape(ref)) {
      throw ShapeMismatch("build_cost_slice: feature map " + s.get().shape_string() +
                          " does not match reference " + ref.shape_string());
    }
  }

  const int c = ref.channels();
  const int h = ref.height();
  const int w = ref.width();
  const std::size_t plane = ref.plane_size();

  // Welford accumulation, seeded with the reference sample.
  CostSlice slice;
  slice.index = index;
  slice.depth = depth;
  slice.view_count.assign(plane, 1);
  tracked_vector<double> mean(ref.data().begin(), ref.data().end());
  tracked_vector<double> m2(ref.size(), 0.0);

  for (std::size_t s = 0; s < views.sources.size(); ++s) {
    const WarpGrid grid = warp_grid(views.reference_camera.get(),
                                    views.source_cameras[s].get(), depth, w, h);
    const FeatureMap& src = views.sources[s].get();
    for (std::size_t i = 0; i < plane; ++i) {
      if (!grid.valid[i]) continue;
      const double n = ++slice.view_count[i];
      for (int ch = 0; ch < c; ++ch) {
        const double v = bilinear_sample(src.channel(ch), w, h, grid.x[i], grid.y[i]);
        const std::size_t j = static_cast<std::size_t>(ch) * plane + i;
        const double delta = v - mean[j];
        mean[j] += delta / n;
        m2[j] += delta * (v - mean[j]);
      }
    }
  }
  slice.cost = Tensor(c, h, w);
  auto cost = slice.cost.data();
  for (std::size_t j = 0; j < cost.size(); ++j) {
    const double v = m2[j] / slice.view_count[j % plane];
    cost[j] = static_cast<float>(v > 0.0 ? v : 0.0);
  }
  return slice;
}

/// Lazily produces the cost slices of a sweep in increasing depth order.
/// Only the slice being handed out is alive at any time.
class CostVolumeStream {
 public:
  CostVolumeStream(SweepViews views, std::vector<double> depths)
      : views_(std::move(views)), depths_(std::move(depths)) {}

  CostVolumeStream(SweepViews views, const HypothesisSpace& hyp)
      : CostVolumeStream(std::move(views), sample_hypotheses(hyp)) {}

  std::size_t size() const noexcept { return depths_.size(); }
  bool done() const noexcept { return next_ >= depths_.size(); }
  const std::vector<double>& depths() const noexcept { return depths_; }
  const SweepViews& views() const noexcept { return views_; }

  std::optional<CostSlice> next() {
    if (done()) return std::nullopt;
    const int i = static_cast<int>(next_++);
    return build_cost_slice(views_, depths_[i], i);
  }

 private:
  SweepViews views_;
  std::vector<double> depths_;
  std::size_t next_ = 0;
};

}  // namespace sweepfuse

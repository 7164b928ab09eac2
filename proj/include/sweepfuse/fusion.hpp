#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "sweepfuse/errors.hpp"
#include "sweepfuse/geometry.hpp"
#include "sweepfuse/maps.hpp"
#include "sweepfuse/pointcloud.hpp"

namespace sweepfuse {

/// Depth estimate of one view together with its camera and, optionally, the
/// colour image used to paint fused points.
struct ViewEstimate {
  Camera camera;
  DepthMap depth;
  ConfidenceMap confidence;
  std::optional<ImageBuffer> image;

  int width() const noexcept { return depth.width; }
  int height() const noexcept { return depth.height; }
};

using ViewRefs = std::vector<std::reference_wrapper<const ViewEstimate>>;

struct FusionParams {
  double lambda = 200.0;  // weight of the relative depth error
  double tau = 1.8;       // minimum summed consistency
  double phi = 0.4;       // minimum confidence
  double tau_pixel = 1.0;     // fixed filter: pixel error bound
  double tau_depth = 0.01;    // fixed filter: relative depth error bound
  int min_views = 3;          // fixed filter: required consistent views

  void check() const {
    if (!(lambda > 0.0)) throw InvalidArgument("lambda must be positive");
    if (!(tau >= 0.0)) throw InvalidArgument("tau must be non-negative");
    if (!(phi >= 0.0)) throw InvalidArgument("phi must be non-negative");
  }
};

// Weight below which a source view is not merged into a fused point.
inline const double kFusionMinConsistency = std::exp(-3.0);

/// c = exp(-(xi_p + lambda * xi_d)).
inline double matching_consistency(double pixel_error, double depth_error,
                                   double lambda) {
  return std::exp(-(pixel_error + lambda * depth_error));
}

inline void check_dimensions(const ViewEstimate& v) {
  if (v.depth.width != v.confidence.width || v.depth.height != v.confidence.height) {
    throw ShapeMismatch("view estimate: depth and confidence sizes differ");
  }
  if (v.image && (v.image->width != v.depth.width || v.image->height != v.depth.height)) {
    throw ShapeMismatch("view estimate: image and depth sizes differ");
  }
}

/// Masks pixels whose confidence is below phi.
inline ViewEstimate probability_filter(const ViewEstimate& v, double phi) {
  check_dimensions(v);
  ViewEstimate out = v;
  for (std::size_t j = 0; j < out.depth.valid.size(); ++j) {
    if (out.confidence.prob[j] < phi) out.depth.valid[j] = 0;
  }
  return out;
}

/// Consistency of ref pixel (x, y) with one source view; zero whenever the
/// round trip cannot be completed.
inline double pairwise_consistency(const ViewEstimate& ref, const ViewEstimate& src,
                                   int x, int y, double lambda) {
  if (!ref.depth.is_valid(x, y)) return 0.0;
  const Vec2 p(x, y);
  const double d = ref.depth.at(x, y);
  const Reprojection r = reproject(ref.camera, src.camera, p, d, src.depth);
  if (!r.ok()) return 0.0;
  const auto e = reprojection_errors(p, r.pixel, d, r.depth);
  return matching_consistency(e.pixel, e.depth, lambda);
}

/// Per-pixel sum of source-view consistencies (the reference view itself
/// is not part of the sum). Invalid reference pixels get 0.
inline std::vector<double> dynamic_consistency_map(const ViewEstimate& ref,
                                                   const ViewRefs& srcs,
                                                   double lambda) {
  if (srcs.empty()) throw InvalidArgument("dynamic_consistency_map needs a source view");
  std::vector<double> geo(ref.depth.depth.size(), 0.0);
  for (int y = 0; y < ref.height(); ++y) {
    for (int x = 0; x < ref.width(); ++x) {
      if (!ref.depth.is_valid(x, y)) continue;
      double sum = 0.0;
      for (const auto& s : srcs) sum += pairwise_consistency(ref, s.get(), x, y, lambda);
      geo[ref.depth.index(x, y)] = sum;
    }
  }
  return geo;
}

/// Confidence filter followed by the summed-consistency test C_geo >= tau.
inline ViewEstimate dynamic_filter(const ViewEstimate& ref, const ViewRefs& srcs,
                                   const FusionParams& params) {
  params.check();
  ViewEstimate out = probability_filter(ref, params.phi);
  const auto geo = dynamic_consistency_map(out, srcs, params.lambda);
  for (std::size_t j = 0; j < geo.size(); ++j) {
    if (out.depth.valid[j] && !(geo[j] >= params.tau)) out.depth.valid[j] = 0;
  }
  return out;
}

/// Number of source views in which ref pixel (x, y) reprojects with
/// xi_p < tau_pixel and xi_d < tau_depth.
inline int consistent_view_count(const ViewEstimate& ref, const ViewRefs& srcs, int x,
                                 int y, double tau_pixel, double tau_depth) {
  if (!ref.depth.is_valid(x, y)) return 0;
  const Vec2 p(x, y);
  const double d = ref.depth.at(x, y);
  int n = 0;
  for (const auto& s : srcs) {
    const Reprojection r = reproject(ref.camera, s.get().camera, p, d, s.get().depth);
    if (!r.ok()) continue;
    const auto e = reprojection_errors(p, r.pixel, d, r.depth);
    n += e.pixel < tau_pixel && e.depth < tau_depth;
  }
  return n;
}

/// Baseline filter: keep a pixel when at least `min_views` sources agree
/// within fixed pixel and relative-depth thresholds (strict comparisons).
inline ViewEstimate fixed_threshold_filter(const ViewEstimate& ref, const ViewRefs& srcs,
                                           double tau_pixel, double tau_depth,
                                           int min_views) {
  check_dimensions(ref);
  ViewEstimate out = ref;
  for (int y = 0; y < ref.height(); ++y) {
    for (int x = 0; x < ref.width(); ++x) {
      if (!ref.depth.is_valid(x, y)) continue;
      if (consistent_view_count(ref, srcs, x, y, tau_pixel, tau_depth) < min_views) {
        out.depth.invalidate(x, y);
      }
    }
  }
  return out;
}

inline std::vector<std::vector<int>> all_other_views(std::size_t n) {
  std::vector<std::vector<int>> sources(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) sources[i].push_back(static_cast<int>(j));
    }
  }
  return sources;
}

inline Rgb8 to_rgb8(const ImageBuffer& img, int x, int y) {
  const auto q = [](float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
  };
  if (img.channels == 1) {
    const auto g = q(img.at(x, y));
    return {g, g, g};
  }
  return {q(img.at(x, y, 0)), q(img.at(x, y, 1)), q(img.at(x, y, 2))};
}

/// Fuses filtered views into one cloud. Views are visited in index order;
/// every valid, not yet consumed pixel becomes one point: the
/// consistency-weighted mean of its own 3D point (weight 1) and the 3D
/// points of the source pixels its projection lands on, for sources with
/// c > e^-3. The source pixel's own point is used rather than the round-trip
/// point, which pairs the depth of the rounded pixel with the unrounded ray
/// and so drifts off the surface by the local depth slope. Source pixels
/// that contributed are marked consumed and are not emitted again.
///
/// `sources[i]` lists the views checked for view i; empty means all others.
inline PointCloud fuse_point_cloud(std::span<const ViewEstimate> views,
                                   std::vector<std::vector<int>> sources = {},
                                   double lambda = 200.0) {
  if (views.empty()) throw InvalidArgument("fuse_point_cloud needs at least one view");
  if (sources.empty()) sources = all_other_views(views.size());
  if (sources.size() != views.size()) {
    throw InvalidArgument("fuse_point_cloud: one source list per view required");
  }
  for (const auto& v : views) check_dimensions(v);
  const bool colored = std::all_of(views.begin(), views.end(),
                                   [](const ViewEstimate& v) { return v.image.has_value(); });

  std::vector<std::vector<std::uint8_t>> consumed(views.size());
  for (std::size_t i = 0; i < views.size(); ++i) {
    consumed[i].assign(views[i].depth.valid.size(), 0);
  }

  PointCloud cloud;
  for (std::size_t i = 0; i < views.size(); ++i) {
    const ViewEstimate& ref = views[i];
    for (int y = 0; y < ref.height(); ++y) {
      for (int x = 0; x < ref.width(); ++x) {
        const std::size_t pix = ref.depth.index(x, y);
        if (!ref.depth.valid[pix] || consumed[i][pix]) continue;
        const Vec2 p(x, y);
        const double d = ref.depth.depth[pix];
        double weight = 1.0;
        Vec3 weighted_point = back_project(ref.camera, p, d);
        for (int j : sources[i]) {
          if (j < 0 || static_cast<std::size_t>(j) >= views.size() ||
              static_cast<std::size_t>(j) == i) {
            continue;
          }
          const ViewEstimate& src = views[j];
          const Reprojection r = reproject(ref.camera, src.camera, p, d, src.depth);
          if (!r.ok()) continue;
          const auto e = reprojection_errors(p, r.pixel, d, r.depth);
          const double c = matching_consistency(e.pixel, e.depth, lambda);
          if (!(c > kFusionMinConsistency)) continue;
          int qx = 0;
          int qy = 0;
          if (!round_to_pixel(r.source_pixel, src.width(), src.height(), qx, qy)) continue;
          const std::size_t q = src.depth.index(qx, qy);
          weight += c;
          weighted_point += c * back_project(src.camera, Vec2(qx, qy), src.depth.depth[q]);
          consumed[j][q] = 1;
        }
        consumed[i][pix] = 1;
        cloud.points.push_back(weighted_point / weight);
        if (colored) cloud.colors.push_back(to_rgb8(*ref.image, x, y));
      }
    }
  }
  return cloud;
}

}  // namespace sweepfuse

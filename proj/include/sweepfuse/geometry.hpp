#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sweepfuse/errors.hpp"
#include "sweepfuse/maps.hpp"
#include "sweepfuse/memory.hpp"

namespace sweepfuse {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Pinhole camera P = K [R | t] with a world-to-camera rotation.
///
/// Pixel coordinates are continuous and integer-centred: the centre of
/// pixel (i, j) sits exactly at (i, j).
class Camera {
 public:
  Camera(const Mat3& intrinsic, const Mat3& rotation, const Vec3& translation)
      : intrinsic_(intrinsic), rotation_(rotation), translation_(translation) {
    validate();
    projection_ = intrinsic_ * rotation_;
    offset_ = intrinsic_ * translation_;
    projection_inv_ = projection_.inverse();
  }

  const Mat3& intrinsic() const noexcept { return intrinsic_; }
  const Mat3& rotation() const noexcept { return rotation_; }
  const Vec3& translation() const noexcept { return translation_; }

  // M = K R and t' = K t, so that P = [M | t'].
  const Mat3& M() const noexcept { return projection_; }
  const Vec3& t() const noexcept { return offset_; }
  const Mat3& M_inverse() const noexcept { return projection_inv_; }

  Vec3 center() const { return -rotation_.transpose() * translation_; }

  static double rotation_error(const Mat3& r) {
    return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
  }

 private:
  void validate() const {
    for (int i = 0; i < 3; ++i) {
      if (!(intrinsic_(i, i) > 0.0)) {
        throw InvalidCamera("intrinsic diagonal must be positive");
      }
      for (int j = 0; j < i; ++j) {
        if (intrinsic_(i, j) != 0.0) {
          throw InvalidCamera("intrinsic must be upper triangular");
        }
      }
    }
    if (!intrinsic_.allFinite() || !rotation_.allFinite() ||
        !translation_.allFinite()) {
      throw InvalidCamera("camera parameters must be finite");
    }
    if (!(rotation_error(rotation_) < 1e-9) || rotation_.determinant() <= 0.0) {
      throw InvalidCamera("rotation is not a proper orthonormal matrix");
    }
    if (!(std::abs((intrinsic_ * rotation_).determinant()) > 1e-12)) {
      throw InvalidCamera("projection matrix is singular");
    }
  }

  Mat3 intrinsic_;
  Mat3 rotation_;
  Vec3 translation_;
  Mat3 projection_;
  Vec3 offset_;
  Mat3 projection_inv_;
};

// Closest proper rotation in the Frobenius sense.
inline Mat3 nearest_rotation(const Mat3& r) {
  Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return u * v.transpose();
}

struct Projection {
  Vec2 pixel;
  double depth;
};

/// X = M^-1 (d * p~ - t).
inline Vec3 back_project(const Camera& cam, const Vec2& p, double depth) {
  return cam.M_inverse() * (depth * Vec3(p.x(), p.y(), 1.0) - cam.t());
}

/// Returns std::nullopt when the point is behind the camera (depth <= 0).
inline std::optional<Projection> project(const Camera& cam, const Vec3& x) {
  const Vec3 w = cam.M() * x + cam.t();
  if (!(w.z() > 0.0)) return std::nullopt;
  return Projection{Vec2(w.x() / w.z(), w.y() / w.z()), w.z()};
}

enum class ReprojectStatus {
  kOk,
  kBehindCamera,
  kOutOfBounds,
  kMasked,
};

inline const char* to_string(ReprojectStatus s) {
  switch (s) {
    case ReprojectStatus::kOk: return "ok";
    case ReprojectStatus::kBehindCamera: return "behind-camera";
    case ReprojectStatus::kOutOfBounds: return "out-of-bounds";
    case ReprojectStatus::kMasked: return "masked";
  }
  return "unknown";
}

struct DepthSample {
  ReprojectStatus status = ReprojectStatus::kOk;
  double depth = 0.0;
};

struct Reprojection {
  ReprojectStatus status = ReprojectStatus::kOk;
  Vec2 source_pixel = Vec2::Zero();  // q in the source view
  Vec2 pixel = Vec2::Zero();         // p' back in the reference view
  double depth = 0.0;                // d'

  bool ok() const noexcept { return status == ReprojectStatus::kOk; }
};

inline bool round_to_pixel(const Vec2& q, int width, int height, int& x,
                           int& y) {
  const double rx = std::floor(q.x() + 0.5);
  const double ry = std::floor(q.y() + 0.5);
  if (!(rx >= 0.0 && ry >= 0.0 && rx < width && ry < height)) return false;
  x = static_cast<int>(rx);
  y = static_cast<int>(ry);
  return true;
}

/// Nearest-pixel depth lookup. Interpolating across depth discontinuities
/// would fabricate depths that no view observed.
inline DepthSample nearest_depth(const DepthMap& map, const Vec2& q) {
  int x = 0;
  int y = 0;
  if (!round_to_pixel(q, map.width, map.height, x, y)) {
    return {ReprojectStatus::kOutOfBounds, 0.0};
  }
  if (!map.is_valid(x, y)) return {ReprojectStatus::kMasked, 0.0};
  return {ReprojectStatus::kOk, map.at(x, y)};
}

/// ref pixel -> 3D -> source pixel q -> source depth at q -> 3D -> ref pixel.
/// `lookup(q)` returns the source depth at q as a DepthSample; any callable
/// works, which lets analytic surfaces stand in for rasterised maps.
template <class DepthLookup>
Reprojection reproject_with(const Camera& ref, const Camera& src, const Vec2& p,
                            double ref_depth, DepthLookup&& lookup) {
  Reprojection out;
  const auto q = project(src, back_project(ref, p, ref_depth));
  if (!q) {
    out.status = ReprojectStatus::kBehindCamera;
    return out;
  }
  out.source_pixel = q->pixel;
  const DepthSample sample = lookup(q->pixel);
  if (sample.status != ReprojectStatus::kOk) {
    out.status = sample.status;
    return out;
  }
  if (!(sample.depth > 0.0)) {
    out.status = ReprojectStatus::kBehindCamera;
    return out;
  }
  const auto back = project(ref, back_project(src, q->pixel, sample.depth));
  if (!back) {
    out.status = ReprojectStatus::kBehindCamera;
    return out;
  }
  out.pixel = back->pixel;
  out.depth = back->depth;
  return out;
}

inline Reprojection reproject(const Camera& ref, const Camera& src,
                              const Vec2& p, double ref_depth,
                              const DepthMap& src_depth) {
  return reproject_with(ref, src, p, ref_depth, [&](const Vec2& q) {
    return nearest_depth(src_depth, q);
  });
}

struct ReprojectionErrors {
  double pixel;  // xi_p, pixels
  double depth;  // xi_d, relative
};

inline ReprojectionErrors reprojection_errors(const Vec2& p, const Vec2& p2,
                                              double depth, double depth2) {
  return {(p - p2).norm(), std::abs(depth - depth2) / depth};
}

enum class DepthSampling { kUniform, kInverse };

/// Range of depth hypotheses swept per reference view.
class HypothesisSpace {
 public:
  HypothesisSpace(double depth_min, double depth_max, int count,
                  DepthSampling mode = DepthSampling::kUniform)
      : depth_min_(depth_min), depth_max_(depth_max), count_(count),
        mode_(mode) {
    if (!(depth_min > 0.0) || !(depth_max > depth_min) ||
        !std::isfinite(depth_max)) {
      throw InvalidArgument("hypothesis space requires 0 < d_min < d_max");
    }
    if (count < 2) throw InvalidArgument("hypothesis space requires D >= 2");
  }

  double depth_min() const noexcept { return depth_min_; }
  double depth_max() const noexcept { return depth_max_; }
  int count() const noexcept { return count_; }
  DepthSampling mode() const noexcept { return mode_; }

  // Spacing of the sampled coordinate: depth for uniform, 1/depth for
  // inverse (negative in that case, as 1/d decreases).
  double step() const noexcept {
    return mode_ == DepthSampling::kUniform
               ? (depth_max_ - depth_min_) / (count_ - 1)
               : (1.0 / depth_max_ - 1.0 / depth_min_) / (count_ - 1);
  }

  // Fractional bin position of a depth in the sampled metric.
  double position(double depth) const noexcept {
    return mode_ == DepthSampling::kUniform
               ? (depth - depth_min_) / step()
               : (1.0 / depth - 1.0 / depth_min_) / step();
  }

  double depth_at(int k) const noexcept {
    if (k == 0) return depth_min_;
    if (k == count_ - 1) return depth_max_;
    if (mode_ == DepthSampling::kUniform) return depth_min_ + k * step();
    return 1.0 / (1.0 / depth_min_ + k * step());
  }

 private:
  double depth_min_;
  double depth_max_;
  int count_;
  DepthSampling mode_;
};

inline std::vector<double> sample_hypotheses(const HypothesisSpace& h) {
  std::vector<double> depths(static_cast<std::size_t>(h.count()));
  for (int k = 0; k < h.count(); ++k) depths[k] = h.depth_at(k);
  return depths;
}

/// Source-view sampling coordinates for every reference pixel at one
/// fronto-parallel depth plane. An entry is valid when it lies in front of
/// the source camera and inside [0, W-1] x [0, H-1], so that bilinear
/// sampling needs no padding.
struct WarpGrid {
  int width = 0;
  int height = 0;
  tracked_vector<double> x;
  tracked_vector<double> y;
  tracked_vector<std::uint8_t> valid;

  std::size_t index(int px, int py) const {
    return static_cast<std::size_t>(py) * width + px;
  }
};

inline double snap_to_range(double v, double hi) {
  constexpr double kSnap = 1e-9;
  if (v < 0.0 && v > -kSnap) return 0.0;
  if (v > hi && v < hi + kSnap) return hi;
  return v;
}

/// Plane-induced warp: for X = M_r^-1 (d p~ - t_r),
///   P_s X = d (M_s M_r^-1) p~ + (t_s - M_s M_r^-1 t_r),
/// so the per-plane mapping is an affine function of p~ scaled by d.
inline WarpGrid warp_grid(const Camera& ref, const Camera& src, double depth,
                          int width, int height, int src_width = -1,
                          int src_height = -1) {
  if (!(depth > 0.0)) throw InvalidArgument("warp_grid requires depth > 0");
  if (src_width < 0) src_width = width;
  if (src_height < 0) src_height = height;
  const Mat3 a = src.M() * ref.M_inverse();
  const Vec3 b = src.t() - a * ref.t();

  WarpGrid grid;
  grid.width = width;
  grid.height = height;
  const std::size_t n = static_cast<std::size_t>(width) * height;
  grid.x.assign(n, 0.0);
  grid.y.assign(n, 0.0);
  grid.valid.assign(n, 0);
  for (int py = 0; py < height; ++py) {
    for (int px = 0; px < width; ++px) {
      const Vec3 w = depth * (a * Vec3(px, py, 1.0)) + b;
      const std::size_t i = grid.index(px, py);
      if (!(w.z() > 0.0)) continue;
      // Snap round-off just outside the border back onto it, so that a
      // view warped into itself stays valid at the last row and column.
      const double qx = snap_to_range(w.x() / w.z(), src_width - 1);
      const double qy = snap_to_range(w.y() / w.z(), src_height - 1);
      grid.x[i] = qx;
      grid.y[i] = qy;
      grid.valid[i] = qx >= 0.0 && qy >= 0.0 && qx <= src_width - 1 &&
                      qy <= src_height - 1;
    }
  }
  return grid;
}

}  // namespace sweepfuse

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <variant>
#include <vector>

#include "sweepfuse/errors.hpp"
#include "sweepfuse/geometry.hpp"
#include "sweepfuse/maps.hpp"
#include "sweepfuse/pointcloud.hpp"
#include "sweepfuse/rng.hpp"

namespace sweepfuse {

/// Points X with normal . X = offset.
struct PlaneSurface {
  Vec3 normal;
  double offset = 0.0;
};

struct SphereSurface {
  Vec3 center;
  double radius = 1.0;
};

using Surface = std::variant<PlaneSurface, SphereSurface>;

/// Procedural value-noise albedo, see value_noise().
struct TextureSpec {
  std::uint64_t seed = 1;
  double frequency = 3.0;  // lattice cells per world unit, first octave
  int octaves = 3;
  double contrast = 2.0;
};

struct SceneSpec {
  Surface surface;
  int width = 64;
  int height = 48;
  TextureSpec texture;
};

/// n cameras on a circle of radius `ring_radius` around the axis through
/// `look_at`, raised `vertical_offset` along -z, all looking at `look_at`.
struct CameraRigSpec {
  int views = 7;
  double ring_radius = 3.0;
  Vec3 look_at = Vec3::Zero();
  double vertical_offset = 10.0;
  Mat3 intrinsic = Mat3::Identity();
};

inline Mat3 make_intrinsic(double focal, int width, int height) {
  Mat3 k = Mat3::Identity();
  k(0, 0) = focal;
  k(1, 1) = focal;
  k(0, 2) = 0.5 * (width - 1);
  k(1, 2) = 0.5 * (height - 1);
  return k;
}

/// Camera at `center` looking at `target`; image y points along the
/// projection of world +y.
inline Camera look_at_camera(const Mat3& intrinsic, const Vec3& center,
                             const Vec3& target) {
  const Vec3 z = (target - center).normalized();
  Vec3 x = Vec3::UnitY().cross(z);
  if (x.norm() < 1e-9) x = Vec3::UnitX();
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.row(0) = x.transpose();
  r.row(1) = y.transpose();
  r.row(2) = z.transpose();
  return Camera(intrinsic, r, -r * center);
}

inline std::vector<Camera> make_camera_ring(const CameraRigSpec& spec) {
  if (spec.views < 1) throw InvalidArgument("camera ring needs at least one view");
  if (spec.ring_radius < 0.0) throw InvalidArgument("ring radius must be non-negative");
  if (spec.vertical_offset == 0.0 && spec.ring_radius == 0.0) {
    throw InvalidArgument("camera ring collapses onto the look-at point");
  }
  std::vector<Camera> cams;
  cams.reserve(static_cast<std::size_t>(spec.views));
  for (int k = 0; k < spec.views; ++k) {
    const double theta = 2.0 * std::numbers::pi * k / spec.views;
    const Vec3 center = spec.look_at + Vec3(spec.ring_radius * std::cos(theta),
                                            spec.ring_radius * std::sin(theta),
                                            -spec.vertical_offset);
    cams.push_back(look_at_camera(spec.intrinsic, center, spec.look_at));
  }
  return cams;
}

/// z-depth at which the ray through pixel q first meets the surface.
inline std::optional<double> surface_depth(const Surface& surface, const Camera& cam,
                                           const Vec2& q) {
  // X(d) = C + d * r hits the image plane at depth d.
  const Vec3 c = cam.center();
  const Vec3 r = cam.M_inverse() * Vec3(q.x(), q.y(), 1.0);
  if (const auto* plane = std::get_if<PlaneSurface>(&surface)) {
    const double denom = plane->normal.dot(r);
    if (std::abs(denom) < 1e-15) return std::nullopt;
    const double d = (plane->offset - plane->normal.dot(c)) / denom;
    if (!(d > 0.0)) return std::nullopt;
    return d;
  }
  const auto& sphere = std::get<SphereSurface>(surface);
  const Vec3 oc = c - sphere.center;
  const double a = r.squaredNorm();
  const double b = 2.0 * r.dot(oc);
  const double k = oc.squaredNorm() - sphere.radius * sphere.radius;
  const double disc = b * b - 4.0 * a * k;
  if (disc < 0.0) return std::nullopt;
  const double sq = std::sqrt(disc);
  const double near = (-b - sq) / (2.0 * a);
  if (near > 0.0) return near;
  const double far = (-b + sq) / (2.0 * a);
  if (far > 0.0) return far;
  return std::nullopt;
}

/// Source-depth lookup for reproject_with() that intersects the surface
/// directly instead of reading a rasterised map.
inline auto analytic_depth_lookup(const Surface& surface, const Camera& cam, int width,
                                  int height) {
  return [&surface, &cam, width, height](const Vec2& q) {
    if (!(q.x() >= -0.5 && q.x() < width - 0.5 && q.y() >= -0.5 && q.y() < height - 0.5)) {
      return DepthSample{ReprojectStatus::kOutOfBounds, 0.0};
    }
    const auto d = surface_depth(surface, cam, q);
    return d ? DepthSample{ReprojectStatus::kOk, *d} : DepthSample{ReprojectStatus::kMasked, 0.0};
  };
}

/// True when surface point x lands inside the image of `cam` and is the
/// first surface hit along that pixel's ray (not occluded).
inline bool is_covisible(const Surface& surface, const Camera& cam, const Vec3& x, int width,
                         int height) {
  const auto q = project(cam, x);
  if (!q) return false;
  const auto s = analytic_depth_lookup(surface, cam, width, height)(q->pixel);
  return s.status == ReprojectStatus::kOk && std::abs(s.depth - q->depth) <= 1e-9 * q->depth;
}

namespace detail {

inline double lattice_value(std::int64_t ix, std::int64_t iy, std::int64_t iz,
                            std::uint64_t seed) {
  std::uint64_t h = seed * 0x9e3779b97f4a7c15ULL;
  h = mix64(h ^ static_cast<std::uint64_t>(ix) * 0xa24baed4963ee407ULL);
  h = mix64(h ^ static_cast<std::uint64_t>(iy) * 0x9fb21c651e98df25ULL);
  h = mix64(h ^ static_cast<std::uint64_t>(iz) * 0xc2b2ae3d27d4eb4fULL);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double fade(double t) { return t * t * (3.0 - 2.0 * t); }

}  // namespace detail

/// Single-octave 3D value noise in [0,1): hashed lattice values blended
/// trilinearly with smoothstep weights.
inline double value_noise(const Vec3& p, std::uint64_t seed) {
  const double fx = std::floor(p.x());
  const double fy = std::floor(p.y());
  const double fz = std::floor(p.z());
  const auto ix = static_cast<std::int64_t>(fx);
  const auto iy = static_cast<std::int64_t>(fy);
  const auto iz = static_cast<std::int64_t>(fz);
  const double tx = detail::fade(p.x() - fx);
  const double ty = detail::fade(p.y() - fy);
  const double tz = detail::fade(p.z() - fz);
  double corner[2][2][2];
  for (int dz = 0; dz < 2; ++dz) {
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx) {
        corner[dz][dy][dx] = detail::lattice_value(ix + dx, iy + dy, iz + dz, seed);
      }
    }
  }
  const auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
  double plane[2];
  for (int dz = 0; dz < 2; ++dz) {
    plane[dz] = lerp(lerp(corner[dz][0][0], corner[dz][0][1], tx),
                     lerp(corner[dz][1][0], corner[dz][1][1], tx), ty);
  }
  return lerp(plane[0], plane[1], tz);
}

/// Octave sum (frequency doubling, amplitude halving) normalised to [0,1),
/// then contrast-stretched around 0.5 and clamped.
inline double texture_value(const TextureSpec& tex, const Vec3& x, std::uint64_t channel) {
  double sum = 0.0;
  double norm = 0.0;
  double amp = 1.0;
  double freq = tex.frequency;
  for (int o = 0; o < tex.octaves; ++o) {
    sum += amp * value_noise(x * freq, tex.seed * 131 + channel * 17 + o);
    norm += amp;
    amp *= 0.5;
    freq *= 2.0;
  }
  const double v = 0.5 + tex.contrast * (sum / norm - 0.5);
  return std::clamp(v, 0.0, 1.0);
}

struct RenderedView {
  ImageBuffer image;
  DepthMap depth;
};

/// Unlit rendering: every pixel whose ray hits the surface gets the albedo
/// at the hit point and its exact z-depth; other pixels are background
/// (black, invalid depth).
inline std::vector<RenderedView> render_scene(const SceneSpec& scene,
                                              const std::vector<Camera>& cams) {
  std::vector<RenderedView> views;
  views.reserve(cams.size());
  for (std::size_t v = 0; v < cams.size(); ++v) {
    RenderedView out{ImageBuffer(scene.width, scene.height, 3),
                     DepthMap(scene.width, scene.height)};
    for (int y = 0; y < scene.height; ++y) {
      for (int x = 0; x < scene.width; ++x) {
        const Vec2 p(x, y);
        const auto d = surface_depth(scene.surface, cams[v], p);
        if (!d) continue;
        const Vec3 hit = back_project(cams[v], p, *d);
        for (int c = 0; c < 3; ++c) {
          out.image.at(x, y, c) = static_cast<float>(texture_value(scene.texture, hit, c));
        }
        out.depth.set(x, y, static_cast<float>(*d));
      }
    }
    if (out.depth.valid_count() == 0) {
      throw NoIntersection("view " + std::to_string(v) + " does not see the surface");
    }
    views.push_back(std::move(out));
  }
  return views;
}

struct PerturbModel {
  double sigma = 0.0;             // additive gaussian noise, depth units
  double outlier_fraction = 0.0;  // fraction of valid pixels replaced
  // Range of replacement depths; when empty, [0.5 min, 1.5 max] of the
  // valid depths.
  double outlier_min = 0.0;
  double outlier_max = 0.0;
};

/// Adds gaussian noise to every valid depth, then replaces exactly
/// floor(outlier_fraction * n_valid) distinct valid pixels with uniform
/// random depths. The mask is left untouched.
inline DepthMap perturb_depths(const DepthMap& in, const PerturbModel& model,
                               std::uint64_t seed) {
  if (model.sigma < 0.0 || model.outlier_fraction < 0.0 || model.outlier_fraction > 1.0) {
    throw InvalidArgument("perturbation parameters out of range");
  }
  DepthMap out = in;
  SplitMix64 rng(seed);
  std::vector<std::size_t> valid;
  for (std::size_t j = 0; j < in.valid.size(); ++j) {
    if (in.valid[j]) valid.push_back(j);
  }
  if (model.sigma > 0.0) {
    for (std::size_t j : valid) {
      const double d = in.depth[j] + model.sigma * rng.normal();
      out.depth[j] = static_cast<float>(std::max(d, 1e-6));
    }
  }
  const auto count = static_cast<std::size_t>(
      std::floor(model.outlier_fraction * static_cast<double>(valid.size())));
  if (count == 0) return out;

  double lo = model.outlier_min;
  double hi = model.outlier_max;
  if (!(hi > lo)) {
    float mn = std::numeric_limits<float>::max();
    float mx = 0.0f;
    for (std::size_t j : valid) {
      mn = std::min(mn, in.depth[j]);
      mx = std::max(mx, in.depth[j]);
    }
    lo = 0.5 * mn;
    hi = 1.5 * mx;
  }
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t pick = k + static_cast<std::size_t>(rng.below(valid.size() - k));
    std::swap(valid[k], valid[pick]);
    const std::size_t j = valid[k];
    float d = out.depth[j];
    while (d == out.depth[j]) d = static_cast<float>(rng.uniform(lo, hi));
    out.depth[j] = d;
  }
  return out;
}

/// Back-projects every valid pixel of every view.
inline PointCloud depth_maps_to_cloud(const std::vector<Camera>& cams,
                                      const std::vector<DepthMap>& depths) {
  PointCloud cloud;
  for (std::size_t v = 0; v < cams.size(); ++v) {
    const DepthMap& d = depths[v];
    for (int y = 0; y < d.height; ++y) {
      for (int x = 0; x < d.width; ++x) {
        if (d.is_valid(x, y)) cloud.points.push_back(back_project(cams[v], Vec2(x, y), d.at(x, y)));
      }
    }
  }
  return cloud;
}

/// Built-in scenes used by the CLI and the end-to-end tests.
enum class SceneKind { kPlane, kSphere };

struct SyntheticSetup {
  SceneSpec scene;
  CameraRigSpec rig;
};

inline SyntheticSetup default_setup(SceneKind kind, int views, int width, int height,
                                    std::uint64_t seed) {
  SyntheticSetup s;
  s.scene.width = width;
  s.scene.height = height;
  s.scene.texture.seed = seed;
  s.rig.views = views;
  s.rig.look_at = Vec3::Zero();
  s.rig.vertical_offset = 10.0;
  if (kind == SceneKind::kPlane) {
    // Narrow field of view: the depth span inside each view stays small, so
    // 32 hypotheses resolve depth to about 0.1%.
    s.rig.ring_radius = 2.0;
    s.rig.intrinsic = make_intrinsic(20.0 * width, width, height);
    s.scene.surface = PlaneSurface{Vec3(0.08, -0.05, 1.0).normalized(), 0.0};
    s.scene.texture.frequency = 13.0;
  } else {
    s.rig.ring_radius = 3.0;
    s.rig.intrinsic = make_intrinsic(1.6 * width, width, height);
    s.scene.surface = SphereSurface{Vec3::Zero(), 2.0};
    s.scene.texture.frequency = 2.0;
  }
  return s;
}

}  // namespace sweepfuse

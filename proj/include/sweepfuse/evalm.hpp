#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>

#include <json.hpp>

#include "sweepfuse/errors.hpp"
#include "sweepfuse/pointcloud.hpp"

namespace sweepfuse {

namespace detail {

namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;
using BoostPoint = bg::model::point<double, 3, bg::cs::cartesian>;

}  // namespace detail

/// Exact nearest-neighbour index over a point set (R-tree, quadratic split).
class NearestNeighborIndex {
 public:
  explicit NearestNeighborIndex(const std::vector<Vec3>& points) {
    if (points.empty()) throw EmptyReference("nearest-neighbour index over an empty cloud");
    std::vector<detail::BoostPoint> pts;
    pts.reserve(points.size());
    for (const auto& p : points) pts.emplace_back(p.x(), p.y(), p.z());
    tree_ = Tree(pts.begin(), pts.end());
  }

  double distance(const Vec3& q) const {
    detail::BoostPoint hit;
    tree_.query(detail::bgi::nearest(detail::BoostPoint(q.x(), q.y(), q.z()), 1), &hit);
    const Vec3 h(detail::bg::get<0>(hit), detail::bg::get<1>(hit),
                 detail::bg::get<2>(hit));
    return (h - q).norm();
  }

 private:
  using Tree = detail::bgi::rtree<detail::BoostPoint, detail::bgi::quadratic<16>>;
  Tree tree_;
};

/// Distance from every point of `a` to its nearest neighbour in `b`.
inline std::vector<double> nearest_distance(const PointCloud& a, const PointCloud& b) {
  if (b.empty()) throw EmptyReference("nearest_distance: reference cloud is empty");
  const NearestNeighborIndex index(b.points);
  std::vector<double> out;
  out.reserve(a.size());
  for (const auto& p : a.points) out.push_back(index.distance(p));
  return out;
}

// O(|a| |b|) reference implementation.
inline std::vector<double> nearest_distance_brute(const PointCloud& a,
                                                  const PointCloud& b) {
  if (b.empty()) throw EmptyReference("nearest_distance: reference cloud is empty");
  std::vector<double> out;
  out.reserve(a.size());
  for (const auto& p : a.points) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : b.points) best = std::min(best, (p - q).squaredNorm());
    out.push_back(std::sqrt(best));
  }
  return out;
}

struct AccuracyCompleteness {
  double accuracy = 0.0;
  double completeness = 0.0;
  double overall = 0.0;
};

struct FScore {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
};

inline void require_clouds(const PointCloud& recon, const PointCloud& gt) {
  if (recon.empty()) throw EmptyCloud("reconstruction cloud is empty");
  if (gt.empty()) throw EmptyCloud("ground-truth cloud is empty");
}

/// Mean nearest distances, each truncated at max_dist.
inline AccuracyCompleteness accuracy_completeness(const PointCloud& recon,
                                                  const PointCloud& gt,
                                                  double max_dist) {
  require_clouds(recon, gt);
  const auto truncated_mean = [&](const std::vector<double>& d) {
    double sum = 0.0;
    for (double v : d) sum += std::min(v, max_dist);
    return sum / static_cast<double>(d.size());
  };
  AccuracyCompleteness r;
  r.accuracy = truncated_mean(nearest_distance(recon, gt));
  r.completeness = truncated_mean(nearest_distance(gt, recon));
  r.overall = 0.5 * (r.accuracy + r.completeness);
  return r;
}

inline double fraction_below(const std::vector<double>& d, double threshold) {
  std::size_t n = 0;
  for (double v : d) n += v < threshold;
  return static_cast<double>(n) / static_cast<double>(d.size());
}

inline double harmonic_f(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

/// Precision and recall count points strictly closer than `threshold`.
inline FScore fscore(const PointCloud& recon, const PointCloud& gt, double threshold) {
  require_clouds(recon, gt);
  FScore r;
  r.precision = fraction_below(nearest_distance(recon, gt), threshold);
  r.recall = fraction_below(nearest_distance(gt, recon), threshold);
  r.f = harmonic_f(r.precision, r.recall);
  return r;
}

inline constexpr double kDefaultTruncationFactor = 20.0;

struct EvalReport {
  double threshold = 0.0;
  double max_dist = 0.0;
  std::size_t recon_points = 0;
  std::size_t gt_points = 0;
  double accuracy = 0.0;
  double completeness = 0.0;
  double overall = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f_score = 0.0;
};

/// Both metric families from a single pair of nearest-neighbour passes.
/// max_dist <= 0 selects 20x the threshold.
inline EvalReport evaluate(const PointCloud& recon, const PointCloud& gt,
                           double threshold, double max_dist = 0.0) {
  require_clouds(recon, gt);
  if (max_dist <= 0.0) max_dist = kDefaultTruncationFactor * threshold;
  const auto to_gt = nearest_distance(recon, gt);
  const auto to_recon = nearest_distance(gt, recon);
  const auto truncated_mean = [&](const std::vector<double>& d) {
    double sum = 0.0;
    for (double v : d) sum += std::min(v, max_dist);
    return sum / static_cast<double>(d.size());
  };
  EvalReport r;
  r.threshold = threshold;
  r.max_dist = max_dist;
  r.recon_points = recon.size();
  r.gt_points = gt.size();
  r.accuracy = truncated_mean(to_gt);
  r.completeness = truncated_mean(to_recon);
  r.overall = 0.5 * (r.accuracy + r.completeness);
  r.precision = fraction_below(to_gt, threshold);
  r.recall = fraction_below(to_recon, threshold);
  r.f_score = harmonic_f(r.precision, r.recall);
  return r;
}

inline std::string to_key_value(const EvalReport& r) {
  std::ostringstream os;
  os << std::setprecision(9);
  os << "threshold=" << r.threshold << '\n'
     << "max_dist=" << r.max_dist << '\n'
     << "recon_points=" << r.recon_points << '\n'
     << "gt_points=" << r.gt_points << '\n'
     << "accuracy=" << r.accuracy << '\n'
     << "completeness=" << r.completeness << '\n'
     << "overall=" << r.overall << '\n'
     << "precision=" << r.precision << '\n'
     << "recall=" << r.recall << '\n'
     << "f_score=" << r.f_score << '\n';
  return os.str();
}

inline nlohmann::json to_json(const EvalReport& r) {
  return {
      {"threshold", r.threshold},   {"max_dist", r.max_dist},
      {"recon_points", r.recon_points}, {"gt_points", r.gt_points},
      {"accuracy", r.accuracy},     {"completeness", r.completeness},
      {"overall", r.overall},       {"precision", r.precision},
      {"recall", r.recall},         {"f_score", r.f_score},
  };
}

}  // namespace sweepfuse

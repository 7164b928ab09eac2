#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "sweepfuse/costvol.hpp"
#include "sweepfuse/errors.hpp"
#include "sweepfuse/estimator.hpp"
#include "sweepfuse/features.hpp"
#include "sweepfuse/fusion.hpp"
#include "sweepfuse/io.hpp"
#include "sweepfuse/regularizer.hpp"
#include "sweepfuse/synth.hpp"

namespace sweepfuse {

inline constexpr const char* kThreadsEnv = "SWEEPFUSE_THREADS";

/// Worker count from SWEEPFUSE_THREADS; 1 when unset or unparsable.
inline unsigned thread_count() {
  const char* v = std::getenv(kThreadsEnv);
  if (!v || !*v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) return 1;
  if (n > 256) return 256;
  return static_cast<unsigned>(n);
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers. The first
/// exception thrown by any task is rethrown after all workers stop.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  threads = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Depth estimation
// ---------------------------------------------------------------------------

enum class FeatureKind { kDrenet, kPhotometric };
enum class RegularizerKind { kHuLstm, kPassthrough };

// Inverse temperature for passthrough scores. Photometric variances are
// small (intensities in [0, 1]), so unit scale gives an almost flat softmax.
inline constexpr double kDefaultScoreScale = 1e5;

struct DepthConfig {
  FeatureKind features = FeatureKind::kPhotometric;
  RegularizerKind regularizer = RegularizerKind::kPassthrough;
  int num_depths = 32;
  DepthSampling sampling = DepthSampling::kUniform;
  double score_scale = kDefaultScoreScale;
  std::size_t max_sources = SIZE_MAX;
};

struct NetworkWeights {
  std::optional<DrenetWeights> drenet;
  std::optional<HuLstmWeights> hulstm;
};

inline FeatureMap extract_features(const ImageBuffer& img, FeatureKind kind,
                                   const NetworkWeights& weights) {
  if (kind == FeatureKind::kPhotometric) return photometric_features(img);
  if (!weights.drenet) throw InvalidArgument("drenet features need weights");
  return drenet_forward(img, *weights.drenet);
}

/// Depth and confidence of view `ref` swept against `sources`.
inline DepthEstimate estimate_view_depth(const std::vector<FeatureMap>& features,
                                         const std::vector<Camera>& cameras, std::size_t ref,
                                         const std::vector<int>& sources,
                                         const HypothesisSpace& hyp,
                                         const DepthConfig& config,
                                         const NetworkWeights& weights) {
  SweepViews views{std::cref(features.at(ref)), std::cref(cameras.at(ref)), {}, {}};
  for (int s : sources) {
    if (s < 0 || static_cast<std::size_t>(s) >= features.size() ||
        static_cast<std::size_t>(s) == ref) {
      throw InvalidArgument("invalid source view " + std::to_string(s));
    }
    if (views.sources.size() >= config.max_sources) break;
    views.sources.push_back(std::cref(features[s]));
    views.source_cameras.push_back(std::cref(cameras[s]));
  }
  CostVolumeStream stream(std::move(views), hyp);
  if (config.regularizer == RegularizerKind::kPassthrough) {
    PassthroughRegularizer reg(config.score_scale);
    return online_softmax_wta(stream, reg);
  }
  if (!weights.hulstm) throw InvalidArgument("hulstm regulariser needs weights");
  HuLstmRegularizer reg(*weights.hulstm);
  return online_softmax_wta(stream, reg);
}

struct InputView {
  ImageBuffer image;
  CamFile cam;
};

/// Estimates every view. Views are independent and run on thread_count()
/// workers unless `threads` is given.
inline std::vector<DepthEstimate> estimate_all(const std::vector<InputView>& inputs,
                                               const ViewPairs& pairs,
                                               const DepthConfig& config,
                                               const NetworkWeights& weights,
                                               unsigned threads = 0) {
  if (pairs.sources.size() != inputs.size()) {
    throw InvalidArgument("pair list covers " + std::to_string(pairs.sources.size()) +
                          " views, expected " + std::to_string(inputs.size()));
  }
  std::vector<FeatureMap> features(inputs.size());
  std::vector<Camera> cameras;
  for (const auto& in : inputs) cameras.push_back(in.cam.camera);
  if (threads == 0) threads = thread_count();
  parallel_for(inputs.size(), threads, [&](std::size_t i) {
    features[i] = extract_features(inputs[i].image, config.features, weights);
  });
  std::vector<DepthEstimate> out(inputs.size());
  parallel_for(inputs.size(), threads, [&](std::size_t i) {
    const auto hyp = inputs[i].cam.hypotheses(config.num_depths, config.sampling);
    out[i] = estimate_view_depth(features, cameras, i, pairs.source_ids(i), hyp, config,
                                 weights);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Filtering and fusion
// ---------------------------------------------------------------------------

enum class FilterKind { kDynamic, kFixed };

struct FuseConfig {
  FilterKind filter = FilterKind::kDynamic;
  FusionParams params;
};

/// Confidence filter on every view, then the chosen geometric filter with
/// each view checked against its (confidence-filtered) source views.
inline std::vector<ViewEstimate> filter_views(const std::vector<ViewEstimate>& views,
                                              const std::vector<std::vector<int>>& sources,
                                              const FuseConfig& config,
                                              unsigned threads = 0) {
  config.params.check();
  if (sources.size() != views.size()) {
    throw InvalidArgument("filter_views: one source list per view required");
  }
  std::vector<ViewEstimate> confident;
  confident.reserve(views.size());
  for (const auto& v : views) confident.push_back(probability_filter(v, config.params.phi));

  std::vector<ViewEstimate> out(confident);
  if (threads == 0) threads = thread_count();
  parallel_for(views.size(), threads, [&](std::size_t i) {
    ViewRefs srcs;
    for (int s : sources[i]) {
      if (s < 0 || static_cast<std::size_t>(s) >= views.size() ||
          static_cast<std::size_t>(s) == i) {
        throw InvalidArgument("invalid source view " + std::to_string(s));
      }
      srcs.push_back(std::cref(confident[s]));
    }
    if (config.filter == FilterKind::kDynamic) {
      out[i] = dynamic_filter(confident[i], srcs, config.params);
    } else {
      out[i] = fixed_threshold_filter(confident[i], srcs, config.params.tau_pixel,
                                      config.params.tau_depth, config.params.min_views);
    }
  });
  return out;
}

inline std::vector<std::vector<int>> source_lists(const ViewPairs& pairs) {
  std::vector<std::vector<int>> out;
  for (std::size_t i = 0; i < pairs.sources.size(); ++i) out.push_back(pairs.source_ids(i));
  return out;
}

inline PointCloud filter_and_fuse(const std::vector<ViewEstimate>& views,
                                  const std::vector<std::vector<int>>& sources,
                                  const FuseConfig& config) {
  const auto filtered = filter_views(views, sources, config);
  return fuse_point_cloud(filtered, sources, config.params.lambda);
}

// ---------------------------------------------------------------------------
// Project directories
// ---------------------------------------------------------------------------

inline std::vector<InputView> load_inputs(const ProjectLayout& layout, std::size_t views,
                                          const WarningSink& warn = default_warning) {
  std::vector<InputView> out;
  for (std::size_t i = 0; i < views; ++i) {
    out.push_back({read_pnm(layout.image(i)), read_cam(layout.camera(i), warn)});
  }
  return out;
}

inline ViewPairs load_pairs_or_all(const ProjectLayout& layout, std::size_t views) {
  if (fs::exists(layout.pairs())) {
    ViewPairs pairs = read_pairs(layout.pairs());
    if (pairs.sources.size() < views) {
      throw InvalidArgument("pair.txt lists fewer views than requested");
    }
    pairs.sources.resize(views);
    for (auto& list : pairs.sources) {
      std::erase_if(list, [&](const auto& e) { return static_cast<std::size_t>(e.first) >= views; });
    }
    return pairs;
  }
  ViewPairs pairs;
  for (const auto& list : all_other_views(views)) {
    auto& dst = pairs.sources.emplace_back();
    for (int id : list) dst.emplace_back(id, 1.0);
  }
  return pairs;
}

inline void save_estimate(const ProjectLayout& layout, std::size_t i, const DepthEstimate& e) {
  write_pfm(layout.depth(i), to_float_image(e.depth));
  write_pfm(layout.confidence(i), to_float_image(e.confidence));
}

inline std::vector<ViewEstimate> load_estimates(const ProjectLayout& layout,
                                                std::size_t views,
                                                const WarningSink& warn = default_warning) {
  std::vector<ViewEstimate> out;
  for (std::size_t i = 0; i < views; ++i) {
    ViewEstimate v{read_cam(layout.camera(i), warn).camera,
                   to_depth_map(read_pfm(layout.depth(i))),
                   to_confidence_map(read_pfm(layout.confidence(i))), std::nullopt};
    if (fs::exists(layout.image(i))) v.image = read_pnm(layout.image(i));
    check_dimensions(v);
    out.push_back(std::move(v));
  }
  return out;
}

/// Per-view hypothesis range: the ground-truth depth span widened on each
/// side by 5% of the span plus 0.1% of the far depth.
inline CamFile cam_with_range(const Camera& cam, const DepthMap& gt, int nominal_depths) {
  float lo = std::numeric_limits<float>::max();
  float hi = 0.0f;
  for (std::size_t j = 0; j < gt.valid.size(); ++j) {
    if (!gt.valid[j]) continue;
    lo = std::min(lo, gt.depth[j]);
    hi = std::max(hi, gt.depth[j]);
  }
  const double pad = 0.05 * (hi - lo) + 0.001 * hi;
  const double dmin = std::max(1e-3, lo - pad);
  const double dmax = hi + pad;
  return {cam, dmin, (dmax - dmin) / (nominal_depths - 1), nominal_depths, dmax};
}

struct SyntheticProject {
  std::vector<Camera> cameras;
  std::vector<RenderedView> views;
  std::vector<CamFile> cams;
  PointCloud gt_cloud;
};

inline SyntheticProject make_synthetic_project(const SyntheticSetup& setup,
                                               int nominal_depths = 32) {
  SyntheticProject p;
  p.cameras = make_camera_ring(setup.rig);
  p.views = render_scene(setup.scene, p.cameras);
  std::vector<DepthMap> depths;
  for (std::size_t i = 0; i < p.views.size(); ++i) {
    p.cams.push_back(cam_with_range(p.cameras[i], p.views[i].depth, nominal_depths));
    depths.push_back(p.views[i].depth);
  }
  p.gt_cloud = depth_maps_to_cloud(p.cameras, depths);
  return p;
}

/// Writes images, cameras, ground-truth depths, gt.ply and ring pairs. With
/// `perturb`, depths/ also receives the perturbed ground truth (confidence
/// 1) so fusion can run without a depth stage.
inline void write_synthetic_project(const ProjectLayout& layout, const SyntheticProject& p,
                                    const std::optional<PerturbModel>& perturb,
                                    std::uint64_t seed) {
  for (std::size_t i = 0; i < p.views.size(); ++i) {
    write_pnm(layout.image(i), p.views[i].image);
    write_cam(layout.camera(i), p.cams[i]);
    write_pfm(layout.gt_depth(i), to_float_image(p.views[i].depth));
    if (perturb) {
      const DepthMap d = perturb_depths(p.views[i].depth, *perturb, mix64(seed + i));
      write_pfm(layout.depth(i), to_float_image(d));
      write_pfm(layout.confidence(i),
                to_float_image(ConfidenceMap(d.width, d.height, 1.0f)));
    }
  }
  write_pairs(layout.pairs(), ring_pairs(static_cast<int>(p.views.size())));
  write_ply(layout.gt_cloud(), p.gt_cloud, PlyFormat::kBinaryLittleEndian);
}

}  // namespace sweepfuse

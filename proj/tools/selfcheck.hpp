#pragma once

// Quick oracle/invariant checks behind `sweepfuse check`. The full suites
// live under tests/; these run in well under a second.

#include <cmath>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "sweepfuse/estimator.hpp"
#include "sweepfuse/evalm.hpp"
#include "sweepfuse/fusion.hpp"
#include "sweepfuse/io.hpp"
#include "sweepfuse/regularizer.hpp"
#include "sweepfuse/synth.hpp"

namespace sweepfuse::selfcheck {

struct Check {
  std::string name;
  std::function<bool()> run;
};

inline bool geometry_round_trip() {
  auto setup = default_setup(SceneKind::kSphere, 4, 32, 24, 1);
  const auto cams = make_camera_ring(setup.rig);
  const auto& surface = setup.scene.surface;
  for (int y = 0; y < 24; ++y) {
    for (int x = 0; x < 32; ++x) {
      const Vec2 p(x, y);
      const auto d = surface_depth(surface, cams[0], p);
      if (!d || !is_covisible(surface, cams[1], back_project(cams[0], p, *d), 32, 24)) continue;
      const auto r = reproject_with(cams[0], cams[1], p, *d,
                                    analytic_depth_lookup(surface, cams[1], 32, 24));
      if (!r.ok()) return false;
      const auto e = reprojection_errors(p, r.pixel, *d, r.depth);
      if (!(e.pixel < 1e-5 && e.depth < 1e-7)) return false;
    }
  }
  return true;
}

inline bool consistency_value() {
  return std::abs(matching_consistency(1.0, 0.01, 200.0) - std::exp(-3.0)) < 1e-9;
}

inline bool lstm_gate_ranges() {
  SplitMix64 rng(7);
  LstmCellWeights w(2, 3);
  for (auto* g : w.gates()) init_uniform(*g, rng);
  Tensor x(2, 5, 5);
  for (auto& v : x.data()) v = static_cast<float>(rng.uniform(-5.0, 5.0));
  LstmCellState s;
  for (int i = 0; i < 64; ++i) s = conv_lstm_cell(x, s, w);
  for (float v : s.hidden.data()) {
    if (!(std::abs(v) < 1.0f)) return false;
  }
  return true;
}

inline bool streaming_softmax() {
  SplitMix64 rng(3);
  const int d = 16, h = 3, w = 4;
  Volume scores(d, h, w);
  for (auto& v : scores.values) v = rng.uniform(-4.0, 4.0);
  std::vector<double> depths(d);
  for (int i = 0; i < d; ++i) depths[i] = 1.0 + i;
  OnlineSoftmaxWta wta(w, h, depths);
  for (int i = 0; i < d; ++i) {
    ScoreSlice s{i, depths[i], Tensor(1, h, w)};
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) s.score(0, y, x) = static_cast<float>(scores(i, y, x));
    }
    wta.push(s);
  }
  const auto est = wta.finish();
  for (auto& v : scores.values) v = static_cast<float>(v);
  const auto p = softmax_volume(scores);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int best = 0;
      for (int i = 1; i < d; ++i) {
        if (p(i, y, x) > p(best, y, x)) best = i;
      }
      if (est.depth.at(x, y) != static_cast<float>(depths[best])) return false;
    }
  }
  return true;
}

inline bool uniform_loss() {
  Volume p(4, 1, 1, 0.25);
  DepthMap gt(1, 1, 2.0f, true);
  const HypothesisSpace hyp(1.0, 4.0, 4, DepthSampling::kUniform);
  return std::abs(cross_entropy_loss(p, gt, hyp) - std::log(4.0)) < 1e-9;
}

inline bool pfm_round_trip() {
  SplitMix64 rng(11);
  FloatImage img{5, 3, {}};
  for (int i = 0; i < 15; ++i) img.data.push_back(static_cast<float>(rng.normal()));
  const auto back = decode_pfm(encode_pfm(img));
  return back.width == 5 && back.height == 3 &&
         std::memcmp(back.data.data(), img.data.data(), 15 * sizeof(float)) == 0;
}

inline bool fscore_identity() {
  PointCloud a;
  for (int i = 0; i < 10; ++i) a.points.emplace_back(i, 0.5 * i, 1.0);
  const auto f = fscore(a, a, 1e-3);
  return f.precision == 1.0 && f.recall == 1.0 && f.f == 1.0;
}

inline std::vector<Check> all_checks() {
  return {
      {"geometry round trip on rendered sphere", geometry_round_trip},
      {"consistency value at the fixed thresholds", consistency_value},
      {"convlstm hidden state stays in (-1, 1)", lstm_gate_ranges},
      {"streaming softmax matches two-pass argmax", streaming_softmax},
      {"uniform volume loss equals ln 4", uniform_loss},
      {"pfm round trip is bit-exact", pfm_round_trip},
      {"identical clouds score f = 1", fscore_identity},
  };
}

/// Prints one line per check; returns the number of failures.
inline int run(std::ostream& os) {
  int failed = 0;
  for (const auto& c : all_checks()) {
    bool ok = false;
    try {
      ok = c.run();
    } catch (const std::exception& e) {
      os << "  (" << e.what() << ")\n";
    }
    os << (ok ? "PASS " : "FAIL ") << c.name << '\n';
    failed += !ok;
  }
  return failed;
}

}  // namespace sweepfuse::selfcheck

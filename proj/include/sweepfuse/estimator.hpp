#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "sweepfuse/errors.hpp"
#include "sweepfuse/geometry.hpp"
#include "sweepfuse/maps.hpp"
#include "sweepfuse/memory.hpp"
#include "sweepfuse/regularizer.hpp"

namespace sweepfuse {

struct DepthEstimate {
  DepthMap depth;
  ConfidenceMap confidence;
};

/// Streaming softmax + winner-take-all over score slices.
///
/// Per pixel it keeps the running maximum m, the normaliser sum(exp(s - m))
/// (rescaled whenever m grows), the argmax index and the raw scores of the
/// argmax and its two neighbours. The confidence is the softmax probability
/// mass of those three bins. Ties resolve to the lowest index.
class OnlineSoftmaxWta {
 public:
  OnlineSoftmaxWta(int width, int height, std::vector<double> depths)
      : width_(width), height_(height), depths_(std::move(depths)) {
    const std::size_t n = static_cast<std::size_t>(width) * height;
    const double ninf = -std::numeric_limits<double>::infinity();
    max_.assign(n, ninf);
    norm_.assign(n, 0.0);
    previous_.assign(n, ninf);
    left_.assign(n, ninf);
    right_.assign(n, ninf);
    argmax_.assign(n, -1);
  }

  void push(const ScoreSlice& slice) {
    if (slice.index != static_cast<int>(seen_)) {
      throw StreamLengthMismatch("score slice " + std::to_string(slice.index) +
                                 " arrived out of order, expected " +
                                 std::to_string(seen_));
    }
    if (seen_ >= depths_.size()) {
      throw StreamLengthMismatch("more score slices than hypotheses");
    }
    if (slice.score.width() != width_ || slice.score.height() != height_ ||
        slice.score.channels() != 1) {
      throw ShapeMismatch("score slice " + slice.score.shape_string() +
                          " does not match the estimator");
    }
    const int k = static_cast<int>(seen_);
    const auto s = slice.score.data();
    for (std::size_t j = 0; j < s.size(); ++j) {
      const double v = s[j];
      if (v > max_[j]) {
        norm_[j] = norm_[j] * std::exp(max_[j] - v) + 1.0;
        max_[j] = v;
        argmax_[j] = k;
        left_[j] = previous_[j];
        right_[j] = -std::numeric_limits<double>::infinity();
      } else {
        norm_[j] += std::exp(v - max_[j]);
        if (argmax_[j] == k - 1) right_[j] = v;
      }
      previous_[j] = v;
    }
    ++seen_;
  }

  std::size_t seen() const noexcept { return seen_; }

  DepthEstimate finish() const {
    if (seen_ != depths_.size()) {
      throw StreamLengthMismatch("received " + std::to_string(seen_) +
                                 " score slices, expected " +
                                 std::to_string(depths_.size()));
    }
    DepthEstimate out{DepthMap(width_, height_), ConfidenceMap(width_, height_)};
    for (std::size_t j = 0; j < max_.size(); ++j) {
      if (argmax_[j] < 0 || !std::isfinite(max_[j])) continue;
      const double mass = std::exp(left_[j] - max_[j]) + 1.0 +
                          std::exp(right_[j] - max_[j]);
      out.depth.depth[j] = static_cast<float>(depths_[argmax_[j]]);
      out.depth.valid[j] = 1;
      out.confidence.prob[j] = static_cast<float>(std::min(1.0, mass / norm_[j]));
    }
    return out;
  }

 private:
  int width_;
  int height_;
  std::vector<double> depths_;
  std::size_t seen_ = 0;
  tracked_vector<double> max_;
  tracked_vector<double> norm_;
  tracked_vector<double> previous_;
  tracked_vector<double> left_;
  tracked_vector<double> right_;
  tracked_vector<int> argmax_;
};

/// Runs the whole sweep for one reference view: cost slices are built,
/// regularised and reduced one at a time.
template <class Regularizer>
DepthEstimate online_softmax_wta(CostVolumeStream& stream, Regularizer& regularizer) {
  const FeatureMap& ref_shape = stream.views().reference.get();
  OnlineSoftmaxWta wta(ref_shape.width(), ref_shape.height(), stream.depths());
  regularize_stream(stream, regularizer, [&](const ScoreSlice& s) { wta.push(s); });
  return wta.finish();
}

/// Dense D x H x W volume of doubles, for small instances (loss, tests).
struct Volume {
  int depths = 0;
  int height = 0;
  int width = 0;
  std::vector<double> values;

  Volume() = default;
  Volume(int d, int h, int w, double fill = 0.0)
      : depths(d), height(h), width(w),
        values(static_cast<std::size_t>(d) * h * w, fill) {}

  double& operator()(int i, int y, int x) {
    return values[(static_cast<std::size_t>(i) * height + y) * width + x];
  }
  double operator()(int i, int y, int x) const {
    return values[(static_cast<std::size_t>(i) * height + y) * width + x];
  }
};

using ProbabilityVolume = Volume;

/// Per-pixel softmax along the depth axis, max-subtracted.
inline ProbabilityVolume softmax_volume(const Volume& scores) {
  ProbabilityVolume p(scores.depths, scores.height, scores.width);
  for (int y = 0; y < scores.height; ++y) {
    for (int x = 0; x < scores.width; ++x) {
      double m = -std::numeric_limits<double>::infinity();
      for (int i = 0; i < scores.depths; ++i) m = std::max(m, scores(i, y, x));
      double sum = 0.0;
      for (int i = 0; i < scores.depths; ++i) {
        p(i, y, x) = std::exp(scores(i, y, x) - m);
        sum += p(i, y, x);
      }
      for (int i = 0; i < scores.depths; ++i) p(i, y, x) /= sum;
    }
  }
  return p;
}

/// Nearest hypothesis bin in the sampled metric (depth for uniform spaces,
/// inverse depth for inverse spaces). Depths further than half a bin
/// outside the range have no bin.
inline std::optional<int> one_hot_index(double gt_depth, const HypothesisSpace& hyp) {
  if (!(gt_depth > 0.0) || !std::isfinite(gt_depth)) return std::nullopt;
  const double u = hyp.position(gt_depth);
  if (!(u >= -0.5 && u <= hyp.count() - 0.5)) return std::nullopt;
  const int k = static_cast<int>(std::floor(u + 0.5));
  return std::clamp(k, 0, hyp.count() - 1);
}

inline constexpr double kLogClamp = 1e-12;

/// Cross-entropy between the probability volume and the one-hot ground
/// truth, summed over valid pixels whose depth maps onto a bin.
inline double cross_entropy_loss(const ProbabilityVolume& prob, const DepthMap& gt,
                                 const HypothesisSpace& hyp) {
  if (prob.width != gt.width || prob.height != gt.height ||
      prob.depths != hyp.count()) {
    throw ShapeMismatch("cross_entropy_loss: volume and ground truth disagree");
  }
  double loss = 0.0;
  std::size_t used = 0;
  for (int y = 0; y < gt.height; ++y) {
    for (int x = 0; x < gt.width; ++x) {
      if (!gt.is_valid(x, y)) continue;
      const auto bin = one_hot_index(gt.at(x, y), hyp);
      if (!bin) continue;
      loss -= std::log(std::max(prob(*bin, y, x), kLogClamp));
      ++used;
    }
  }
  if (used == 0) throw EmptyValidSet("cross_entropy_loss: no valid pixel");
  return loss;
}

/// d loss / d scores for softmax followed by cross-entropy: p - onehot on
/// contributing pixels, zero elsewhere.
inline Volume loss_gradient_logits(const Volume& scores, const DepthMap& gt,
                                   const HypothesisSpace& hyp) {
  if (scores.width != gt.width || scores.height != gt.height ||
      scores.depths != hyp.count()) {
    throw ShapeMismatch("loss_gradient_logits: volume and ground truth disagree");
  }
  const ProbabilityVolume p = softmax_volume(scores);
  Volume grad(scores.depths, scores.height, scores.width);
  for (int y = 0; y < gt.height; ++y) {
    for (int x = 0; x < gt.width; ++x) {
      if (!gt.is_valid(x, y)) continue;
      const auto bin = one_hot_index(gt.at(x, y), hyp);
      if (!bin) continue;
      for (int i = 0; i < scores.depths; ++i) grad(i, y, x) = p(i, y, x);
      grad(*bin, y, x) -= 1.0;
    }
  }
  return grad;
}

}  // namespace sweepfuse

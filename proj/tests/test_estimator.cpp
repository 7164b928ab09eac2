#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "sweepfuse/estimator.hpp"

using namespace sweepfuse;

namespace {

DepthEstimate stream_volume(const Volume& scores, const std::vector<double>& depths) {
  OnlineSoftmaxWta wta(scores.width, scores.height, depths);
  for (int i = 0; i < scores.depths; ++i) {
    ScoreSlice s{i, depths[i], Tensor(1, scores.height, scores.width)};
    for (int y = 0; y < scores.height; ++y) {
      for (int x = 0; x < scores.width; ++x) s.score(0, y, x) = static_cast<float>(scores(i, y, x));
    }
    wta.push(s);
  }
  return wta.finish();
}

Volume random_volume(int d, int h, int w, std::uint64_t seed, double spread = 4.0) {
  SplitMix64 rng(seed);
  Volume v(d, h, w);
  // Float-representable scores so the streaming path sees identical inputs.
  for (auto& s : v.values) s = static_cast<float>(rng.uniform(-spread, spread));
  return v;
}

std::vector<double> pixel_scores(const Volume& v, int y, int x) {
  std::vector<double> s;
  for (int i = 0; i < v.depths; ++i) s.push_back(v(i, y, x));
  return s;
}

}  // namespace

TEST(OnlineWta, UniformScoresTieToLowestIndex) {
  const Volume v(4, 1, 1, 0.0);
  const auto est = stream_volume(v, {1, 2, 3, 4});
  EXPECT_EQ(est.depth.at(0, 0), 1.0f);
  EXPECT_NEAR(est.confidence.at(0, 0), 0.5, 1e-7);
}

TEST(OnlineWta, InteriorArgmaxSumsThreeBins) {
  Volume v(4, 1, 1, 0.0);
  v(2, 0, 0) = 1e-30;  // strictly larger, same probabilities to double precision
  const auto est = stream_volume(v, {1, 2, 3, 4});
  EXPECT_EQ(est.depth.at(0, 0), 3.0f);
  EXPECT_NEAR(est.confidence.at(0, 0), 0.75, 1e-7);
}

TEST(OnlineWta, SingleSpikeIsConfident) {
  Volume v(256, 1, 1, 0.0);
  v(117, 0, 0) = 10.0;
  std::vector<double> depths(256);
  for (int i = 0; i < 256; ++i) depths[i] = 100.0 + i;
  const auto est = stream_volume(v, depths);
  EXPECT_EQ(est.depth.at(0, 0), 217.0f);
  EXPECT_GT(est.confidence.at(0, 0), 0.97);
  // With a 3-tap sum the neighbours add two e^0 terms to the mass.
  const double z = std::exp(10.0) + 255.0;
  EXPECT_NEAR(est.confidence.at(0, 0), (std::exp(10.0) + 2.0) / z, 1e-6);
  v(117, 0, 0) = 20.0;
  EXPECT_GT(stream_volume(v, depths).confidence.at(0, 0), 0.999);
}

TEST(OnlineWta, EqualsTwoPassSoftmax) {
  const int d = 32;
  const Volume v = random_volume(d, 6, 7, 3);
  std::vector<double> depths(d);
  for (int i = 0; i < d; ++i) depths[i] = 1.0 + 0.25 * i;
  const auto est = stream_volume(v, depths);
  const ProbabilityVolume p = softmax_volume(v);
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 7; ++x) {
      const auto probs = oracle::softmax(pixel_scores(v, y, x));
      int arg = 0;
      for (int i = 1; i < d; ++i) {
        if (v(i, y, x) > v(arg, y, x)) arg = i;
      }
      double mass = probs[arg];
      if (arg > 0) mass += probs[arg - 1];
      if (arg < d - 1) mass += probs[arg + 1];
      EXPECT_EQ(est.depth.at(x, y), static_cast<float>(depths[arg]));
      EXPECT_NEAR(est.confidence.at(x, y), mass, 1e-6);
      double sum = 0.0;
      for (int i = 0; i < d; ++i) sum += p(i, y, x);
      EXPECT_NEAR(sum, 1.0, 1e-5);
    }
  }
}

TEST(OnlineWta, StreamLengthIsChecked) {
  OnlineSoftmaxWta wta(2, 2, {1.0, 2.0, 3.0});
  wta.push(ScoreSlice{0, 1.0, Tensor(1, 2, 2)});
  EXPECT_THROW(wta.finish(), StreamLengthMismatch);
  EXPECT_THROW(wta.push(ScoreSlice{2, 3.0, Tensor(1, 2, 2)}), StreamLengthMismatch);
  EXPECT_THROW(wta.push(ScoreSlice{1, 2.0, Tensor(1, 3, 2)}), ShapeMismatch);
  wta.push(ScoreSlice{1, 2.0, Tensor(1, 2, 2)});
  wta.push(ScoreSlice{2, 3.0, Tensor(1, 2, 2)});
  EXPECT_THROW(wta.push(ScoreSlice{3, 4.0, Tensor(1, 2, 2)}), StreamLengthMismatch);
  EXPECT_NO_THROW(wta.finish());
}

TEST(SoftmaxVolume, ExamplesAndOracle) {
  const ProbabilityVolume u = softmax_volume(Volume(5, 1, 1, 3.0));
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(u(i, 0, 0), 0.2, 1e-15);
  Volume spike(5, 1, 1, 0.0);
  spike(3, 0, 0) = 1e4;
  EXPECT_NEAR(softmax_volume(spike)(3, 0, 0), 1.0, 1e-15);
  const Volume v = random_volume(16, 3, 4, 5);
  const ProbabilityVolume p = softmax_volume(v);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 4; ++x) {
      const auto ref = oracle::softmax(pixel_scores(v, y, x));
      for (int i = 0; i < 16; ++i) EXPECT_NEAR(p(i, y, x), ref[i], 1e-7);
    }
  }
}

TEST(SoftmaxVolume, RaisingAScoreNeverLowersItsProbability) {
  SplitMix64 rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    Volume v = random_volume(8, 1, 1, 100 + trial);
    const int k = static_cast<int>(rng.below(8));
    const double before = softmax_volume(v)(k, 0, 0);
    v(k, 0, 0) += rng.uniform(0.0, 3.0);
    EXPECT_GE(softmax_volume(v)(k, 0, 0), before);
  }
}

TEST(OneHot, TrainingRangeExamples) {
  const HypothesisSpace hyp(425.0, 745.0, 128);
  EXPECT_EQ(one_hot_index(425.0, hyp), 0);
  EXPECT_EQ(one_hot_index(430.0, hyp), 2);
  EXPECT_EQ(one_hot_index(745.0, hyp), 127);
  EXPECT_FALSE(one_hot_index(1000.0, hyp));
  EXPECT_FALSE(one_hot_index(0.0, hyp));
  // Half a bin of padding on either side.
  EXPECT_EQ(one_hot_index(425.0 - 1.2, hyp), 0);
  EXPECT_FALSE(one_hot_index(425.0 - 1.3, hyp));
}

TEST(OneHot, InverseSpaceUsesInverseDepthMetric) {
  const HypothesisSpace hyp(1.0, 2.0, 3, DepthSampling::kInverse);  // 1, 4/3, 2
  // 1.6 is nearer 4/3 in depth but nearer 2 in 1/d (0.625 vs 0.75, 0.5).
  EXPECT_EQ(one_hot_index(1.6, hyp), 2);
  EXPECT_EQ(one_hot_index(1.1, hyp), 0);
}

TEST(CrossEntropy, Examples) {
  const HypothesisSpace hyp(1.0, 4.0, 4);
  DepthMap gt(1, 1);
  gt.set(0, 0, 3.0f);
  EXPECT_NEAR(cross_entropy_loss(ProbabilityVolume(4, 1, 1, 0.25), gt, hyp), std::log(4.0), 1e-12);
  ProbabilityVolume onehot(4, 1, 1, 0.0);
  onehot(2, 0, 0) = 1.0;
  EXPECT_EQ(cross_entropy_loss(onehot, gt, hyp), 0.0);
  // A zero probability at the gt bin is clamped, not infinite.
  onehot(2, 0, 0) = 0.0;
  EXPECT_NEAR(cross_entropy_loss(onehot, gt, hyp), -std::log(1e-12), 1e-9);
}

TEST(CrossEntropy, MatchesDirectSummation) {
  const HypothesisSpace hyp(2.0, 6.0, 8);
  const Volume scores = random_volume(8, 5, 6, 7);
  const ProbabilityVolume p = softmax_volume(scores);
  SplitMix64 rng(8);
  DepthMap gt(6, 5);
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 6; ++x) {
      if (rng.uniform() < 0.8) gt.set(x, y, static_cast<float>(rng.uniform(1.0, 7.0)));
    }
  }
  double ref = 0.0;
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 6; ++x) {
      if (!gt.is_valid(x, y)) continue;
      const double pos = (gt.at(x, y) - 2.0) / (4.0 / 7.0);
      if (pos < -0.5 || pos > 7.5) continue;
      const int bin = static_cast<int>(std::lround(pos));
      ref -= std::log(oracle::softmax(pixel_scores(scores, y, x))[bin]);
    }
  }
  const double loss = cross_entropy_loss(p, gt, hyp);
  EXPECT_GE(loss, 0.0);
  EXPECT_NEAR(loss, ref, 1e-9);
}

TEST(CrossEntropy, EmptyValidSetThrows) {
  const HypothesisSpace hyp(1.0, 4.0, 4);
  DepthMap gt(2, 2);
  EXPECT_THROW(cross_entropy_loss(ProbabilityVolume(4, 2, 2, 0.25), gt, hyp), EmptyValidSet);
  gt.set(0, 0, 100.0f);  // valid but outside the range
  EXPECT_THROW(cross_entropy_loss(ProbabilityVolume(4, 2, 2, 0.25), gt, hyp), EmptyValidSet);
}

TEST(LossGradient, Examples) {
  const HypothesisSpace hyp(1.0, 4.0, 4);
  DepthMap gt(1, 1);
  gt.set(0, 0, 1.0f);
  const Volume g = loss_gradient_logits(Volume(4, 1, 1, 0.0), gt, hyp);
  EXPECT_NEAR(g(0, 0, 0), -0.75, 1e-15);
  for (int i = 1; i < 4; ++i) EXPECT_NEAR(g(i, 0, 0), 0.25, 1e-15);
  Volume peaked(4, 1, 1, 0.0);
  peaked(0, 0, 0) = 1e4;
  for (double v : loss_gradient_logits(peaked, gt, hyp).values) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(LossGradient, MatchesCentralDifferences) {
  const HypothesisSpace hyp(1.0, 4.0, 4);
  Volume scores = random_volume(4, 3, 3, 9, 1.0);
  DepthMap gt(3, 3);
  SplitMix64 rng(10);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 3; ++x) {
      if (x != 1 || y != 1) gt.set(x, y, static_cast<float>(rng.uniform(1.0, 4.0)));
    }
  }
  const Volume g = loss_gradient_logits(scores, gt, hyp);
  const double eps = 1e-4;
  for (std::size_t j = 0; j < scores.values.size(); ++j) {
    const double saved = scores.values[j];
    scores.values[j] = saved + eps;
    const double up = cross_entropy_loss(softmax_volume(scores), gt, hyp);
    scores.values[j] = saved - eps;
    const double down = cross_entropy_loss(softmax_volume(scores), gt, hyp);
    scores.values[j] = saved;
    const double fd = (up - down) / (2 * eps);
    EXPECT_NEAR(g.values[j], fd, 1e-4 * std::max(1.0, std::abs(fd)));
  }
  // The masked centre pixel has no gradient.
  for (int i = 0; i < 4; ++i) EXPECT_EQ(g(i, 1, 1), 0.0);
}

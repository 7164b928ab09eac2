#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "sweepfuse/geometry.hpp"
#include "sweepfuse/synth.hpp"

using namespace sweepfuse;

namespace {

Mat3 intrinsic_100() {
  Mat3 k;
  k << 100, 0, 32, 0, 100, 24, 0, 0, 1;
  return k;
}

Camera identity_camera() { return Camera(intrinsic_100(), Mat3::Identity(), Vec3::Zero()); }

Mat3 rotation_from(SplitMix64& rng) {
  const Vec3 axis = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
  return Eigen::AngleAxisd(rng.uniform(-0.5, 0.5), axis).toRotationMatrix();
}

Camera random_camera(SplitMix64& rng) {
  Mat3 k;
  k << rng.uniform(50, 500), rng.uniform(-1, 1), rng.uniform(10, 100), 0,
      rng.uniform(50, 500), rng.uniform(10, 100), 0, 0, 1;
  return Camera(k, rotation_from(rng), Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1),
                                            rng.uniform(-1, 1)));
}

}  // namespace

TEST(Camera, RejectsInvalidIntrinsics) {
  Mat3 k = intrinsic_100();
  k(1, 0) = 0.5;
  EXPECT_THROW(Camera(k, Mat3::Identity(), Vec3::Zero()), InvalidCamera);
  k = intrinsic_100();
  k(0, 0) = -100;
  EXPECT_THROW(Camera(k, Mat3::Identity(), Vec3::Zero()), InvalidCamera);
}

TEST(Camera, RejectsNonRotations) {
  Mat3 r = Mat3::Identity();
  r(0, 0) = -1.0;  // reflection, det = -1
  EXPECT_THROW(Camera(intrinsic_100(), r, Vec3::Zero()), InvalidCamera);
  r = Mat3::Identity();
  r(0, 1) = 1e-6;
  EXPECT_THROW(Camera(intrinsic_100(), r, Vec3::Zero()), InvalidCamera);
}

TEST(Camera, NearestRotationIsOrthonormal) {
  SplitMix64 rng(5);
  Mat3 r = rotation_from(rng);
  r(0, 1) += 0.01;
  const Mat3 fixed = nearest_rotation(r);
  EXPECT_LT(Camera::rotation_error(fixed), 1e-12);
  EXPECT_GT(fixed.determinant(), 0.0);
}

TEST(BackProject, PrincipalPointLiesOnAxis) {
  const Vec3 x = back_project(identity_camera(), Vec2(32, 24), 2.0);
  EXPECT_NEAR(x.x(), 0.0, 1e-15);
  EXPECT_NEAR(x.y(), 0.0, 1e-15);
  EXPECT_NEAR(x.z(), 2.0, 1e-15);
}

TEST(BackProject, OffAxisPixel) {
  const Vec3 x = back_project(identity_camera(), Vec2(132, 24), 2.0);
  EXPECT_NEAR(x.x(), 2.0, 1e-14);
  EXPECT_NEAR(x.y(), 0.0, 1e-14);
  EXPECT_NEAR(x.z(), 2.0, 1e-14);
}

TEST(BackProject, MatchesOracleOnRandomCameras) {
  SplitMix64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Camera cam = random_camera(rng);
    const Vec2 p(rng.uniform(0, 64), rng.uniform(0, 48));
    const double d = rng.uniform(0.5, 50.0);
    const Vec3 ours = back_project(cam, p, d);
    const Vec3 ref = oracle::back_project(cam.intrinsic(), cam.rotation(), cam.translation(), p, d);
    EXPECT_LT((ours - ref).norm(), 1e-9 * (1.0 + ref.norm()));
  }
}

TEST(Project, Examples) {
  const Camera cam = identity_camera();
  auto q = project(cam, Vec3(0, 0, 2));
  ASSERT_TRUE(q);
  EXPECT_NEAR(q->pixel.x(), 32.0, 1e-15);
  EXPECT_NEAR(q->pixel.y(), 24.0, 1e-15);
  EXPECT_NEAR(q->depth, 2.0, 1e-15);
  q = project(cam, Vec3(2, 0, 2));
  ASSERT_TRUE(q);
  EXPECT_NEAR(q->pixel.x(), 132.0, 1e-13);
  EXPECT_NEAR(q->pixel.y(), 24.0, 1e-13);
  EXPECT_FALSE(project(cam, Vec3(0, 0, -1)));
  EXPECT_FALSE(project(cam, Vec3(1, 1, 0)));
}

TEST(Project, RoundTripProperty) {
  SplitMix64 rng(12);
  for (int trial = 0; trial < 1000; ++trial) {
    const Camera cam = random_camera(rng);
    const Vec2 p(rng.uniform(-10, 100), rng.uniform(-10, 100));
    const double d = rng.uniform(0.01, 1000.0);
    const auto q = project(cam, back_project(cam, p, d));
    ASSERT_TRUE(q);
    EXPECT_LT((q->pixel - p).norm(), 1e-9 * (1.0 + p.norm()));
    EXPECT_LT(std::abs(q->depth - d), 1e-9 * d);
    const Vec3 o = oracle::project(cam.intrinsic(), cam.rotation(), cam.translation(),
                                   back_project(cam, p, d));
    EXPECT_LT(std::abs(o.x() - q->pixel.x()), 1e-9 * (1.0 + p.norm()));
  }
}

TEST(Reproject, ExactPlaneDepthsAreConsistent) {
  const auto setup = default_setup(SceneKind::kPlane, 3, 64, 48, 2);
  const auto cams = make_camera_ring(setup.rig);
  int checked = 0;
  for (int y = 0; y < 48; ++y) {
    for (int x = 0; x < 64; ++x) {
      const Vec2 p(x, y);
      const auto exact = surface_depth(setup.scene.surface, cams[0], p);
      if (!exact) continue;
      const double d = *exact;
      // Analytic lookup: the rasterised map only stores pixel centres.
      const auto r = reproject_with(cams[0], cams[1], p, d,
                                    analytic_depth_lookup(setup.scene.surface, cams[1], 64, 48));
      if (!r.ok()) continue;
      ++checked;
      EXPECT_LT((r.pixel - p).norm(), 1e-6);
      EXPECT_LT(std::abs(r.depth - d) / d, 1e-9);
    }
  }
  EXPECT_GT(checked, 1000);
}

TEST(Reproject, MaskedSourceIsInvalid) {
  const Camera cam = identity_camera();
  const DepthMap masked(64, 48, 2.0f, false);
  const auto r = reproject(cam, cam, Vec2(10, 10), 2.0, masked);
  EXPECT_EQ(r.status, ReprojectStatus::kMasked);
  EXPECT_FALSE(r.ok());
}

TEST(Reproject, OutOfBoundsAndBehind) {
  const Camera ref = identity_camera();
  const Camera shifted(intrinsic_100(), Mat3::Identity(), Vec3(-5, 0, 0));
  const DepthMap full(64, 48, 2.0f, true);
  EXPECT_EQ(reproject(ref, shifted, Vec2(32, 24), 2.0, full).status,
            ReprojectStatus::kOutOfBounds);
  const Camera behind(intrinsic_100(), Mat3::Identity(), Vec3(0, 0, -10));
  EXPECT_EQ(reproject(ref, behind, Vec2(32, 24), 2.0, full).status,
            ReprojectStatus::kBehindCamera);
}

TEST(Reproject, PerturbedSourceDepthMatchesScriptedChain) {
  // Two cameras, source looks at the same fronto-parallel plane z = 5 with
  // its depths scaled by 1.01; the oracle chain recomputes p' and d'.
  const Mat3 k = intrinsic_100();
  const Camera ref(k, Mat3::Identity(), Vec3::Zero());
  const Mat3 r_src = Eigen::AngleAxisd(0.05, Vec3::UnitY()).toRotationMatrix();
  const Vec3 t_src(-0.3, 0.0, 0.0);
  const Camera src(k, r_src, t_src);
  DepthMap d_src(64, 48);
  for (int y = 0; y < 48; ++y) {
    for (int x = 0; x < 64; ++x) {
      const auto depth = surface_depth(PlaneSurface{Vec3::UnitZ(), 5.0}, src, Vec2(x, y));
      d_src.set(x, y, static_cast<float>(1.01 * *depth));
    }
  }
  const Vec2 p(30, 20);
  const auto r = reproject(ref, src, p, 5.0, d_src);
  ASSERT_TRUE(r.ok());
  const Vec3 x0 = oracle::back_project(k, Mat3::Identity(), Vec3::Zero(), p, 5.0);
  const Vec3 q = oracle::project(k, r_src, t_src, x0);
  const double qx = std::round(q.x());
  const double qy = std::round(q.y());
  const double dq = d_src.at(static_cast<int>(qx), static_cast<int>(qy));
  const Vec3 x1 = oracle::back_project(k, r_src, t_src, Vec2(q.x(), q.y()), dq);
  const Vec3 back = oracle::project(k, Mat3::Identity(), Vec3::Zero(), x1);
  EXPECT_NEAR(r.pixel.x(), back.x(), 1e-9);
  EXPECT_NEAR(r.pixel.y(), back.y(), 1e-9);
  EXPECT_NEAR(r.depth, back.z(), 1e-9);
  EXPECT_GT(std::abs(r.depth - 5.0), 0.01);
}

TEST(ReprojectionErrors, Examples) {
  auto e = reprojection_errors(Vec2(1, 2), Vec2(1, 2), 3.0, 3.0);
  EXPECT_EQ(e.pixel, 0.0);
  EXPECT_EQ(e.depth, 0.0);
  e = reprojection_errors(Vec2(0, 0), Vec2(3, 4), 100.0, 101.0);
  EXPECT_DOUBLE_EQ(e.pixel, 5.0);
  EXPECT_NEAR(e.depth, 0.01, 1e-15);
  const auto scaled = reprojection_errors(Vec2(0, 0), Vec2(3, 4), 700.0, 707.0);
  EXPECT_NEAR(scaled.depth, e.depth, 1e-15);
}

TEST(Hypotheses, UniformTrainingRange) {
  const HypothesisSpace h(425.0, 745.0, 128, DepthSampling::kUniform);
  const auto d = sample_hypotheses(h);
  ASSERT_EQ(d.size(), 128u);
  EXPECT_EQ(d.front(), 425.0);
  EXPECT_EQ(d.back(), 745.0);
  EXPECT_NEAR(d[1] - d[0], 2.5197, 1e-4);
  EXPECT_NEAR(h.step(), 320.0 / 127.0, 1e-12);
}

TEST(Hypotheses, InverseByHand) {
  const auto d = sample_hypotheses(HypothesisSpace(1.0, 2.0, 3, DepthSampling::kInverse));
  ASSERT_EQ(d.size(), 3u);
  EXPECT_DOUBLE_EQ(d[0], 1.0);
  EXPECT_NEAR(d[1], 4.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(d[2], 2.0);
}

TEST(Hypotheses, TwoPlanesAreTheEndpoints) {
  for (auto mode : {DepthSampling::kUniform, DepthSampling::kInverse}) {
    const auto d = sample_hypotheses(HypothesisSpace(3.0, 7.0, 2, mode));
    EXPECT_EQ(d, (std::vector<double>{3.0, 7.0}));
  }
}

TEST(Hypotheses, MonotoneAndEvenlySpacedInSampledMetric) {
  SplitMix64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const double lo = rng.uniform(0.1, 10.0);
    const double hi = lo + rng.uniform(0.01, 100.0);
    const int n = 2 + static_cast<int>(rng.below(300));
    const auto inv = sample_hypotheses(HypothesisSpace(lo, hi, n, DepthSampling::kInverse));
    const auto uni = sample_hypotheses(HypothesisSpace(lo, hi, n, DepthSampling::kUniform));
    const double step = (1.0 / hi - 1.0 / lo) / (n - 1);
    for (int i = 1; i < n; ++i) {
      EXPECT_GT(inv[i], inv[i - 1]);
      EXPECT_GT(uni[i], uni[i - 1]);
      EXPECT_NEAR(1.0 / inv[i] - 1.0 / inv[i - 1], step, 1e-12);
    }
  }
}

TEST(Hypotheses, RejectsInvalidSpaces) {
  EXPECT_THROW(HypothesisSpace(0.0, 1.0, 4, DepthSampling::kUniform), InvalidArgument);
  EXPECT_THROW(HypothesisSpace(2.0, 1.0, 4, DepthSampling::kUniform), InvalidArgument);
  EXPECT_THROW(HypothesisSpace(1.0, 2.0, 1, DepthSampling::kUniform), InvalidArgument);
}

TEST(WarpGrid, SelfWarpIsIdentity) {
  SplitMix64 rng(8);
  const Camera cam = random_camera(rng);
  const auto g = warp_grid(cam, cam, 3.0, 20, 10);
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 20; ++x) {
      ASSERT_TRUE(g.valid[g.index(x, y)]);
      EXPECT_NEAR(g.x[g.index(x, y)], x, 1e-9);
      EXPECT_NEAR(g.y[g.index(x, y)], y, 1e-9);
    }
  }
}

TEST(WarpGrid, TranslationGivesUniformDisparity) {
  const Camera ref = identity_camera();
  const double b = 0.1;
  const double d = 4.0;
  // Source centre at +b along x: t = -R C.
  const Camera src(intrinsic_100(), Mat3::Identity(), Vec3(-b, 0, 0));
  const auto g = warp_grid(ref, src, d, 64, 48);
  for (int y = 0; y < 48; ++y) {
    for (int x = 3; x < 64; ++x) {
      ASSERT_TRUE(g.valid[g.index(x, y)]);
      EXPECT_NEAR(g.x[g.index(x, y)], x - 100.0 * b / d, 1e-9);
      EXPECT_NEAR(g.y[g.index(x, y)], y, 1e-9);
    }
  }
  EXPECT_FALSE(g.valid[g.index(0, 0)]);  // shifted left of the image
}

TEST(WarpGrid, AgreesWithPerPixelChainAndIsSmooth) {
  const auto setup = default_setup(SceneKind::kPlane, 7, 64, 48, 1);
  const auto cams = make_camera_ring(setup.rig);
  const auto g = warp_grid(cams[0], cams[2], 10.3, 64, 48);
  for (int y = 0; y < 48; ++y) {
    for (int x = 0; x < 64; ++x) {
      const auto q = project(cams[2], back_project(cams[0], Vec2(x, y), 10.3));
      ASSERT_TRUE(q);
      const bool inside = q->pixel.x() >= 0 && q->pixel.x() <= 63 && q->pixel.y() >= 0 &&
                          q->pixel.y() <= 47;
      EXPECT_EQ(static_cast<bool>(g.valid[g.index(x, y)]), inside);
      EXPECT_NEAR(g.x[g.index(x, y)], q->pixel.x(), 1e-4);
      EXPECT_NEAR(g.y[g.index(x, y)], q->pixel.y(), 1e-4);
      if (x > 0) {
        EXPECT_LT(std::abs(g.x[g.index(x, y)] - g.x[g.index(x - 1, y)]), 2.0);
      }
    }
  }
}

TEST(WarpGrid, FarPlaneApproachesInfiniteHomography) {
  SplitMix64 rng(21);
  const Mat3 k = intrinsic_100();
  const Mat3 r = rotation_from(rng);
  const Camera ref(k, Mat3::Identity(), Vec3::Zero());
  const Camera a(k, r, Vec3(0.5, 0, 0));
  const Camera b(k, r, Vec3(-3, 2, 1));
  const auto ga = warp_grid(ref, a, 1e12, 64, 48);
  const auto gb = warp_grid(ref, b, 1e12, 64, 48);
  const Mat3 h = k * r * k.inverse();
  for (int y = 0; y < 48; y += 5) {
    for (int x = 0; x < 64; x += 5) {
      const Vec3 w = h * Vec3(x, y, 1);
      EXPECT_NEAR(ga.x[ga.index(x, y)], w.x() / w.z(), 1e-6);
      EXPECT_NEAR(ga.x[ga.index(x, y)], gb.x[gb.index(x, y)], 1e-6);
      EXPECT_NEAR(ga.y[ga.index(x, y)], gb.y[gb.index(x, y)], 1e-6);
    }
  }
}

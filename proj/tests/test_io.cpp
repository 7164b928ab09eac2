#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "oracles.hpp"
#include "sweepfuse/io.hpp"

using namespace sweepfuse;

namespace {

std::string fixture(const char* name) {
  return detail::read_file(fs::path(SWEEPFUSE_FIXTURE_DIR) / name);
}

Mat3 random_rotation(SplitMix64& rng) {
  const Vec3 axis = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)).normalized();
  return Eigen::AngleAxisd(rng.uniform(-3.1, 3.1), axis).toRotationMatrix();
}

CamFile random_cam(SplitMix64& rng) {
  Mat3 k = Mat3::Identity();
  k(0, 0) = rng.uniform(100, 3000);
  k(1, 1) = rng.uniform(100, 3000);
  k(0, 2) = rng.uniform(0, 640);
  k(1, 2) = rng.uniform(0, 480);
  const Vec3 t(rng.uniform(-500, 500), rng.uniform(-500, 500), rng.uniform(-500, 500));
  CamFile cam{Camera(k, random_rotation(rng), t), rng.uniform(0.1, 500), rng.uniform(0.01, 5),
              std::nullopt, std::nullopt};
  if (rng.uniform(0, 1) < 0.5) {
    cam.depth_count = 1 + static_cast<int>(rng.uniform(0, 500));
    cam.depth_max = cam.depth_min + rng.uniform(1, 1000);
  }
  return cam;
}

bool same_bits(float a, float b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

TEST(CamFormat, FixtureParsesToDocumentedValues) {
  const CamFile cam = parse_cam(fixture("cam_rot90.txt"));
  Mat3 r;
  r << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  EXPECT_EQ(cam.camera.rotation(), r);
  EXPECT_EQ(cam.camera.translation(), Vec3(1.5, -2, 400));
  EXPECT_EQ(cam.camera.intrinsic()(0, 0), 1000.0);
  EXPECT_EQ(cam.camera.intrinsic()(0, 2), 320.0);
  EXPECT_EQ(cam.camera.intrinsic()(1, 2), 240.0);
  EXPECT_EQ(cam.depth_min, 425.0);
  EXPECT_EQ(cam.depth_interval, 2.5);
  EXPECT_EQ(cam.depth_count, 128);
  EXPECT_EQ(cam.depth_max, 745.0);
  EXPECT_LT((cam.camera.center() - Vec3(2, 1.5, -400)).norm(), 1e-12);
  EXPECT_LT((back_project(cam.camera, Vec2(320, 240), 400) - Vec3(2, 1.5, 0)).norm(), 1e-12);
}

TEST(CamFormat, SeededRoundTrips) {
  SplitMix64 rng(2024);
  for (int i = 0; i < 100; ++i) {
    const CamFile a = random_cam(rng);
    const CamFile b = parse_cam(format_cam(a));
    EXPECT_EQ(b.camera.rotation(), a.camera.rotation());
    EXPECT_EQ(b.camera.translation(), a.camera.translation());
    EXPECT_EQ(b.camera.intrinsic(), a.camera.intrinsic());
    EXPECT_EQ(b.depth_min, a.depth_min);
    EXPECT_EQ(b.depth_interval, a.depth_interval);
    EXPECT_EQ(b.depth_count, a.depth_count);
    EXPECT_EQ(b.depth_max, a.depth_max);
  }
}

TEST(CamFormat, MalformedInputReportsLine) {
  std::string text = fixture("cam_rot90.txt");
  // Drop the last value of the second extrinsic row.
  const std::string bad = std::string(text).replace(text.find("1 0 0 -2"), 8, "1 0 0");
  try {
    parse_cam(bad);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3);
  }
  EXPECT_THROW(parse_cam(std::string(text).replace(0, 9, "extrinsix")), ParseError);
  EXPECT_THROW(parse_cam(text + "\n1 2\n"), ParseError);
  EXPECT_THROW(parse_cam(std::string(text).replace(text.find("0 0 0 1"), 7, "0 0 1 1")),
               ParseError);
  EXPECT_THROW(parse_cam(std::string(text).replace(text.find("425"), 3, "4x5")), ParseError);
  EXPECT_THROW(parse_cam(""), ParseError);
}

TEST(CamFormat, NonRigidRotationWarnsAndOrthonormalises) {
  std::string text = fixture("cam_rot90.txt");
  text.replace(text.find("0 -1 0 1.5"), 10, "0 -1.01 0 1.5");
  std::vector<std::string> warnings;
  const CamFile cam = parse_cam(text, [&](const std::string& m) { warnings.push_back(m); });
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_LT(Camera::rotation_error(cam.camera.rotation()), 1e-12);
  EXPECT_NEAR(cam.camera.rotation()(0, 1), -1.0, 1e-12);

  warnings.clear();
  parse_cam(fixture("cam_rot90.txt"), [&](const std::string& m) { warnings.push_back(m); });
  EXPECT_TRUE(warnings.empty());
}

TEST(PfmFormat, FixtureBytes) {
  const std::string bytes = fixture("depth_2x2.pfm");
  ASSERT_EQ(bytes.size(), 28u);
  const FloatImage img = decode_pfm(bytes);
  ASSERT_EQ(img.width, 2);
  ASSERT_EQ(img.height, 2);
  EXPECT_EQ(img.data[0], 1.0f);
  EXPECT_EQ(img.data[1], 2.0f);
  EXPECT_TRUE(std::isnan(img.data[2]));
  EXPECT_EQ(img.data[3], -0.5f);
  EXPECT_EQ(encode_pfm(img), bytes);

  const DepthMap d = to_depth_map(img);
  EXPECT_FALSE(d.is_valid(0, 1));
  EXPECT_TRUE(d.is_valid(1, 0));
}

TEST(PfmFormat, SeededRoundTripsAreBitExact) {
  SplitMix64 rng(77);
  for (int i = 0; i < 100; ++i) {
    FloatImage img;
    img.width = 1 + static_cast<int>(rng.uniform(0, 40));
    img.height = 1 + static_cast<int>(rng.uniform(0, 30));
    for (int j = 0; j < img.width * img.height; ++j) {
      const double u = rng.uniform(0, 1);
      if (u < 0.1) img.data.push_back(std::numeric_limits<float>::quiet_NaN());
      else if (u < 0.15) img.data.push_back(std::numeric_limits<float>::denorm_min());
      else img.data.push_back(static_cast<float>(rng.uniform(-1e6, 1e6)));
    }
    const FloatImage back = decode_pfm(encode_pfm(img));
    ASSERT_EQ(back.width, img.width);
    ASSERT_EQ(back.height, img.height);
    for (std::size_t j = 0; j < img.data.size(); ++j) {
      ASSERT_TRUE(same_bits(back.data[j], img.data[j]));
    }
  }
}

TEST(PfmFormat, RejectsBigEndianAndGarbage) {
  std::string bytes = fixture("depth_2x2.pfm");
  EXPECT_THROW(decode_pfm(std::string(bytes).replace(7, 5, "1.0\n")), BigEndianUnsupported);
  EXPECT_THROW(decode_pfm(std::string(bytes).replace(0, 2, "PF")), ParseError);
  EXPECT_THROW(decode_pfm(bytes.substr(0, 20)), ParseError);
  EXPECT_THROW(decode_pfm("Pf\n2 x\n-1.0\n"), ParseError);
}

TEST(PnmFormat, SixteenBitRoundTrip) {
  SplitMix64 rng(5);
  ImageBuffer img(7, 5, 3);
  for (auto& v : img.data) v = static_cast<float>(std::round(rng.uniform(0, 65535)) / 65535.0);
  const ImageBuffer back = decode_pnm(encode_pnm(img));
  ASSERT_EQ(back.channels, 3);
  for (std::size_t j = 0; j < img.data.size(); ++j) EXPECT_EQ(back.data[j], img.data[j]);
  ImageBuffer gray(3, 2, 1, 0.5f);
  const ImageBuffer g8 = decode_pnm(encode_pnm(gray, 255));
  EXPECT_EQ(g8.channels, 1);
  EXPECT_NEAR(g8.data[0], 128.0 / 255.0, 1e-7);
  EXPECT_THROW(decode_pnm("P3\n1 1\n255\n0 0 0\n"), ParseError);
}

TEST(PlyFormat, FixtureByteForByte) {
  PointCloud c;
  c.points = {Vec3(1, 2.5, -3)};
  c.colors = {Rgb8{255, 0, 128}};
  const std::string bytes = fixture("one_point.ply");
  EXPECT_EQ(encode_ply(c, PlyFormat::kAscii), bytes);
  const PointCloud back = decode_ply(bytes);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back.points[0], c.points[0]);
  EXPECT_EQ(back.colors[0], c.colors[0]);
}

TEST(PlyFormat, EmptyCloudHeader) {
  EXPECT_EQ(encode_ply(PointCloud{}, PlyFormat::kAscii),
            "ply\nformat ascii 1.0\nelement vertex 0\nproperty float x\nproperty float y\n"
            "property float z\nend_header\n");
  EXPECT_TRUE(decode_ply(encode_ply(PointCloud{}, PlyFormat::kBinaryLittleEndian)).empty());
}

TEST(PlyFormat, BinaryAndAsciiRoundTrips) {
  SplitMix64 rng(8);
  PointCloud c;
  for (int i = 0; i < 200; ++i) {
    c.points.emplace_back(static_cast<float>(rng.uniform(-100, 100)),
                          static_cast<float>(rng.uniform(-100, 100)),
                          static_cast<float>(rng.uniform(-100, 100)));
    c.colors.push_back(Rgb8{static_cast<std::uint8_t>(i), 7, static_cast<std::uint8_t>(255 - i)});
  }
  for (auto fmt : {PlyFormat::kAscii, PlyFormat::kBinaryLittleEndian}) {
    const std::string bytes = encode_ply(c, fmt);
    const PointCloud back = decode_ply(bytes);
    ASSERT_EQ(back.size(), c.size());
    EXPECT_EQ(back.points, c.points);
    EXPECT_EQ(back.colors, c.colors);
    EXPECT_EQ(encode_ply(back, fmt), bytes);
  }
  const std::string binary = encode_ply(c, PlyFormat::kBinaryLittleEndian);
  const std::size_t header = binary.find("end_header\n") + 11;
  EXPECT_EQ(binary.size(), header + 200 * 15);
  EXPECT_THROW(decode_ply(binary.substr(0, binary.size() - 1)), ParseError);
  EXPECT_THROW(decode_ply("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nend_header\n1\n"),
               ParseError);
}

TEST(PairFormat, RingPairsRoundTrip) {
  const ViewPairs pairs = ring_pairs(7);
  ASSERT_EQ(pairs.sources.size(), 7u);
  EXPECT_EQ(pairs.source_ids(0), (std::vector<int>{1, 6, 2, 5, 3, 4}));
  EXPECT_EQ(pairs.source_ids(3, 2), (std::vector<int>{4, 2}));
  const ViewPairs back = parse_pairs(format_pairs(pairs));
  EXPECT_EQ(back.sources, pairs.sources);
  EXPECT_EQ(ring_pairs(2).source_ids(1), std::vector<int>{0});
  EXPECT_THROW(parse_pairs("2\n0\n1 0 1.0\n1\n1 0 1.0\n"), ParseError);
  EXPECT_THROW(parse_pairs("1\n0\n2 0 1.0\n"), ParseError);
}

TEST(WeightContainer, RoundTripAndGraphChecks) {
  WeightBundle bundle;
  append_layers(bundle, DrenetWeights::random(3));
  append_layers(bundle, HuLstmWeights::random(4));
  const std::string bytes = encode_weights(bundle);
  EXPECT_EQ(bytes.rfind(kWeightsMagic, 0), 0u);
  const WeightBundle back = decode_weights(bytes);
  ASSERT_EQ(back.layers.size(), bundle.layers.size());
  for (std::size_t i = 0; i < back.layers.size(); ++i) {
    EXPECT_EQ(back.layers[i].name, bundle.layers[i].name);
    EXPECT_EQ(back.layers[i].weights.kernel, bundle.layers[i].weights.kernel);
    EXPECT_EQ(back.layers[i].weights.bias, bundle.layers[i].weights.bias);
  }
  const DrenetWeights d = drenet_from(back);
  EXPECT_EQ(d.layers[8].kernel, DrenetWeights::random(3).layers[8].kernel);
  const HuLstmWeights h = hulstm_from(back);
  EXPECT_EQ(h.cells[2].input_gate.kernel, HuLstmWeights::random(4).cells[2].input_gate.kernel);

  WeightBundle partial;
  append_layers(partial, DrenetWeights::random(3));
  partial.layers.pop_back();
  EXPECT_THROW(drenet_from(decode_weights(encode_weights(partial))), WeightGraphMismatch);
  EXPECT_THROW(decode_weights(bytes.substr(0, bytes.size() - 4)), ParseError);
  EXPECT_THROW(decode_weights("NOT-WEIGHTS\n2\n{}"), ParseError);
}

TEST(ProjectLayout, ZeroPaddedPaths) {
  const ProjectLayout layout{"proj"};
  EXPECT_EQ(layout.image(3), fs::path("proj/images/00000003.ppm"));
  EXPECT_EQ(layout.camera(12), fs::path("proj/cams/00000012_cam.txt"));
  EXPECT_EQ(layout.depth(0), fs::path("proj/depths/00000000.pfm"));
  EXPECT_EQ(layout.confidence(0), fs::path("proj/depths/00000000_conf.pfm"));
  EXPECT_EQ(layout.pairs(), fs::path("proj/pair.txt"));
}

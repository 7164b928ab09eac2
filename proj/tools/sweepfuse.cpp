// sweepfuse command-line driver: synth, depth, fuse, eval, check.

#include <cstdint>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "selfcheck.hpp"
#include "sweepfuse/evalm.hpp"
#include "sweepfuse/io.hpp"
#include "sweepfuse/pipeline.hpp"
#include "sweepfuse/synth.hpp"

namespace {

using namespace sweepfuse;

struct SynthArgs {
  std::string scene = "plane";
  int views = 7;
  std::string size = "64x48";
  std::uint64_t seed = 1;
  std::string out;
  double noise_sigma = 0.0;
  double outlier_frac = 0.0;
};

struct DepthArgs {
  std::string in;
  int views = 7;
  int num_depths = 32;
  std::string depth_mode = "uniform";
  std::string features = "photometric";
  std::string weights;
  std::string regularizer = "passthrough";
  double score_scale = kDefaultScoreScale;
  std::uint64_t seed = 1;
  std::string out;
};

struct FuseArgs {
  std::string in;
  int views = 0;
  std::string filter = "dynamic";
  FusionParams params;
  std::string format = "binary";
  std::string out;
};

struct EvalArgs {
  std::string recon;
  std::string gt;
  double threshold = 0.0;
  double max_dist = 0.0;
  bool json = false;
};

std::pair<int, int> parse_size(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos) throw InvalidArgument("size must look like WxH");
  const int w = std::stoi(s.substr(0, x));
  const int h = std::stoi(s.substr(x + 1));
  if (w <= 0 || h <= 0) throw InvalidArgument("size must be positive");
  return {w, h};
}

int run_synth(const SynthArgs& a) {
  const auto [w, h] = parse_size(a.size);
  const SceneKind kind = a.scene == "sphere" ? SceneKind::kSphere : SceneKind::kPlane;
  const auto project = make_synthetic_project(default_setup(kind, a.views, w, h, a.seed));
  std::optional<PerturbModel> perturb;
  if (a.noise_sigma > 0.0 || a.outlier_frac > 0.0) {
    perturb = PerturbModel{a.noise_sigma, a.outlier_frac, 0.0, 0.0};
  }
  write_synthetic_project(ProjectLayout{a.out}, project, perturb, a.seed);
  std::cout << "wrote " << a.views << " views (" << w << "x" << h << ") to " << a.out << '\n';
  return 0;
}

int run_depth(const DepthArgs& a) {
  const ProjectLayout in{a.in};
  const ProjectLayout out{a.out.empty() ? a.in : a.out};
  DepthConfig config;
  config.num_depths = a.num_depths;
  config.sampling = a.depth_mode == "inverse" ? DepthSampling::kInverse : DepthSampling::kUniform;
  config.features = a.features == "drenet" ? FeatureKind::kDrenet : FeatureKind::kPhotometric;
  config.regularizer =
      a.regularizer == "hulstm" ? RegularizerKind::kHuLstm : RegularizerKind::kPassthrough;
  config.score_scale = a.score_scale;

  NetworkWeights weights;
  const bool need_drenet = config.features == FeatureKind::kDrenet;
  const bool need_lstm = config.regularizer == RegularizerKind::kHuLstm;
  if (!a.weights.empty()) {
    const WeightBundle bundle = read_weights(a.weights);
    if (need_drenet) weights.drenet = drenet_from(bundle);
    if (need_lstm) weights.hulstm = hulstm_from(bundle);
  } else if (need_drenet || need_lstm) {
    std::cerr << "warning: no --weights given; using seeded random network weights\n";
    if (need_drenet) weights.drenet = DrenetWeights::random(a.seed);
    if (need_lstm) weights.hulstm = HuLstmWeights::random(a.seed + 1);
  }

  const auto inputs = load_inputs(in, static_cast<std::size_t>(a.views));
  const auto pairs = load_pairs_or_all(in, inputs.size());
  const auto estimates = estimate_all(inputs, pairs, config, weights);
  for (std::size_t i = 0; i < estimates.size(); ++i) save_estimate(out, i, estimates[i]);
  if (out.root != in.root) {
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      write_cam(out.camera(i), inputs[i].cam);
      write_pnm(out.image(i), inputs[i].image);
    }
    write_pairs(out.pairs(), pairs);
  }
  std::cout << "estimated " << estimates.size() << " depth maps into " << out.root.string()
            << '\n';
  return 0;
}

int run_fuse(const FuseArgs& a) {
  const ProjectLayout in{a.in};
  const std::size_t views = a.views > 0 ? static_cast<std::size_t>(a.views) : in.count_views();
  if (views == 0) throw IoError("no camera files under " + a.in);
  const auto estimates = load_estimates(in, views);
  const auto sources = source_lists(load_pairs_or_all(in, views));
  FuseConfig config;
  config.filter = a.filter == "fixed" ? FilterKind::kFixed : FilterKind::kDynamic;
  config.params = a.params;
  const PointCloud cloud = filter_and_fuse(estimates, sources, config);
  const fs::path out = a.out.empty() ? in.root / "cloud.ply" : fs::path(a.out);
  write_ply(out, cloud, a.format == "ascii" ? PlyFormat::kAscii : PlyFormat::kBinaryLittleEndian);
  std::cout << "fused " << cloud.size() << " points into " << out.string() << '\n';
  return 0;
}

int run_eval(const EvalArgs& a) {
  const auto report = evaluate(read_ply(a.recon), read_ply(a.gt), a.threshold, a.max_dist);
  if (a.json) {
    std::cout << to_json(report).dump(2) << '\n';
  } else {
    std::cout << to_key_value(report);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Plane-sweep multi-view stereo with recurrent regularisation and dynamic "
               "consistency fusion"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Render a synthetic multi-view project");
  s->add_option("--scene", synth.scene)->check(CLI::IsMember({"plane", "sphere"}))
      ->capture_default_str();
  s->add_option("--views", synth.views)->check(CLI::PositiveNumber)->capture_default_str();
  s->add_option("--size", synth.size, "WxH")->capture_default_str();
  s->add_option("--seed", synth.seed)->capture_default_str();
  s->add_option("--out", synth.out)->required();
  s->add_option("--noise-sigma", synth.noise_sigma)->check(CLI::NonNegativeNumber);
  s->add_option("--outlier-frac", synth.outlier_frac)->check(CLI::Range(0.0, 1.0));

  DepthArgs depth;
  auto* d = app.add_subcommand("depth", "Estimate per-view depth maps");
  d->add_option("--in", depth.in)->required();
  d->add_option("--views", depth.views)->check(CLI::PositiveNumber)->capture_default_str();
  d->add_option("--num-depths", depth.num_depths)->check(CLI::Range(2, 4096))
      ->capture_default_str();
  d->add_option("--depth-mode", depth.depth_mode)->check(CLI::IsMember({"uniform", "inverse"}))
      ->capture_default_str();
  d->add_option("--features", depth.features)
      ->check(CLI::IsMember({"drenet", "photometric"}))->capture_default_str();
  d->add_option("--weights", depth.weights)->check(CLI::ExistingFile);
  d->add_option("--regularizer", depth.regularizer)
      ->check(CLI::IsMember({"hulstm", "passthrough"}))->capture_default_str();
  d->add_option("--score-scale", depth.score_scale, "Passthrough inverse temperature")
      ->check(CLI::PositiveNumber)->capture_default_str();
  d->add_option("--seed", depth.seed, "Seed for random weights when none are given")
      ->capture_default_str();
  d->add_option("--out", depth.out, "Output project directory (default: --in)");

  FuseArgs fuse;
  auto* f = app.add_subcommand("fuse", "Filter depth maps and fuse them into a point cloud");
  f->add_option("--in", fuse.in)->required();
  f->add_option("--views", fuse.views, "Number of views (default: all camera files)");
  f->add_option("--filter", fuse.filter)->check(CLI::IsMember({"dynamic", "fixed"}))
      ->capture_default_str();
  f->add_option("--lambda", fuse.params.lambda)->capture_default_str();
  f->add_option("--tau", fuse.params.tau)->capture_default_str();
  f->add_option("--phi", fuse.params.phi)->capture_default_str();
  f->add_option("--tau1", fuse.params.tau_pixel)->capture_default_str();
  f->add_option("--tau2", fuse.params.tau_depth)->capture_default_str();
  f->add_option("--min-views", fuse.params.min_views)->capture_default_str();
  f->add_option("--ply-format", fuse.format)->check(CLI::IsMember({"ascii", "binary"}))
      ->capture_default_str();
  f->add_option("--out", fuse.out, "Output PLY (default: IN/cloud.ply)");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Compare a reconstruction with a ground-truth cloud");
  e->add_option("--recon", eval.recon)->required()->check(CLI::ExistingFile);
  e->add_option("--gt", eval.gt)->required()->check(CLI::ExistingFile);
  e->add_option("--threshold", eval.threshold)->required()->check(CLI::PositiveNumber);
  e->add_option("--max-dist", eval.max_dist, "Truncation distance (default: 20 x threshold)");
  e->add_flag("--json", eval.json);

  auto* c = app.add_subcommand("check", "Run the built-in oracle checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return 2;
  }

  try {
    if (*s) return run_synth(synth);
    if (*d) return run_depth(depth);
    if (*f) return run_fuse(fuse);
    if (*e) return run_eval(eval);
    if (*c) return selfcheck::run(std::cout) == 0 ? 0 : 1;
  } catch (const sweepfuse::InvalidArgument& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 1;
  }
  return 2;
}

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sweepfuse/errors.hpp"
#include "sweepfuse/maps.hpp"
#include "sweepfuse/rng.hpp"
#include "sweepfuse/tensor.hpp"

namespace sweepfuse {

inline constexpr int kFeatureChannels = 32;
inline constexpr int kGroupNormChannelsPerGroup = 8;
inline constexpr double kGroupNormEpsilon = 1e-5;

using FeatureMap = Tensor;

struct GroupNormParams {
  int groups = 1;
  std::vector<float> scale;
  std::vector<float> shift;
};

/// 3x3 convolution layer. Kernel layout is [out][in][ky][kx].
struct ConvLayerWeights {
  int in_channels = 0;
  int out_channels = 0;
  int dilation = 1;
  std::vector<float> kernel;
  std::vector<float> bias;
  std::optional<GroupNormParams> norm;

  ConvLayerWeights() = default;
  ConvLayerWeights(int in, int out, int dil = 1)
      : in_channels(in), out_channels(out), dilation(dil),
        kernel(static_cast<std::size_t>(in) * out * 9, 0.0f),
        bias(static_cast<std::size_t>(out), 0.0f) {}

  float& w(int o, int i, int ky, int kx) {
    return kernel[((static_cast<std::size_t>(o) * in_channels + i) * 3 + ky) * 3 +
                  kx];
  }
  float w(int o, int i, int ky, int kx) const {
    return kernel[((static_cast<std::size_t>(o) * in_channels + i) * 3 + ky) * 3 +
                  kx];
  }

  std::size_t parameter_count() const {
    std::size_t n = kernel.size() + bias.size();
    if (norm) n += norm->scale.size() + norm->shift.size();
    return n;
  }

  // Throws WeightGraphMismatch when buffer sizes disagree with the header.
  void check(const std::string& name) const {
    const auto fail = [&](const std::string& why) {
      throw WeightGraphMismatch("layer " + name + ": " + why);
    };
    if (in_channels <= 0 || out_channels <= 0 || dilation <= 0) {
      fail("non-positive dimensions");
    }
    if (kernel.size() != static_cast<std::size_t>(in_channels) * out_channels * 9) {
      fail("kernel size mismatch");
    }
    if (bias.size() != static_cast<std::size_t>(out_channels)) {
      fail("bias size mismatch");
    }
    for (float v : kernel) {
      if (!std::isfinite(v)) fail("non-finite kernel value");
    }
    if (norm) {
      if (norm->groups <= 0 || out_channels % norm->groups != 0) {
        fail("group count does not divide channel count");
      }
      if (norm->scale.size() != static_cast<std::size_t>(out_channels) ||
          norm->shift.size() != static_cast<std::size_t>(out_channels)) {
        fail("group-norm parameter size mismatch");
      }
    }
  }
};

// Fills kernel and bias uniformly in +-1/sqrt(fan_in), fan_in = in * 9.
inline void init_uniform(ConvLayerWeights& layer, SplitMix64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in_channels) * 9.0);
  for (auto& v : layer.kernel) v = static_cast<float>(rng.uniform(-bound, bound));
  for (auto& v : layer.bias) v = static_cast<float>(rng.uniform(-bound, bound));
}

inline GroupNormParams default_group_norm(int channels) {
  GroupNormParams gn;
  gn.groups = std::max(1, channels / kGroupNormChannelsPerGroup);
  gn.scale.assign(static_cast<std::size_t>(channels), 1.0f);
  gn.shift.assign(static_cast<std::size_t>(channels), 0.0f);
  return gn;
}

/// Stride-1 dilated 3x3 cross-correlation with zero padding equal to the
/// dilation, so the output keeps the input's spatial size. Accumulates in
/// double.
inline Tensor conv2d(const Tensor& input, const ConvLayerWeights& w) {
  if (input.channels() != w.in_channels) {
    throw ChannelMismatch("conv2d: input has " + std::to_string(input.channels()) +
                          " channels, layer expects " +
                          std::to_string(w.in_channels));
  }
  const int h = input.height();
  const int wd = input.width();
  const int dil = w.dilation;
  Tensor out(w.out_channels, h, wd);
  std::vector<double> acc(input.plane_size());

  for (int o = 0; o < w.out_channels; ++o) {
    std::fill(acc.begin(), acc.end(), static_cast<double>(w.bias[o]));
    for (int i = 0; i < w.in_channels; ++i) {
      const auto plane = input.channel(i);
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = (ky - 1) * dil;
        const int y0 = std::max(0, -dy);
        const int y1 = std::min(h, h - dy);
        for (int kx = 0; kx < 3; ++kx) {
          const double k = w.w(o, i, ky, kx);
          if (k == 0.0) continue;
          const int dx = (kx - 1) * dil;
          const int x0 = std::max(0, -dx);
          const int x1 = std::min(wd, wd - dx);
          for (int y = y0; y < y1; ++y) {
            const float* src = plane.data() + static_cast<std::size_t>(y + dy) * wd + dx;
            double* dst = acc.data() + static_cast<std::size_t>(y) * wd;
            for (int x = x0; x < x1; ++x) dst[x] += k * src[x];
          }
        }
      }
    }
    auto dst = out.channel(o);
    for (std::size_t j = 0; j < acc.size(); ++j) dst[j] = static_cast<float>(acc[j]);
  }
  return out;
}

/// Group normalisation (population variance, eps = 1e-5), per-channel
/// affine transform, then ReLU.
inline Tensor group_norm_relu(const Tensor& x, std::span<const float> scale,
                              std::span<const float> shift, int groups) {
  const int c = x.channels();
  if (groups <= 0 || c % groups != 0) {
    throw InvalidArgument("group_norm_relu: groups must divide channels");
  }
  if (scale.size() != static_cast<std::size_t>(c) ||
      shift.size() != static_cast<std::size_t>(c)) {
    throw ShapeMismatch("group_norm_relu: scale/shift size mismatch");
  }
  Tensor out(c, x.height(), x.width());
  const int per_group = c / groups;
  const double count = static_cast<double>(per_group) * x.plane_size();
  for (int g = 0; g < groups; ++g) {
    double mean = 0.0;
    for (int ch = g * per_group; ch < (g + 1) * per_group; ++ch) {
      for (float v : x.channel(ch)) mean += v;
    }
    mean /= count;
    double var = 0.0;
    for (int ch = g * per_group; ch < (g + 1) * per_group; ++ch) {
      for (float v : x.channel(ch)) var += (v - mean) * (v - mean);
    }
    var /= count;
    const double inv_std = 1.0 / std::sqrt(var + kGroupNormEpsilon);
    for (int ch = g * per_group; ch < (g + 1) * per_group; ++ch) {
      const auto src = x.channel(ch);
      auto dst = out.channel(ch);
      for (std::size_t j = 0; j < src.size(); ++j) {
        const double v = (src[j] - mean) * inv_std * scale[ch] + shift[ch];
        dst[j] = static_cast<float>(v > 0.0 ? v : 0.0);
      }
    }
  }
  return out;
}

// Convolution followed by group-norm + ReLU when the layer carries a norm.
inline Tensor conv_layer_forward(const Tensor& input, const ConvLayerWeights& w) {
  Tensor y = conv2d(input, w);
  if (!w.norm) return y;
  return group_norm_relu(y, w.norm->scale, w.norm->shift, w.norm->groups);
}

/// Dilated multi-branch feature extractor weights.
///
///   layer  name    in  out dil
///   0      2D0_0    3   16   1
///   1      2D0_1   16   16   1
///   2      2D0_2   16   32   2
///   3      2D0_3   32   32   1   (branch a, from 2D0_2)
///   4      2D1_1   32   32   3   (branch b, from 2D0_2)
///   5      2D1_2   32   32   1
///   6      2D2_1   32   32   4   (branch c, from 2D0_2)
///   7      2D2_2   32   32   1
///   8      fuse    96   32   1   (concat of 2D0_3, 2D1_2, 2D2_2)
///
/// Every layer is followed by group-norm + ReLU. A layer without norm
/// parameters is applied as a plain linear convolution.
struct DrenetWeights {
  struct LayerSpec {
    const char* name;
    int in;
    int out;
    int dilation;
  };
  static constexpr std::array<LayerSpec, 9> kLayout{{
      {"2D0_0", 3, 16, 1},
      {"2D0_1", 16, 16, 1},
      {"2D0_2", 16, 32, 2},
      {"2D0_3", 32, 32, 1},
      {"2D1_1", 32, 32, 3},
      {"2D1_2", 32, 32, 1},
      {"2D2_1", 32, 32, 4},
      {"2D2_2", 32, 32, 1},
      {"fuse", 96, 32, 1},
  }};

  std::array<ConvLayerWeights, 9> layers;

  void check() const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& spec = kLayout[i];
      const auto& l = layers[i];
      if (l.in_channels != spec.in || l.out_channels != spec.out ||
          l.dilation != spec.dilation) {
        throw WeightGraphMismatch(std::string("drenet layer ") + spec.name +
                                  " has shape " + std::to_string(l.in_channels) +
                                  "->" + std::to_string(l.out_channels) + " d" +
                                  std::to_string(l.dilation));
      }
      l.check(spec.name);
    }
  }

  // Zero kernels and biases, identity group norm.
  static DrenetWeights zeros() {
    DrenetWeights w;
    for (std::size_t i = 0; i < w.layers.size(); ++i) {
      const auto& spec = kLayout[i];
      w.layers[i] = ConvLayerWeights(spec.in, spec.out, spec.dilation);
      w.layers[i].norm = default_group_norm(spec.out);
    }
    return w;
  }

  static DrenetWeights random(std::uint64_t seed) {
    DrenetWeights w = zeros();
    SplitMix64 rng(seed);
    for (auto& l : w.layers) init_uniform(l, rng);
    return w;
  }
};

inline Tensor image_to_tensor(const ImageBuffer& img, int channels) {
  Tensor t(channels, img.height, img.width);
  for (int c = 0; c < channels; ++c) {
    const int src_c = img.channels == 1 ? 0 : c;
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) t(c, y, x) = img.at(x, y, src_c);
    }
  }
  return t;
}

/// Full-resolution 32-channel features. Grayscale inputs are replicated to
/// three channels.
inline FeatureMap drenet_forward(const ImageBuffer& img, const DrenetWeights& w) {
  w.check();
  const Tensor input = image_to_tensor(img, 3);
  const Tensor l0 = conv_layer_forward(input, w.layers[0]);
  const Tensor l1 = conv_layer_forward(l0, w.layers[1]);
  const Tensor trunk = conv_layer_forward(l1, w.layers[2]);

  const Tensor branch_a = conv_layer_forward(trunk, w.layers[3]);
  const Tensor branch_b =
      conv_layer_forward(conv_layer_forward(trunk, w.layers[4]), w.layers[5]);
  const Tensor branch_c =
      conv_layer_forward(conv_layer_forward(trunk, w.layers[6]), w.layers[7]);
  const Tensor stacked =
      concat_channels(concat_channels(branch_a, branch_b), branch_c);
  return conv_layer_forward(stacked, w.layers[8]);
}

/// Weight-free 32-channel features:
///   0       grayscale intensity
///   1..9    3x3 patch around the pixel minus the patch mean, row-major
///           offsets (-1,-1), (-1,0), ..., (1,1) as (dy, dx)
///   10      horizontal central difference (I(x+1) - I(x-1)) / 2
///   11      vertical central difference
///   12..31  zero
/// Neighbours outside the image are clamped to the border.
inline FeatureMap photometric_features(const ImageBuffer& img) {
  const int w = img.width;
  const int h = img.height;
  Tensor gray(1, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) gray(0, y, x) = img.gray(x, y);
  }
  const auto g = [&](int x, int y) {
    return gray(0, std::clamp(y, 0, h - 1), std::clamp(x, 0, w - 1));
  };

  FeatureMap f(kFeatureChannels, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      f(0, y, x) = gray(0, y, x);
      double mean = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) mean += g(x + dx, y + dy);
      }
      mean /= 9.0;
      int ch = 1;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          f(ch++, y, x) = static_cast<float>(g(x + dx, y + dy) - mean);
        }
      }
      f(10, y, x) = 0.5f * (g(x + 1, y) - g(x - 1, y));
      f(11, y, x) = 0.5f * (g(x, y + 1) - g(x, y - 1));
    }
  }
  return f;
}

}  // namespace sweepfuse

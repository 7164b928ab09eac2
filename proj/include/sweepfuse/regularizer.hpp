#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include "sweepfuse/costvol.hpp"
#include "sweepfuse/errors.hpp"
#include "sweepfuse/features.hpp"
#include "sweepfuse/rng.hpp"
#include "sweepfuse/tensor.hpp"

namespace sweepfuse {

inline constexpr int kLstmHiddenChannels = 32;

/// Gate convolutions of one ConvLSTM cell, each over [input, hidden].
struct LstmCellWeights {
  int input_channels = 0;
  int hidden_channels = 0;
  ConvLayerWeights input_gate;
  ConvLayerWeights forget_gate;
  ConvLayerWeights output_gate;
  ConvLayerWeights candidate;

  LstmCellWeights() = default;
  LstmCellWeights(int input, int hidden)
      : input_channels(input), hidden_channels(hidden),
        input_gate(input + hidden, hidden), forget_gate(input + hidden, hidden),
        output_gate(input + hidden, hidden), candidate(input + hidden, hidden) {}

  std::array<ConvLayerWeights*, 4> gates() {
    return {&input_gate, &forget_gate, &output_gate, &candidate};
  }
  std::array<const ConvLayerWeights*, 4> gates() const {
    return {&input_gate, &forget_gate, &output_gate, &candidate};
  }

  void check(const std::string& name) const {
    static constexpr std::array<const char*, 4> kGateNames{"input", "forget",
                                                           "output", "candidate"};
    const auto g = gates();
    for (std::size_t k = 0; k < g.size(); ++k) {
      const auto& l = *g[k];
      if (l.in_channels != input_channels + hidden_channels ||
          l.out_channels != hidden_channels || l.dilation != 1 || l.norm) {
        throw WeightGraphMismatch(name + "." + kGateNames[k] +
                                  ": gate shape does not match the cell");
      }
      l.check(name + "." + kGateNames[k]);
    }
  }
};

/// Hidden map h and memory cell c of one ConvLSTM cell. An empty state
/// (no channels) stands for the all-zero initial state.
struct LstmCellState {
  Tensor hidden;
  Tensor cell;

  bool empty() const noexcept { return hidden.empty(); }
};

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

/// One ConvLSTM update:
///   I = sig(W_I * [x,h] + B_I)    F = sig(W_F * [x,h] + B_F)
///   O = sig(W_O * [x,h] + B_O)    g = tanh(W_C * [x,h] + B_C)
///   c' = F . c + I . g            h' = O . tanh(c')
inline LstmCellState conv_lstm_cell(const Tensor& x, const LstmCellState& state,
                                    const LstmCellWeights& w) {
  if (x.channels() != w.input_channels) {
    throw ShapeMismatch("conv_lstm_cell: input has " + std::to_string(x.channels()) +
                        " channels, cell expects " + std::to_string(w.input_channels));
  }
  const int hc = w.hidden_channels;
  LstmCellState prev;
  if (state.empty()) {
    prev.hidden = Tensor(hc, x.height(), x.width());
    prev.cell = Tensor(hc, x.height(), x.width());
  } else {
    if (state.hidden.channels() != hc || state.hidden.height() != x.height() ||
        state.hidden.width() != x.width() || !state.cell.same_shape(state.hidden)) {
      throw ShapeMismatch("conv_lstm_cell: state " + state.hidden.shape_string() +
                          " does not match input " + x.shape_string());
    }
  }
  const LstmCellState& s = state.empty() ? prev : state;

  const Tensor joined = concat_channels(x, s.hidden);
  const Tensor in_gate = conv2d(joined, w.input_gate);
  const Tensor forget = conv2d(joined, w.forget_gate);
  const Tensor out_gate = conv2d(joined, w.output_gate);
  const Tensor cand = conv2d(joined, w.candidate);

  LstmCellState next;
  next.hidden = Tensor(hc, x.height(), x.width());
  next.cell = Tensor(hc, x.height(), x.width());
  const auto c_prev = s.cell.data();
  const auto gi = in_gate.data();
  const auto gf = forget.data();
  const auto go = out_gate.data();
  const auto gc = cand.data();
  auto h_out = next.hidden.data();
  auto c_out = next.cell.data();
  for (std::size_t j = 0; j < c_out.size(); ++j) {
    const double c_new = sigmoid(gf[j]) * c_prev[j] + sigmoid(gi[j]) * std::tanh(gc[j]);
    c_out[j] = static_cast<float>(c_new);
    h_out[j] = static_cast<float>(sigmoid(go[j]) * std::tanh(c_new));
  }
  return next;
}

/// 2x2 stride-2 max pooling. Odd sizes round up; border windows only
/// consider pixels inside the input.
inline Tensor max_pool2x2(const Tensor& in) {
  const int oh = (in.height() + 1) / 2;
  const int ow = (in.width() + 1) / 2;
  Tensor out(in.channels(), oh, ow);
  for (int c = 0; c < in.channels(); ++c) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        float m = in(c, 2 * y, 2 * x);
        if (2 * x + 1 < in.width()) m = std::max(m, in(c, 2 * y, 2 * x + 1));
        if (2 * y + 1 < in.height()) {
          m = std::max(m, in(c, 2 * y + 1, 2 * x));
          if (2 * x + 1 < in.width()) m = std::max(m, in(c, 2 * y + 1, 2 * x + 1));
        }
        out(c, y, x) = m;
      }
    }
  }
  return out;
}

/// 3x3 stride-2 transposed convolution (padding 1), cropped to
/// out_height x out_width (at most twice the input size). Input pixel
/// (iy, ix) scatters w[o][i][ky][kx] onto output (2*iy - 1 + ky, 2*ix - 1 + kx).
inline Tensor deconv2x(const Tensor& in, const ConvLayerWeights& w, int out_height,
                       int out_width) {
  if (in.channels() != w.in_channels) {
    throw ChannelMismatch("deconv2x: input has " + std::to_string(in.channels()) +
                          " channels, layer expects " + std::to_string(w.in_channels));
  }
  if (out_height > 2 * in.height() || out_width > 2 * in.width()) {
    throw ShapeMismatch("deconv2x: target larger than twice the input");
  }
  std::vector<double> acc(static_cast<std::size_t>(out_height) * out_width);
  Tensor out(w.out_channels, out_height, out_width);
  for (int o = 0; o < w.out_channels; ++o) {
    std::fill(acc.begin(), acc.end(), static_cast<double>(w.bias[o]));
    for (int i = 0; i < w.in_channels; ++i) {
      for (int iy = 0; iy < in.height(); ++iy) {
        for (int ix = 0; ix < in.width(); ++ix) {
          const double v = in(i, iy, ix);
          if (v == 0.0) continue;
          for (int ky = 0; ky < 3; ++ky) {
            const int y = 2 * iy - 1 + ky;
            if (y < 0 || y >= out_height) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int x = 2 * ix - 1 + kx;
              if (x < 0 || x >= out_width) continue;
              acc[static_cast<std::size_t>(y) * out_width + x] += v * w.w(o, i, ky, kx);
            }
          }
        }
      }
    }
    auto dst = out.channel(o);
    for (std::size_t j = 0; j < acc.size(); ++j) dst[j] = static_cast<float>(acc[j]);
  }
  return out;
}

/// Weights of the five-cell recurrent U-Net.
///
///   cell0  full res, input = cost slice (32)
///   cell1  1/2,  input = maxpool(h0)
///   cell2  1/4,  input = maxpool(h1)
///   cell3  1/2,  input = [h1, up_mid(h2)]
///   cell4  full, input = [h0, up_top(h3)]
///   head   3x3 conv h4 -> 1 channel, no activation
struct HuLstmWeights {
  static constexpr std::array<int, 5> kCellInputs{32, 32, 32, 64, 64};

  std::array<LstmCellWeights, 5> cells;
  ConvLayerWeights up_mid;
  ConvLayerWeights up_top;
  ConvLayerWeights head;

  void check() const {
    for (std::size_t k = 0; k < cells.size(); ++k) {
      const std::string name = "hulstm.cell" + std::to_string(k);
      if (cells[k].input_channels != kCellInputs[k] ||
          cells[k].hidden_channels != kLstmHiddenChannels) {
        throw WeightGraphMismatch(name + ": unexpected channel counts");
      }
      cells[k].check(name);
    }
    const auto check_layer = [](const ConvLayerWeights& l, const char* name, int in,
                                int out) {
      if (l.in_channels != in || l.out_channels != out || l.dilation != 1 || l.norm) {
        throw WeightGraphMismatch(std::string(name) + ": unexpected layer shape");
      }
      l.check(name);
    };
    check_layer(up_mid, "hulstm.up_mid", kLstmHiddenChannels, kLstmHiddenChannels);
    check_layer(up_top, "hulstm.up_top", kLstmHiddenChannels, kLstmHiddenChannels);
    check_layer(head, "hulstm.head", kLstmHiddenChannels, 1);
  }

  static HuLstmWeights zeros() {
    HuLstmWeights w;
    for (std::size_t k = 0; k < w.cells.size(); ++k) {
      w.cells[k] = LstmCellWeights(kCellInputs[k], kLstmHiddenChannels);
    }
    w.up_mid = ConvLayerWeights(kLstmHiddenChannels, kLstmHiddenChannels);
    w.up_top = ConvLayerWeights(kLstmHiddenChannels, kLstmHiddenChannels);
    w.head = ConvLayerWeights(kLstmHiddenChannels, 1);
    return w;
  }

  static HuLstmWeights random(std::uint64_t seed) {
    HuLstmWeights w = zeros();
    SplitMix64 rng(seed);
    for (auto& cell : w.cells) {
      for (auto* g : cell.gates()) init_uniform(*g, rng);
    }
    init_uniform(w.up_mid, rng);
    init_uniform(w.up_top, rng);
    init_uniform(w.head, rng);
    return w;
  }
};

struct LstmState {
  std::array<LstmCellState, 5> cells;
};

/// Regularised matching score C_H(i) of one hypothesis plane.
struct ScoreSlice {
  int index = 0;
  double depth = 0.0;
  Tensor score;  // 1 x H x W
};

/// One step of the recurrent U-Net; `state` is advanced in place.
inline ScoreSlice hu_lstm_step(const CostSlice& slice, LstmState& state,
                               const HuLstmWeights& w) {
  if (slice.cost.channels() != w.cells[0].input_channels) {
    throw WeightGraphMismatch("hu_lstm_step: cost slice has " +
                              std::to_string(slice.cost.channels()) +
                              " channels, network expects " +
                              std::to_string(w.cells[0].input_channels));
  }
  auto& s = state.cells;
  s[0] = conv_lstm_cell(slice.cost, s[0], w.cells[0]);
  s[1] = conv_lstm_cell(max_pool2x2(s[0].hidden), s[1], w.cells[1]);
  s[2] = conv_lstm_cell(max_pool2x2(s[1].hidden), s[2], w.cells[2]);

  const Tensor& h1 = s[1].hidden;
  s[3] = conv_lstm_cell(
      concat_channels(h1, deconv2x(s[2].hidden, w.up_mid, h1.height(), h1.width())),
      s[3], w.cells[3]);

  const Tensor& h0 = s[0].hidden;
  s[4] = conv_lstm_cell(
      concat_channels(h0, deconv2x(s[3].hidden, w.up_top, h0.height(), h0.width())),
      s[4], w.cells[4]);

  return {slice.index, slice.depth, conv2d(s[4].hidden, w.head)};
}

/// Stateful recurrent regulariser; feed slices in hypothesis order.
class HuLstmRegularizer {
 public:
  explicit HuLstmRegularizer(const HuLstmWeights& weights) : weights_(weights) {
    weights_.check();
  }

  ScoreSlice operator()(const CostSlice& slice) {
    return hu_lstm_step(slice, state_, weights_);
  }

  void reset() { state_ = LstmState{}; }
  const LstmState& state() const noexcept { return state_; }

 private:
  const HuLstmWeights& weights_;
  LstmState state_;
};

/// Weight-free regulariser: score = -scale * mean over channels of cost.
/// `scale` acts as an inverse softmax temperature; 1 gives the plain
/// negated mean.
class PassthroughRegularizer {
 public:
  explicit PassthroughRegularizer(double scale = 1.0) : scale_(scale) {}

  ScoreSlice operator()(const CostSlice& slice) const {
    const Tensor& cost = slice.cost;
    ScoreSlice out{slice.index, slice.depth, Tensor(1, cost.height(), cost.width())};
    auto dst = out.score.data();
    const std::size_t plane = cost.plane_size();
    std::vector<double> acc(plane, 0.0);
    for (int c = 0; c < cost.channels(); ++c) {
      const auto src = cost.channel(c);
      for (std::size_t j = 0; j < plane; ++j) acc[j] += src[j];
    }
    const double k = cost.channels() > 0 ? -scale_ / cost.channels() : 0.0;
    for (std::size_t j = 0; j < plane; ++j) dst[j] = static_cast<float>(k * acc[j]);
    return out;
  }

  double scale() const noexcept { return scale_; }

 private:
  double scale_;
};

/// Pulls every slice from `stream`, regularises it and hands the score
/// slice to `sink`. Only one cost slice and one score slice are alive at a
/// time.
template <class Regularizer, class Sink>
void regularize_stream(CostVolumeStream& stream, Regularizer& regularizer, Sink&& sink) {
  while (auto slice = stream.next()) {
    sink(regularizer(*slice));
  }
}

}  // namespace sweepfuse

#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <span>
#include <string>

#include "sweepfuse/errors.hpp"
#include "sweepfuse/memory.hpp"

namespace sweepfuse {

/// Dense channels x height x width float tensor, channel-major. Storage goes
/// through TrackingAllocator so working-set size can be audited.
class Tensor {
 public:
  Tensor() = default;

  Tensor(int channels, int height, int width, float fill = 0.0f)
      : channels_(channels), height_(height), width_(width) {
    if (channels < 0 || height < 0 || width < 0) {
      throw InvalidArgument("Tensor dimensions must be non-negative");
    }
    data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
  }

  int channels() const noexcept { return channels_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t plane_size() const noexcept {
    return static_cast<std::size_t>(height_) * width_;
  }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  bool same_shape(const Tensor& other) const noexcept {
    return channels_ == other.channels_ && height_ == other.height_ &&
           width_ == other.width_;
  }

  float& operator()(int c, int y, int x) noexcept {
    assert(c >= 0 && c < channels_ && y >= 0 && y < height_ && x >= 0 &&
           x < width_);
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }
  float operator()(int c, int y, int x) const noexcept {
    assert(c >= 0 && c < channels_ && y >= 0 && y < height_ && x >= 0 &&
           x < width_);
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }

  std::span<float> channel(int c) noexcept {
    return {data_.data() + static_cast<std::size_t>(c) * plane_size(),
            plane_size()};
  }
  std::span<const float> channel(int c) const noexcept {
    return {data_.data() + static_cast<std::size_t>(c) * plane_size(),
            plane_size()};
  }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }

  void fill(float value) { std::fill(data_.begin(), data_.end(), value); }

  std::string shape_string() const {
    return std::to_string(channels_) + "x" + std::to_string(height_) + "x" +
           std::to_string(width_);
  }

 private:
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  tracked_vector<float> data_;
};

// Stacks a on top of b along the channel axis.
inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeMismatch("concat_channels: " + a.shape_string() + " vs " +
                        b.shape_string());
  }
  Tensor out(a.channels() + b.channels(), a.height(), a.width());
  std::copy(a.data().begin(), a.data().end(), out.data().begin());
  std::copy(b.data().begin(), b.data().end(),
            out.data().begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

}  // namespace sweepfuse

#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

namespace photoseq::nn {

/// Dense float tensor in channel-major C x N x H x W layout.
///
/// Channel-major keeps each channel's batch contiguous, so a convolution over
/// the whole batch is a single (Cout x K) * (K x N*H*W) product and channel
/// concatenation is a plain append.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int channels, int batch, int height, int width, float fill = 0.0f)
      : c_(channels), n_(batch), h_(height), w_(width),
        data_(static_cast<std::size_t>(channels) * batch * height * width, fill) {}

  int channels() const { return c_; }
  int batch() const { return n_; }
  int height() const { return h_; }
  int width() const { return w_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  /// Elements per channel (N*H*W).
  std::size_t plane() const { return static_cast<std::size_t>(n_) * h_ * w_; }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }

  float& at(int c, int n, int y, int x) {
    return data_[((static_cast<std::size_t>(c) * n_ + n) * h_ + y) * w_ + x];
  }
  float at(int c, int n, int y, int x) const {
    return data_[((static_cast<std::size_t>(c) * n_ + n) * h_ + y) * w_ + x];
  }

  bool same_shape(const Tensor& o) const {
    return c_ == o.c_ && n_ == o.n_ && h_ == o.h_ && w_ == o.w_;
  }
  void fill(float v) { std::fill(data_.begin(), data_.end(), v); }

 private:
  int c_ = 0, n_ = 0, h_ = 0, w_ = 0;
  std::vector<float> data_;
};

}  // namespace photoseq::nn

#pragma once

#include <functional>
#include <memory>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "photoseq/nn/parameters.hpp"
#include "photoseq/nn/tensor.hpp"

namespace photoseq::nn {

struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows into it
  bool needs_grad = false;
  std::function<void(Node&)> backward;

  /// Zero-initialised gradient buffer shaped like `value`.
  Tensor& grad_buffer();
};

using Var = std::shared_ptr<Node>;

/// Reverse-mode tape. Ops append nodes while recording; `backward` walks them
/// in reverse and accumulates parameter gradients keyed by parameter address.
/// A non-recording tape evaluates ops without keeping closures around, which
/// is the inference path.
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  /// Input that never receives a gradient.
  Var constant(Tensor t) const;
  /// Leaf whose gradient is wanted (e.g. an image being optimised).
  Var variable(Tensor t);

  /// Registers an op output. `back` reads `self.grad` and pushes into inputs.
  Var record(Tensor value, bool needs_grad, std::function<void(Node&)> back);

  /// Parameters of `set` are used but never receive gradients.
  void freeze(const ParameterSet& set);
  bool trainable(const Parameter& p) const { return record_ && !frozen_.count(&p); }
  /// Gradient buffer for `p`, allocated on first use.
  std::vector<float>& grad_for(const Parameter& p);
  /// Gradient accumulated so far, or nullptr when none flowed.
  const std::vector<float>* grad_of(const Parameter& p) const;

  /// Seeds each output with its gradient and runs the tape backwards.
  void backward(std::span<const std::pair<Var, Tensor>> seeds);
  void backward(const Var& output, Tensor seed);

 private:
  bool record_;
  std::vector<Var> nodes_;
  std::unordered_map<const Parameter*, std::vector<float>> grads_;
  std::unordered_set<const Parameter*> frozen_;
};

// Ops. Weight layouts follow the usual conventions: conv [Cout, Cin, k, k],
// transpose conv [Cin, Cout, k, k]; biases [Cout].
Var conv2d(Tape& tape, const Var& x, const Parameter& weight, const Parameter* bias, int stride,
           int pad);
Var conv_transpose2d(Tape& tape, const Var& x, const Parameter& weight, const Parameter* bias,
                     int stride, int pad);
Var leaky_relu(Tape& tape, const Var& x, float slope);
/// (tanh(x) + 1) / 2, mapping onto (0, 1).
Var rescaled_tanh(Tape& tape, const Var& x);
Var add(Tape& tape, const Var& a, const Var& b);
Var concat_channels(Tape& tape, std::span<const Var> parts);
Var slice_channels(Tape& tape, const Var& x, int begin, int count);
/// 2x2 max pooling, stride 2 (odd trailing row/col dropped).
Var max_pool2(Tape& tape, const Var& x);
/// Mean over H and W, giving C x N x 1 x 1.
Var global_avg_pool(Tape& tape, const Var& x);
/// y[c] = x[c] * scale[c] + shift[c] with constant per-channel coefficients.
Var channel_affine(Tape& tape, const Var& x, std::span<const float> scale,
                   std::span<const float> shift);

/// Output spatial size of a convolution.
inline int conv_out_size(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }
/// Output spatial size of a transpose convolution.
inline int conv_transpose_out_size(int in, int k, int stride, int pad) {
  return (in - 1) * stride - 2 * pad + k;
}

}  // namespace photoseq::nn

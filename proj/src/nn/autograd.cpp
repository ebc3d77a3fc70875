#include "photoseq/nn/autograd.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include "photoseq/errors.hpp"

namespace photoseq::nn {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

// Unfolds `x` (C x N x H x W) into rows (c, ky, kx) and columns (n, oy, ox)
// for a k x k window with the given stride and zero padding.
void im2col(const Tensor& x, int k, int stride, int pad, int ho, int wo, float* cols) {
  const int C = x.channels(), N = x.batch(), H = x.height(), W = x.width();
  const std::size_t P = static_cast<std::size_t>(N) * ho * wo;
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* row = cols + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * P;
        for (int n = 0; n < N; ++n) {
          const float* src = x.data() + (static_cast<std::size_t>(c) * N + n) * H * W;
          for (int oy = 0; oy < ho; ++oy) {
            float* dst = row + (static_cast<std::size_t>(n) * ho + oy) * wo;
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= H) {
              std::memset(dst, 0, sizeof(float) * wo);
              continue;
            }
            const float* srow = src + static_cast<std::size_t>(iy) * W;
            if (stride == 1) {
              const int ox_lo = std::max(0, pad - kx);
              const int ox_hi = std::min(wo, W + pad - kx);
              for (int ox = 0; ox < std::min(ox_lo, wo); ++ox) dst[ox] = 0.0f;
              if (ox_hi > ox_lo) std::memcpy(dst + ox_lo, srow + ox_lo - pad + kx, sizeof(float) * (ox_hi - ox_lo));
              for (int ox = std::max(ox_hi, 0); ox < wo; ++ox) dst[ox] = 0.0f;
            } else {
              for (int ox = 0; ox < wo; ++ox) {
                const int ix = ox * stride - pad + kx;
                dst[ox] = (ix >= 0 && ix < W) ? srow[ix] : 0.0f;
              }
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters columns back, accumulating into `x`.
void col2im(const float* cols, int k, int stride, int pad, int ho, int wo, Tensor& x) {
  const int C = x.channels(), N = x.batch(), H = x.height(), W = x.width();
  const std::size_t P = static_cast<std::size_t>(N) * ho * wo;
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const float* row = cols + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * P;
        for (int n = 0; n < N; ++n) {
          float* dst = x.data() + (static_cast<std::size_t>(c) * N + n) * H * W;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= H) continue;
            const float* src = row + (static_cast<std::size_t>(n) * ho + oy) * wo;
            float* drow = dst + static_cast<std::size_t>(iy) * W;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride - pad + kx;
              if (ix >= 0 && ix < W) drow[ix] += src[ox];
            }
          }
        }
      }
    }
  }
}

void add_bias(Tensor& out, const Parameter& bias) {
  const std::size_t plane = out.plane();
  for (int c = 0; c < out.channels(); ++c) {
    float* p = out.data() + c * plane;
    const float b = bias.value[c];
    for (std::size_t i = 0; i < plane; ++i) p[i] += b;
  }
}

void accumulate_bias_grad(const Tensor& dout, std::vector<float>& db) {
  const std::size_t plane = dout.plane();
  for (int c = 0; c < dout.channels(); ++c) {
    const float* p = dout.data() + c * plane;
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += p[i];
    db[c] += static_cast<float>(s);
  }
}

void add_into(Tensor& dst, const Tensor& src) {
  float* d = dst.data();
  const float* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor(value.channels(), value.batch(), value.height(), value.width());
  return grad;
}

Var Tape::constant(Tensor t) const {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  return n;
}

Var Tape::variable(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  n->needs_grad = record_;
  return n;
}

Var Tape::record(Tensor value, bool needs_grad, std::function<void(Node&)> back) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (record_ && needs_grad) {
    n->needs_grad = true;
    n->backward = std::move(back);
    nodes_.push_back(n);
  }
  return n;
}

void Tape::freeze(const ParameterSet& set) {
  for (const auto& p : set) frozen_.insert(&p);
}

std::vector<float>& Tape::grad_for(const Parameter& p) {
  auto& g = grads_[&p];
  if (g.empty()) g.assign(p.numel(), 0.0f);
  return g;
}

const std::vector<float>* Tape::grad_of(const Parameter& p) const {
  auto it = grads_.find(&p);
  return it == grads_.end() ? nullptr : &it->second;
}

void Tape::backward(std::span<const std::pair<Var, Tensor>> seeds) {
  if (!record_) throw Error("backward on a non-recording tape");
  for (const auto& [var, seed] : seeds) {
    require(var->value.same_shape(seed), "backward seed shape mismatch");
    if (!var->needs_grad) continue;
    add_into(var->grad_buffer(), seed);
  }
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (n.backward && !n.grad.empty()) n.backward(n);
  }
}

void Tape::backward(const Var& output, Tensor seed) {
  std::pair<Var, Tensor> s{output, std::move(seed)};
  backward(std::span<const std::pair<Var, Tensor>>(&s, 1));
}

Var conv2d(Tape& tape, const Var& xv, const Parameter& weight, const Parameter* bias, int stride,
           int pad) {
  const Tensor& x = xv->value;
  require(weight.shape.size() == 4, "conv2d: weight '" + weight.name + "' must be 4-D");
  const int cout = weight.shape[0], cin = weight.shape[1], k = weight.shape[2];
  require(x.channels() == cin, "conv2d '" + weight.name + "': expected " + std::to_string(cin) +
                                   " input channels, got " + std::to_string(x.channels()));
  const int ho = conv_out_size(x.height(), k, stride, pad);
  const int wo = conv_out_size(x.width(), k, stride, pad);
  require(ho > 0 && wo > 0, "conv2d '" + weight.name + "': input too small");
  const std::size_t K = static_cast<std::size_t>(cin) * k * k;
  const std::size_t P = static_cast<std::size_t>(x.batch()) * ho * wo;
  const bool pointwise = (k == 1 && stride == 1 && pad == 0);

  Tensor out(cout, x.batch(), ho, wo);
  {
    std::vector<float> cols;
    const float* colp = x.data();
    if (!pointwise) {
      cols.resize(K * P);
      im2col(x, k, stride, pad, ho, wo, cols.data());
      colp = cols.data();
    }
    MatMap(out.data(), cout, P).noalias() =
        ConstMatMap(weight.value.data(), cout, K) * ConstMatMap(colp, K, P);
  }
  if (bias) add_bias(out, *bias);

  const bool wtrain = tape.trainable(weight);
  const bool btrain = bias && tape.trainable(*bias);
  const bool needs = xv->needs_grad || wtrain || btrain;
  return tape.record(std::move(out), needs, [xv, &weight, bias, &tape, stride, pad, k, cin, cout,
                                             ho, wo, K, P, pointwise, wtrain, btrain](Node& self) {
    const Tensor& x = xv->value;
    const Tensor& dout = self.grad;
    ConstMatMap dmat(dout.data(), cout, P);
    std::vector<float> cols;
    const float* colp = x.data();
    if (wtrain && !pointwise) {
      cols.resize(K * P);
      im2col(x, k, stride, pad, ho, wo, cols.data());
      colp = cols.data();
    }
    if (wtrain) {
      auto& dw = tape.grad_for(weight);
      MatMap(dw.data(), cout, K).noalias() += dmat * ConstMatMap(colp, K, P).transpose();
    }
    if (btrain) accumulate_bias_grad(dout, tape.grad_for(*bias));
    if (xv->needs_grad) {
      Tensor& dx = xv->grad_buffer();
      if (pointwise) {
        MatMap(dx.data(), cin, P).noalias() +=
            ConstMatMap(weight.value.data(), cout, K).transpose() * dmat;
      } else {
        cols.resize(K * P);
        MatMap(cols.data(), K, P).noalias() =
            ConstMatMap(weight.value.data(), cout, K).transpose() * dmat;
        col2im(cols.data(), k, stride, pad, ho, wo, dx);
      }
    }
  });
}

Var conv_transpose2d(Tape& tape, const Var& xv, const Parameter& weight, const Parameter* bias,
                     int stride, int pad) {
  const Tensor& x = xv->value;
  require(weight.shape.size() == 4, "conv_transpose2d: weight '" + weight.name + "' must be 4-D");
  const int cin = weight.shape[0], cout = weight.shape[1], k = weight.shape[2];
  require(x.channels() == cin, "conv_transpose2d '" + weight.name + "': expected " +
                                   std::to_string(cin) + " input channels, got " +
                                   std::to_string(x.channels()));
  const int hi = x.height(), wi = x.width();
  const int ho = conv_transpose_out_size(hi, k, stride, pad);
  const int wo = conv_transpose_out_size(wi, k, stride, pad);
  const std::size_t K = static_cast<std::size_t>(cout) * k * k;
  const std::size_t P = static_cast<std::size_t>(x.batch()) * hi * wi;

  Tensor out(cout, x.batch(), ho, wo);
  {
    std::vector<float> cols(K * P);
    MatMap(cols.data(), K, P).noalias() =
        ConstMatMap(weight.value.data(), cin, K).transpose() * ConstMatMap(x.data(), cin, P);
    col2im(cols.data(), k, stride, pad, hi, wi, out);
  }
  if (bias) add_bias(out, *bias);

  const bool wtrain = tape.trainable(weight);
  const bool btrain = bias && tape.trainable(*bias);
  const bool needs = xv->needs_grad || wtrain || btrain;
  return tape.record(std::move(out), needs, [xv, &weight, bias, &tape, stride, pad, k, cin, hi,
                                             wi, K, P, wtrain, btrain](Node& self) {
    const Tensor& dout = self.grad;
    if (btrain) accumulate_bias_grad(dout, tape.grad_for(*bias));
    if (!wtrain && !xv->needs_grad) return;
    std::vector<float> dcols(K * P);
    im2col(dout, k, stride, pad, hi, wi, dcols.data());
    ConstMatMap dc(dcols.data(), K, P);
    if (wtrain) {
      auto& dw = tape.grad_for(weight);
      MatMap(dw.data(), cin, K).noalias() += ConstMatMap(xv->value.data(), cin, P) * dc.transpose();
    }
    if (xv->needs_grad) {
      Tensor& dx = xv->grad_buffer();
      MatMap(dx.data(), cin, P).noalias() += ConstMatMap(weight.value.data(), cin, K) * dc;
    }
  });
}

Var leaky_relu(Tape& tape, const Var& xv, float slope) {
  Tensor out = xv->value;
  for (float& v : out.values()) v = v > 0.0f ? v : v * slope;
  return tape.record(std::move(out), xv->needs_grad, [xv, slope](Node& self) {
    Tensor& dx = xv->grad_buffer();
    const float* x = xv->value.data();
    const float* g = self.grad.data();
    float* d = dx.data();
    for (std::size_t i = 0; i < dx.size(); ++i) d[i] += x[i] > 0.0f ? g[i] : g[i] * slope;
  });
}

Var rescaled_tanh(Tape& tape, const Var& xv) {
  Tensor out = xv->value;
  for (float& v : out.values()) v = 0.5f * (std::tanh(v) + 1.0f);
  return tape.record(std::move(out), xv->needs_grad, [xv](Node& self) {
    Tensor& dx = xv->grad_buffer();
    const float* y = self.value.data();
    const float* g = self.grad.data();
    float* d = dx.data();
    // y = (t+1)/2  =>  dy/dx = (1 - t^2)/2 = 2 y (1 - y)
    for (std::size_t i = 0; i < dx.size(); ++i) d[i] += g[i] * 2.0f * y[i] * (1.0f - y[i]);
  });
}

Var add(Tape& tape, const Var& a, const Var& b) {
  require(a->value.same_shape(b->value), "add: shape mismatch");
  Tensor out = a->value;
  add_into(out, b->value);
  return tape.record(std::move(out), a->needs_grad || b->needs_grad, [a, b](Node& self) {
    if (a->needs_grad) add_into(a->grad_buffer(), self.grad);
    if (b->needs_grad) add_into(b->grad_buffer(), self.grad);
  });
}

Var concat_channels(Tape& tape, std::span<const Var> parts) {
  require(!parts.empty(), "concat_channels: nothing to concatenate");
  const Tensor& first = parts.front()->value;
  int channels = 0;
  bool needs = false;
  for (const auto& p : parts) {
    const Tensor& t = p->value;
    require(t.batch() == first.batch() && t.height() == first.height() &&
                t.width() == first.width(),
            "concat_channels: spatial/batch mismatch");
    channels += t.channels();
    needs = needs || p->needs_grad;
  }
  Tensor out(channels, first.batch(), first.height(), first.width());
  float* dst = out.data();
  for (const auto& p : parts) {
    std::memcpy(dst, p->value.data(), p->value.size() * sizeof(float));
    dst += p->value.size();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape.record(std::move(out), needs, [inputs](Node& self) {
    const float* src = self.grad.data();
    for (const auto& p : inputs) {
      if (p->needs_grad) {
        Tensor& g = p->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] += src[i];
      }
      src += p->value.size();
    }
  });
}

Var slice_channels(Tape& tape, const Var& xv, int begin, int count) {
  const Tensor& x = xv->value;
  require(begin >= 0 && count > 0 && begin + count <= x.channels(), "slice_channels: out of range");
  Tensor out(count, x.batch(), x.height(), x.width());
  const std::size_t plane = x.plane();
  std::memcpy(out.data(), x.data() + begin * plane, out.size() * sizeof(float));
  return tape.record(std::move(out), xv->needs_grad, [xv, begin, plane](Node& self) {
    float* d = xv->grad_buffer().data() + begin * plane;
    const float* g = self.grad.data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += g[i];
  });
}

Var max_pool2(Tape& tape, const Var& xv) {
  const Tensor& x = xv->value;
  const int ho = x.height() / 2, wo = x.width() / 2;
  require(ho > 0 && wo > 0, "max_pool2: input too small");
  Tensor out(x.channels(), x.batch(), ho, wo);
  std::vector<std::uint32_t> argmax(out.size());
  std::size_t o = 0;
  for (int c = 0; c < x.channels(); ++c)
    for (int n = 0; n < x.batch(); ++n)
      for (int y = 0; y < ho; ++y)
        for (int xx = 0; xx < wo; ++xx, ++o) {
          float best = -std::numeric_limits<float>::infinity();
          std::uint32_t bi = 0;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const auto idx = static_cast<std::uint32_t>(
                  ((static_cast<std::size_t>(c) * x.batch() + n) * x.height() + 2 * y + dy) *
                      x.width() + 2 * xx + dx);
              if (x.data()[idx] > best) {
                best = x.data()[idx];
                bi = idx;
              }
            }
          out.data()[o] = best;
          argmax[o] = bi;
        }
  return tape.record(std::move(out), xv->needs_grad, [xv, argmax = std::move(argmax)](Node& self) {
    float* d = xv->grad_buffer().data();
    for (std::size_t i = 0; i < argmax.size(); ++i) d[argmax[i]] += self.grad.data()[i];
  });
}

Var global_avg_pool(Tape& tape, const Var& xv) {
  const Tensor& x = xv->value;
  const std::size_t hw = static_cast<std::size_t>(x.height()) * x.width();
  Tensor out(x.channels(), x.batch(), 1, 1);
  for (int c = 0; c < x.channels(); ++c)
    for (int n = 0; n < x.batch(); ++n) {
      const float* p = x.data() + (static_cast<std::size_t>(c) * x.batch() + n) * hw;
      double s = 0;
      for (std::size_t i = 0; i < hw; ++i) s += p[i];
      out.at(c, n, 0, 0) = static_cast<float>(s / hw);
    }
  return tape.record(std::move(out), xv->needs_grad, [xv, hw](Node& self) {
    Tensor& dx = xv->grad_buffer();
    for (int c = 0; c < dx.channels(); ++c)
      for (int n = 0; n < dx.batch(); ++n) {
        float* p = dx.data() + (static_cast<std::size_t>(c) * dx.batch() + n) * hw;
        const float g = self.grad.at(c, n, 0, 0) / static_cast<float>(hw);
        for (std::size_t i = 0; i < hw; ++i) p[i] += g;
      }
  });
}

Var channel_affine(Tape& tape, const Var& xv, std::span<const float> scale,
                   std::span<const float> shift) {
  const Tensor& x = xv->value;
  require(static_cast<int>(scale.size()) == x.channels() &&
              static_cast<int>(shift.size()) == x.channels(),
          "channel_affine: coefficient count mismatch");
  Tensor out = x;
  const std::size_t plane = x.plane();
  for (int c = 0; c < x.channels(); ++c) {
    float* p = out.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) p[i] = p[i] * scale[c] + shift[c];
  }
  std::vector<float> s(scale.begin(), scale.end());
  return tape.record(std::move(out), xv->needs_grad, [xv, s, plane](Node& self) {
    float* d = xv->grad_buffer().data();
    for (std::size_t c = 0; c < s.size(); ++c)
      for (std::size_t i = 0; i < plane; ++i) d[c * plane + i] += self.grad.data()[c * plane + i] * s[c];
  });
}

}  // namespace photoseq::nn

#include "photoseq/costs.hpp"

#include <cmath>

#include "photoseq/errors.hpp"

namespace photoseq {

namespace {

Image& ensure_grad(Image* g, const Image& like) {
  if (g->empty()) *g = Image(like.height(), like.width());
  require_same_shape(*g, like, "gradient buffer");
  return *g;
}

}  // namespace

double mse(const Image& a, const Image& b, Image* grad_a) {
  require_same_shape(a, b, "mse");
  if (a.empty()) throw ArgumentError("mse: empty images");
  const auto av = a.values();
  const auto bv = b.values();
  const double inv_m = 1.0 / static_cast<double>(av.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    acc += d * d;
  }
  if (grad_a) {
    auto g = ensure_grad(grad_a, a).values();
    for (std::size_t i = 0; i < av.size(); ++i) g[i] += 2.0 * (av[i] - bv[i]) * inv_m;
  }
  return acc * inv_m;
}

double supervised_cost(const DecompositionTriple& pred, const DecompositionTriple& target,
                       TripleGrad* grad) {
  return mse(pred.first_half, target.first_half, grad ? &grad->first_half : nullptr) +
         mse(pred.mid_sharp, target.mid_sharp, grad ? &grad->mid_sharp : nullptr) +
         mse(pred.second_half, target.second_half, grad ? &grad->second_half : nullptr);
}

double sum_cost(const DecompositionTriple& pred, const Image& long_exposure, int n1, int n2,
                TripleGrad* grad) {
  if (n1 < 0 || n2 < 0) throw ArgumentError("sum_cost: negative half lengths");
  require_same_shape(pred.first_half, long_exposure, "sum_cost");
  require_same_shape(pred.mid_sharp, long_exposure, "sum_cost");
  require_same_shape(pred.second_half, long_exposure, "sum_cost");
  const double n = n1 + n2 + 1;
  const auto a = pred.first_half.values();
  const auto m = pred.mid_sharp.values();
  const auto b = pred.second_half.values();
  const auto y = long_exposure.values();
  const double inv_m = 1.0 / static_cast<double>(y.size());
  double acc = 0.0;
  std::span<double> ga, gm, gb;
  if (grad) {
    ga = ensure_grad(&grad->first_half, long_exposure).values();
    gm = ensure_grad(&grad->mid_sharp, long_exposure).values();
    gb = ensure_grad(&grad->second_half, long_exposure).values();
  }
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = (n1 * a[i] + m[i] + n2 * b[i]) / n - y[i];
    acc += r * r;
    if (grad) {
      const double s = 2.0 * r * inv_m / n;
      ga[i] += s * n1;
      gm[i] += s;
      gb[i] += s * n2;
    }
  }
  return acc * inv_m;
}

double tv_cost(const Image& img, Image* grad, double eps) {
  const int h = img.height();
  const int w = img.width();
  Image* g = grad ? &ensure_grad(grad, img) : nullptr;
  const double eps2 = eps * eps;
  double acc = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < Image::kChannels; ++c) {
        const double v = img.at(y, x, c);
        const double dx = x + 1 < w ? img.at(y, x + 1, c) - v : 0.0;
        const double dy = y + 1 < h ? img.at(y + 1, x, c) - v : 0.0;
        const double t = std::sqrt(dx * dx + dy * dy + eps2);
        acc += t;
        if (g) {
          g->at(y, x, c) -= (dx + dy) / t;
          if (x + 1 < w) g->at(y, x + 1, c) += dx / t;
          if (y + 1 < h) g->at(y + 1, x, c) += dy / t;
        }
      }
    }
  }
  return acc;
}

}  // namespace photoseq

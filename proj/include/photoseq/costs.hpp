#pragma once

#include "photoseq/image.hpp"
#include "photoseq/imaging_model.hpp"

namespace photoseq {

/// Gradient of a cost with respect to the three predicted images.
struct TripleGrad {
  Image first_half;
  Image mid_sharp;
  Image second_half;
};

/// Mean over all pixels and channels of (a-b)^2. Adds d/da into `grad_a`
/// when given (it must be empty or shaped like `a`).
double mse(const Image& a, const Image& b, Image* grad_a = nullptr);

/// Sum of the three per-image MSEs between prediction and target.
double supervised_cost(const DecompositionTriple& pred, const DecompositionTriple& target,
                       TripleGrad* grad = nullptr);

/// MSE between `long_exposure` and (n1*A + M + n2*B) / (n1+n2+1).
double sum_cost(const DecompositionTriple& pred, const Image& long_exposure, int n1, int n2,
                TripleGrad* grad = nullptr);

constexpr double kTvEpsilon = 1e-6;

/// Isotropic total variation with forward differences, summed over pixels and
/// channels: sum sqrt(dx^2 + dy^2 + eps^2). Differences leaving the image are
/// omitted.
double tv_cost(const Image& img, Image* grad = nullptr, double eps = kTvEpsilon);

}  // namespace photoseq

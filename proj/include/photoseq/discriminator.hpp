#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include "photoseq/image.hpp"
#include "photoseq/nn/adam.hpp"
#include "photoseq/nn/autograd.hpp"
#include "photoseq/nn/parameters.hpp"

namespace photoseq {

struct DiscriminatorConfig {
  std::array<int, 5> channels{32, 64, 128, 256, 512};
  double leaky_slope = 0.2;

  static DiscriminatorConfig scaled(int divisor);
  bool operator==(const DiscriminatorConfig&) const = default;
};

/// Real-vs-fake classifier on sharp images: five stride-2 3x3 convs with
/// LeakyReLU, global average pooling and a 1x1 conv to one logit per image.
/// Owns its parameters and optimizer.
class Discriminator {
 public:
  explicit Discriminator(DiscriminatorConfig cfg = {}, std::uint64_t seed = 0);

  /// Logits (1 x N x 1 x 1) for a 3 x N x H x W batch.
  nn::Var logits(nn::Tape& tape, const nn::Var& images) const;

  /// Mean over the batch of softplus(-D(real)) + softplus(D(fake)).
  double loss(const nn::Tensor& real, const nn::Tensor& fake) const;
  /// One Adam step on the classification loss; returns the loss before the step.
  double train_step(const nn::Tensor& real, const nn::Tensor& fake, double lr);

  /// Non-saturating generator cost mean softplus(-D(fake)); accumulates
  /// d/dfake into `grad_fake` (same shape as `fake`) when given.
  double generator_cost(const nn::Tensor& fake, nn::Tensor* grad_fake = nullptr) const;

  const nn::ParameterSet& params() const { return params_; }
  const DiscriminatorConfig& config() const { return cfg_; }

  void save(const std::filesystem::path& stem) const;
  void load(const std::filesystem::path& stem);

 private:
  DiscriminatorConfig cfg_;
  nn::ParameterSet params_;
  nn::Adam adam_;
};

/// Numerically stable log(1 + exp(x)).
double softplus(double x);
double sigmoid(double x);

struct AdversarialResult {
  double generator_cost;
  double discriminator_loss;
};

/// Updates the discriminator one step on (real, pred) and returns the
/// generator cost of `sharp_pred` under the updated discriminator.
AdversarialResult adversarial_step(Discriminator& d, const Image& sharp_pred, const Image& sharp_real,
                                   double lr);

}  // namespace photoseq

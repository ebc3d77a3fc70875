#include "photoseq/discriminator.hpp"

#include <cmath>
#include <random>

#include "photoseq/errors.hpp"
#include "photoseq/tensor_image.hpp"

namespace photoseq {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

DiscriminatorConfig DiscriminatorConfig::scaled(int divisor) {
  if (divisor < 1) throw ConfigError("discriminator width divisor must be >= 1");
  DiscriminatorConfig cfg;
  for (int& c : cfg.channels) c = std::max(1, c / divisor);
  return cfg;
}

namespace {

nn::ParameterSet make_params(const DiscriminatorConfig& cfg, std::uint64_t seed) {
  nn::ParameterSet set;
  int cin = 3;
  for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
    if (cfg.channels[i] < 1) throw ConfigError("discriminator channels must be positive");
    set.add("d" + std::to_string(i + 1) + ".weight", {cfg.channels[i], cin, 3, 3});
    set.add("d" + std::to_string(i + 1) + ".bias", {cfg.channels[i]});
    cin = cfg.channels[i];
  }
  set.add("logit.weight", {1, cin, 1, 1});
  set.add("logit.bias", {1});
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < set.size(); i += 2) {
    const float bound = 1.0f / std::sqrt(static_cast<float>(set[i].fan_in()));
    std::uniform_real_distribution<float> dist(-bound, bound);
    for (float& v : set[i].value) v = dist(rng);
    for (float& v : set[i + 1].value) v = dist(rng);
  }
  return set;
}

}  // namespace

Discriminator::Discriminator(DiscriminatorConfig cfg, std::uint64_t seed)
    : cfg_(cfg), params_(make_params(cfg, seed)), adam_(params_) {}

nn::Var Discriminator::logits(nn::Tape& tape, const nn::Var& images) const {
  if (images->value.channels() != 3) throw ShapeError("discriminator expects 3-channel images");
  nn::Var x = images;
  const auto slope = static_cast<float>(cfg_.leaky_slope);
  for (std::size_t i = 0; i < cfg_.channels.size(); ++i) {
    x = nn::conv2d(tape, x, params_[2 * i], &params_[2 * i + 1], 2, 1);
    x = nn::leaky_relu(tape, x, slope);
  }
  x = nn::global_avg_pool(tape, x);
  const std::size_t k = 2 * cfg_.channels.size();
  return nn::conv2d(tape, x, params_[k], &params_[k + 1], 1, 0);
}

double Discriminator::loss(const nn::Tensor& real, const nn::Tensor& fake) const {
  nn::Tape tape(false);
  const nn::Var lr = logits(tape, tape.constant(real));
  const nn::Var lf = logits(tape, tape.constant(fake));
  double acc = 0.0;
  for (float v : lr->value.values()) acc += softplus(-v);
  for (float v : lf->value.values()) acc += softplus(v);
  return acc / static_cast<double>(lr->value.size());
}

double Discriminator::train_step(const nn::Tensor& real, const nn::Tensor& fake, double lr) {
  if (!real.same_shape(fake)) throw ShapeError("discriminator: real/fake batch shapes differ");
  nn::Tape tape;
  nn::Var out_real = logits(tape, tape.constant(real));
  nn::Var out_fake = logits(tape, tape.constant(fake));
  const auto vr = out_real->value.values();
  const auto vf = out_fake->value.values();
  const double inv_n = 1.0 / static_cast<double>(vr.size());
  nn::Tensor seed_real(1, static_cast<int>(vr.size()), 1, 1);
  nn::Tensor seed_fake(1, static_cast<int>(vf.size()), 1, 1);
  double acc = 0.0;
  for (std::size_t i = 0; i < vr.size(); ++i) {
    acc += softplus(-vr[i]) + softplus(vf[i]);
    seed_real.data()[i] = static_cast<float>(-sigmoid(-vr[i]) * inv_n);
    seed_fake.data()[i] = static_cast<float>(sigmoid(vf[i]) * inv_n);
  }
  const std::pair<nn::Var, nn::Tensor> seeds[] = {{out_real, std::move(seed_real)},
                                                  {out_fake, std::move(seed_fake)}};
  tape.backward(seeds);
  adam_.step(params_, tape, lr);
  return acc * inv_n;
}

double Discriminator::generator_cost(const nn::Tensor& fake, nn::Tensor* grad_fake) const {
  nn::Tape tape(grad_fake != nullptr);
  tape.freeze(params_);
  nn::Var x = grad_fake ? tape.variable(fake) : tape.constant(fake);
  nn::Var out = logits(tape, x);
  const auto v = out->value.values();
  const double inv_n = 1.0 / static_cast<double>(v.size());
  double acc = 0.0;
  nn::Tensor seed(1, static_cast<int>(v.size()), 1, 1);
  for (std::size_t i = 0; i < v.size(); ++i) {
    acc += softplus(-v[i]);
    seed.data()[i] = static_cast<float>(-sigmoid(-v[i]) * inv_n);
  }
  if (grad_fake) {
    if (grad_fake->empty()) *grad_fake = nn::Tensor(fake.channels(), fake.batch(), fake.height(), fake.width());
    if (!grad_fake->same_shape(fake)) throw ShapeError("generator_cost: gradient buffer shape");
    tape.backward(out, std::move(seed));
    const auto g = x->grad_buffer().values();
    auto dst = grad_fake->values();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  }
  return acc * inv_n;
}

void Discriminator::save(const std::filesystem::path& stem) const {
  nn::write_container(stem.string() + ".disc", params_, {1, 0});
  adam_.save(stem.string() + ".disc");
}

void Discriminator::load(const std::filesystem::path& stem) {
  nn::ParameterSet p = nn::read_container(stem.string() + ".disc");
  if (p.size() != params_.size()) throw WeightError("discriminator checkpoint does not match config");
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i].name != params_[i].name || p[i].shape != params_[i].shape) {
      throw WeightError("discriminator checkpoint does not match config");
    }
  }
  params_ = std::move(p);
  adam_.load(stem.string() + ".disc");
}

AdversarialResult adversarial_step(Discriminator& d, const Image& sharp_pred, const Image& sharp_real,
                                   double lr) {
  require_same_shape(sharp_pred, sharp_real, "adversarial_step");
  const nn::Tensor fake = to_tensor(sharp_pred);
  const nn::Tensor real = to_tensor(sharp_real);
  AdversarialResult r{};
  r.discriminator_loss = d.train_step(real, fake, lr);
  r.generator_cost = d.generator_cost(fake);
  return r;
}

}  // namespace photoseq

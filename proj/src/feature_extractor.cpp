#include "photoseq/feature_extractor.hpp"

#include <cmath>
#include <random>

#include "photoseq/errors.hpp"
#include "photoseq/tensor_image.hpp"

namespace photoseq {

std::vector<int> VggFeatureExtractor::vgg19_conv54_plan() {
  constexpr int P = kPool;
  return {64, 64, P, 128, 128, P, 256, 256, 256, 256, P, 512, 512, 512, 512, P, 512, 512, 512, 512};
}

std::vector<std::string> vgg_parameter_names(const std::vector<int>& plan) {
  std::vector<std::string> names;
  int index = 0;
  for (int entry : plan) {
    if (entry == VggFeatureExtractor::kPool) {
      index += 1;
    } else {
      names.push_back("features." + std::to_string(index) + ".weight");
      names.push_back("features." + std::to_string(index) + ".bias");
      index += 2;  // conv + relu
    }
  }
  return names;
}

namespace {

void check_plan(const std::vector<int>& plan) {
  if (plan.empty() || plan.back() <= 0) throw ConfigError("feature extractor plan must end in a conv");
  for (int e : plan) {
    if (e <= 0 && e != VggFeatureExtractor::kPool) throw ConfigError("bad feature extractor plan entry");
  }
}

nn::ParameterSet expected_params(const std::vector<int>& plan) {
  nn::ParameterSet set;
  const auto names = vgg_parameter_names(plan);
  int cin = 3;
  std::size_t k = 0;
  for (int entry : plan) {
    if (entry == VggFeatureExtractor::kPool) continue;
    set.add(names[k++], {entry, cin, 3, 3});
    set.add(names[k++], {entry});
    cin = entry;
  }
  return set;
}

}  // namespace

VggFeatureExtractor::VggFeatureExtractor(std::vector<int> plan, nn::ParameterSet params,
                                         FeatureNormalization norm)
    : plan_(std::move(plan)), params_(std::move(params)), norm_(norm) {
  check_plan(plan_);
  const nn::ParameterSet expected = expected_params(plan_);
  if (params_.size() != expected.size()) {
    throw WeightError("feature extractor: expected " + std::to_string(expected.size()) +
                      " parameters, got " + std::to_string(params_.size()));
  }
  for (const auto& p : expected) {
    if (!params_.contains(p.name) || params_.at(p.name).shape != p.shape) {
      throw WeightError("feature extractor: missing or misshaped parameter '" + p.name + "'");
    }
  }
}

VggFeatureExtractor VggFeatureExtractor::load(const std::filesystem::path& path,
                                              std::vector<int> plan) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError("feature extractor weights not found: " + path.string());
  }
  return VggFeatureExtractor(std::move(plan), nn::read_container(path));
}

VggFeatureExtractor VggFeatureExtractor::random(std::vector<int> plan, std::uint64_t seed) {
  check_plan(plan);
  nn::ParameterSet set = expected_params(plan);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < set.size(); i += 2) {
    auto& w = set[i];
    auto& b = set[i + 1];
    // He-style scale keeps activations alive through a deep ReLU stack.
    std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(w.fan_in())));
    for (float& v : w.value) v = dist(rng);
    std::fill(b.value.begin(), b.value.end(), 0.0f);
  }
  return VggFeatureExtractor(std::move(plan), std::move(set));
}

nn::Var VggFeatureExtractor::features(nn::Tape& tape, const nn::Var& images) const {
  std::array<float, 3> scale, shift;
  for (int c = 0; c < 3; ++c) {
    scale[c] = 1.0f / norm_.stddev[c];
    shift[c] = -norm_.mean[c] / norm_.stddev[c];
  }
  nn::Var x = nn::channel_affine(tape, images, scale, shift);
  std::size_t k = 0;
  for (int entry : plan_) {
    if (entry == kPool) {
      x = nn::max_pool2(tape, x);
    } else {
      x = nn::conv2d(tape, x, params_[k], &params_[k + 1], 1, 1);
      x = nn::leaky_relu(tape, x, 0.0f);
      k += 2;
    }
  }
  return x;
}

std::string VggFeatureExtractor::describe() const {
  std::string s = "vgg[";
  for (std::size_t i = 0; i < plan_.size(); ++i) {
    if (i) s += ",";
    s += plan_[i] == kPool ? std::string("M") : std::to_string(plan_[i]);
  }
  return s + "]";
}

double perceptual_cost(const nn::Tensor& pred, const nn::Tensor& target,
                       const FeatureExtractor& extractor, nn::Tensor* grad_pred) {
  if (!pred.same_shape(target)) throw ShapeError("perceptual_cost: prediction/target shapes differ");
  nn::Tape tape(grad_pred != nullptr);
  tape.freeze(extractor.params());
  nn::Var p = grad_pred ? tape.variable(pred) : tape.constant(pred);
  nn::Var fp = extractor.features(tape, p);
  nn::Tape plain(false);
  nn::Var ft = extractor.features(plain, plain.constant(target));

  const auto a = fp->value.values();
  const auto b = ft->value.values();
  const double inv_m = 1.0 / static_cast<double>(a.size());
  double acc = 0.0;
  nn::Tensor seed(fp->value.channels(), fp->value.batch(), fp->value.height(), fp->value.width());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
    seed.data()[i] = static_cast<float>(2.0 * d * inv_m);
  }
  if (grad_pred) {
    if (grad_pred->empty()) {
      *grad_pred = nn::Tensor(pred.channels(), pred.batch(), pred.height(), pred.width());
    }
    if (!grad_pred->same_shape(pred)) throw ShapeError("perceptual_cost: gradient buffer shape");
    tape.backward(fp, std::move(seed));
    const auto g = p->grad_buffer().values();
    auto dst = grad_pred->values();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  }
  return acc * inv_m;
}

double perceptual_cost(const Image& pred, const Image& target, const FeatureExtractor& extractor,
                       Image* grad_pred) {
  require_same_shape(pred, target, "perceptual_cost");
  if (!grad_pred) return perceptual_cost(to_tensor(pred), to_tensor(target), extractor, nullptr);
  nn::Tensor g;
  const double cost = perceptual_cost(to_tensor(pred), to_tensor(target), extractor, &g);
  if (grad_pred->empty()) *grad_pred = Image(pred.height(), pred.width());
  require_same_shape(*grad_pred, pred, "gradient buffer");
  const Image gi = image_from_tensor(g, 0);
  auto out = grad_pred->values();
  const auto in = gi.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += in[i];
  return cost;
}

}  // namespace photoseq

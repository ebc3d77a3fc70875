#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "photoseq/image.hpp"
#include "photoseq/nn/autograd.hpp"
#include "photoseq/nn/parameters.hpp"

namespace photoseq {

/// Frozen deep-feature map used by the perceptual cost.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  /// Features of a 3 x N x H x W batch of [0,1] images. Parameters are never trained.
  virtual nn::Var features(nn::Tape& tape, const nn::Var& images) const = 0;
  virtual const nn::ParameterSet& params() const = 0;
  virtual std::string describe() const = 0;
};

/// Per-channel input normalization (ImageNet statistics by default).
struct FeatureNormalization {
  std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
  std::array<float, 3> stddev{0.229f, 0.224f, 0.225f};
};

/// VGG-style stack of 3x3 convs with ReLU and 2x2 max pools, truncated after
/// the ReLU of its last conv. Inputs are normalized with per-channel mean/std.
class VggFeatureExtractor : public FeatureExtractor {
 public:
  /// Plan entries are conv output widths; kPool marks a max-pool.
  static constexpr int kPool = -1;
  /// VGG-19 up to conv5_4 (the fourth conv of the fifth stage).
  static std::vector<int> vgg19_conv54_plan();

  VggFeatureExtractor(std::vector<int> plan, nn::ParameterSet params, FeatureNormalization norm = {});

  /// Weights in the container format, named "features.<k>.weight/bias" with k
  /// the index in the classic sequential layout (conv, relu, ..., pool).
  static VggFeatureExtractor load(const std::filesystem::path& path,
                                  std::vector<int> plan = vgg19_conv54_plan());
  /// Randomly initialized extractor, for tests and smoke runs.
  static VggFeatureExtractor random(std::vector<int> plan, std::uint64_t seed);

  nn::Var features(nn::Tape& tape, const nn::Var& images) const override;
  const nn::ParameterSet& params() const override { return params_; }
  std::string describe() const override;

 private:
  std::vector<int> plan_;
  nn::ParameterSet params_;
  FeatureNormalization norm_;
};

/// Parameter names a plan expects, in order.
std::vector<std::string> vgg_parameter_names(const std::vector<int>& plan);

/// MSE between the feature maps of `pred` and `target`. Adds d/dpred into
/// `grad_pred` when given.
double perceptual_cost(const Image& pred, const Image& target, const FeatureExtractor& extractor,
                       Image* grad_pred = nullptr);
/// Batched form on 3 x N x H x W tensors; the MSE runs over the whole batch.
double perceptual_cost(const nn::Tensor& pred, const nn::Tensor& target,
                       const FeatureExtractor& extractor, nn::Tensor* grad_pred = nullptr);

}  // namespace photoseq

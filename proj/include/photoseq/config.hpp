#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "photoseq/dataset_builder.hpp"
#include "photoseq/decomposer_net.hpp"
#include "photoseq/discriminator.hpp"
#include "photoseq/noise_model.hpp"
#include "photoseq/training.hpp"

namespace photoseq {

struct SequencerSettings {
  int levels = 2;
  bool three_models = false;
};

struct EvaluationSettings {
  int n = 11;
  std::vector<int> sweep{9, 11, 15, 19};
  std::uint64_t seed = 0;
  int examples_per_clip = 1;
  /// Centre crop side; 0 uses the largest multiple of 16 that fits.
  int crop_size = 0;
};

/// Every tunable of the toolkit. Serialized as one JSON object with the
/// sections builder, noise, network, loss, schedule, sequencer, evaluation.
struct ToolkitConfig {
  BuilderConfig builder;
  NoiseParams noise{2e-3, 1e-5, "default"};
  NetworkConfig network;

  LossWeights loss;
  /// Container file with the perceptual extractor weights ("" = none).
  std::string perceptual_weights;
  /// VGG-19 layer whose post-ReLU activations are compared, "conv<stage>_<index>".
  std::string perceptual_layer = "conv5_4";
  DiscriminatorConfig discriminator;

  TrainSchedule schedule;
  std::int64_t log_every = 100;
  std::int64_t checkpoint_every = 5000;

  SequencerSettings sequencer;
  EvaluationSettings evaluation;

  void validate() const;
};

nlohmann::ordered_json config_to_json(const ToolkitConfig& cfg);
/// Starts from the defaults and applies the keys present; unknown keys and
/// wrongly typed values raise ConfigError. The result is validated.
ToolkitConfig config_from_json(const nlohmann::json& j);
ToolkitConfig load_config(const std::filesystem::path& path);

/// VGG-19 plan truncated after "conv<stage>_<index>".
std::vector<int> vgg19_plan(const std::string& layer);

}  // namespace photoseq

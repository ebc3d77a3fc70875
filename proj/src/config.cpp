#include "photoseq/config.hpp"

#include <fstream>
#include <regex>

#include "json_util.hpp"
#include "photoseq/errors.hpp"
#include "photoseq/feature_extractor.hpp"

namespace photoseq {

using detail::StrictObject;
using nlohmann::json;
using nlohmann::ordered_json;

std::vector<int> vgg19_plan(const std::string& layer) {
  static const std::regex pattern(R"(conv([1-5])_([1-4]))");
  std::smatch m;
  const int stage_convs[5] = {2, 2, 4, 4, 4};
  if (!std::regex_match(layer, m, pattern)) {
    throw ConfigError("perceptual layer '" + layer + "' is not of the form conv<1-5>_<1-4>");
  }
  const int stage = std::stoi(m[1]);
  const int index = std::stoi(m[2]);
  if (index > stage_convs[stage - 1]) {
    throw ConfigError("VGG-19 stage " + std::to_string(stage) + " has only " +
                      std::to_string(stage_convs[stage - 1]) + " convs");
  }
  const int widths[5] = {64, 128, 256, 512, 512};
  std::vector<int> plan;
  for (int s = 1; s <= stage; ++s) {
    const int convs = s == stage ? index : stage_convs[s - 1];
    for (int k = 0; k < convs; ++k) plan.push_back(widths[s - 1]);
    if (s < stage) plan.push_back(VggFeatureExtractor::kPool);
  }
  return plan;
}

void ToolkitConfig::validate() const {
  builder.validate();
  try {
    noise.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("noise: ") + e.what());
  }
  network.validate();
  loss.validate();
  for (int c : discriminator.channels) {
    if (c < 1) throw ConfigError("loss.discriminator_channels must be positive");
  }
  vgg19_plan(perceptual_layer);
  schedule.validate();
  if (log_every < 1) throw ConfigError("schedule.log_every must be positive");
  if (checkpoint_every < 0) throw ConfigError("schedule.checkpoint_every must be >= 0");
  if (sequencer.levels < 1 || sequencer.levels > 16) {
    throw ConfigError("sequencer.levels must lie in [1, 16]");
  }
  if (evaluation.n < 3 || evaluation.n % 2 == 0) throw ConfigError("evaluation.n must be odd and >= 3");
  if (evaluation.sweep.empty()) throw ConfigError("evaluation.sweep must not be empty");
  for (int n : evaluation.sweep) {
    if (n < 3 || n % 2 == 0) throw ConfigError("evaluation.sweep entries must be odd and >= 3");
  }
  if (evaluation.examples_per_clip < 1) throw ConfigError("evaluation.examples_per_clip must be >= 1");
  if (evaluation.crop_size < 0 || evaluation.crop_size % NetworkConfig::kSpatialMultiple != 0) {
    throw ConfigError("evaluation.crop_size must be 0 or a positive multiple of 16");
  }
}

ordered_json config_to_json(const ToolkitConfig& c) {
  ordered_json j;
  ordered_json& b = j["builder"];
  b["n_min"] = c.builder.n_min;
  b["n_max"] = c.builder.n_max;
  b["crop_size"] = c.builder.crop_size;
  b["variance_reject_threshold"] = c.builder.variance_reject_threshold;
  b["blur_buckets"] = ordered_json::array();
  for (const auto& bucket : c.builder.blur_buckets) {
    b["blur_buckets"].push_back({{"variance_cutoff", bucket.variance_cutoff}, {"n", bucket.n_frames}});
  }
  b["h_flip"] = c.builder.h_flip;
  b["rot90"] = c.builder.rot90;
  b["temporal_flip"] = c.builder.temporal_flip;
  b["noisy_shorts"] = to_string(c.builder.noisy_shorts);
  b["max_attempts"] = c.builder.max_attempts;

  j["noise"] = {{"alpha", c.noise.alpha}, {"beta", c.noise.beta}, {"gain_label", c.noise.gain_label}};
  j["network"] = detail::network_to_json(c.network);

  ordered_json& l = j["loss"];
  l["lambda_sum"] = c.loss.lambda_sum;
  l["lambda_perc"] = c.loss.lambda_perc;
  l["lambda_adv"] = c.loss.lambda_adv;
  l["lambda_grad"] = c.loss.lambda_grad;
  l["perceptual_weights"] = c.perceptual_weights;
  l["perceptual_layer"] = c.perceptual_layer;
  l["discriminator_channels"] = c.discriminator.channels;
  l["discriminator_leaky_slope"] = c.discriminator.leaky_slope;

  ordered_json& s = j["schedule"];
  s["total_iterations"] = c.schedule.total_iterations;
  s["initial_lr"] = c.schedule.initial_lr;
  s["lr_decay_factor"] = c.schedule.lr_decay_factor;
  s["lr_decay_every"] = c.schedule.lr_decay_every;
  s["batch_size"] = c.schedule.batch_size;
  s["seed"] = c.schedule.seed;
  s["log_every"] = c.log_every;
  s["checkpoint_every"] = c.checkpoint_every;

  j["sequencer"] = {{"levels", c.sequencer.levels}, {"three_models", c.sequencer.three_models}};

  ordered_json& e = j["evaluation"];
  e["n"] = c.evaluation.n;
  e["sweep"] = c.evaluation.sweep;
  e["seed"] = c.evaluation.seed;
  e["examples_per_clip"] = c.evaluation.examples_per_clip;
  e["crop_size"] = c.evaluation.crop_size;
  return j;
}

ToolkitConfig config_from_json(const json& j) {
  ToolkitConfig c;
  StrictObject root(j, "");
  if (const json* b = root.child("builder")) {
    StrictObject o(*b, "builder");
    o.get("n_min", c.builder.n_min);
    o.get("n_max", c.builder.n_max);
    o.get("crop_size", c.builder.crop_size);
    o.get("variance_reject_threshold", c.builder.variance_reject_threshold);
    if (const json* buckets = o.child("blur_buckets")) {
      if (!buckets->is_array()) throw ConfigError("'builder.blur_buckets' must be an array");
      c.builder.blur_buckets.clear();
      for (const auto& item : *buckets) {
        StrictObject bo(item, "builder.blur_buckets[]");
        BlurBucket bucket{-1.0, 0};
        bo.get("variance_cutoff", bucket.variance_cutoff);
        bo.get("n", bucket.n_frames);
        bo.finish();
        if (bucket.n_frames == 0 || bucket.variance_cutoff < 0) {
          throw ConfigError("each blur bucket needs 'variance_cutoff' and 'n'");
        }
        c.builder.blur_buckets.push_back(bucket);
      }
    }
    o.get("h_flip", c.builder.h_flip);
    o.get("rot90", c.builder.rot90);
    o.get("temporal_flip", c.builder.temporal_flip);
    std::string noisy = to_string(c.builder.noisy_shorts);
    o.get("noisy_shorts", noisy);
    try {
      c.builder.noisy_shorts = noisy_shorts_from_string(noisy);
    } catch (const Error& e) {
      throw ConfigError(std::string("builder.noisy_shorts: ") + e.what());
    }
    o.get("max_attempts", c.builder.max_attempts);
    o.finish();
  }
  if (const json* n = root.child("noise")) {
    StrictObject o(*n, "noise");
    o.get("alpha", c.noise.alpha);
    o.get("beta", c.noise.beta);
    o.get("gain_label", c.noise.gain_label);
    o.finish();
  }
  if (const json* n = root.child("network")) c.network = detail::network_from_json(*n, c.network);
  if (const json* l = root.child("loss")) {
    StrictObject o(*l, "loss");
    o.get("lambda_sum", c.loss.lambda_sum);
    o.get("lambda_perc", c.loss.lambda_perc);
    o.get("lambda_adv", c.loss.lambda_adv);
    o.get("lambda_grad", c.loss.lambda_grad);
    o.get("perceptual_weights", c.perceptual_weights);
    o.get("perceptual_layer", c.perceptual_layer);
    o.get("discriminator_channels", c.discriminator.channels);
    o.get("discriminator_leaky_slope", c.discriminator.leaky_slope);
    o.finish();
  }
  if (const json* s = root.child("schedule")) {
    StrictObject o(*s, "schedule");
    o.get("total_iterations", c.schedule.total_iterations);
    o.get("initial_lr", c.schedule.initial_lr);
    o.get("lr_decay_factor", c.schedule.lr_decay_factor);
    o.get("lr_decay_every", c.schedule.lr_decay_every);
    o.get("batch_size", c.schedule.batch_size);
    o.get("seed", c.schedule.seed);
    o.get("log_every", c.log_every);
    o.get("checkpoint_every", c.checkpoint_every);
    o.finish();
  }
  if (const json* s = root.child("sequencer")) {
    StrictObject o(*s, "sequencer");
    o.get("levels", c.sequencer.levels);
    o.get("three_models", c.sequencer.three_models);
    o.finish();
  }
  if (const json* e = root.child("evaluation")) {
    StrictObject o(*e, "evaluation");
    o.get("n", c.evaluation.n);
    o.get("sweep", c.evaluation.sweep);
    o.get("seed", c.evaluation.seed);
    o.get("examples_per_clip", c.evaluation.examples_per_clip);
    o.get("crop_size", c.evaluation.crop_size);
    o.finish();
  }
  root.finish();
  c.validate();
  return c;
}

ToolkitConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

}  // namespace photoseq

#include "photoseq/noise_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "photoseq/errors.hpp"

namespace photoseq {

void NoiseParams::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !std::isfinite(alpha) || !std::isfinite(beta)) {
    throw ArgumentError("noise parameters must be finite and non-negative (alpha=" +
                        std::to_string(alpha) + ", beta=" + std::to_string(beta) + ")");
  }
}

Image noise_field(const Image& clean, const NoiseParams& params, std::uint64_t seed) {
  params.validate();
  Image noise(clean.height(), clean.width());
  if (params.alpha == 0.0 && params.beta == 0.0) return noise;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto in = clean.values();
  auto out = noise.values();
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double var = params.alpha * std::max(in[i], 0.0) + params.beta;
    out[i] = std::sqrt(var) * gauss(rng);
  }
  return noise;
}

Image add_noise(const Image& clean, const NoiseParams& params, std::uint64_t seed) {
  Image out = noise_field(clean, params, seed);
  auto o = out.values();
  auto in = clean.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::clamp(in[i] + o[i], 0.0, 1.0);
  return out;
}

NoiseParams estimate_noise_params(std::span<const FrameClip> bursts) {
  if (bursts.empty()) throw ArgumentError("estimate_noise_params: no bursts given");

  // Accumulate the regression sums in one pass over pixel samples.
  double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  double mean_noise_of_mean = 0;  // average of var/T, the spread a single level would show
  for (const auto& clip : bursts) {
    clip.validate();
    if (clip.size() < 8) {
      throw ArgumentError("estimate_noise_params: burst '" + clip.source_id +
                          "' has fewer than 8 frames");
    }
    const std::size_t count = clip.frames.front().size();
    const double frames = static_cast<double>(clip.size());
    for (std::size_t i = 0; i < count; ++i) {
      double s = 0, ss = 0;
      for (const auto& f : clip.frames) s += f.values()[i];
      const double mean = s / frames;
      for (const auto& f : clip.frames) {
        const double d = f.values()[i] - mean;
        ss += d * d;
      }
      const double var = ss / (frames - 1.0);
      n += 1;
      sx += mean;
      sy += var;
      sxx += mean * mean;
      sxy += mean * var;
      mean_noise_of_mean += var / frames;
    }
  }
  const double mx = sx / n;
  const double spread = sxx / n - mx * mx;  // variance of per-pixel means
  mean_noise_of_mean /= n;
  if (!(spread > 4.0 * mean_noise_of_mean + 1e-12)) {
    throw IllPosedError(
        "estimate_noise_params: bursts cover fewer than 2 distinct intensity levels; "
        "the affine variance fit is ill-posed");
  }
  const double slope = (sxy / n - mx * (sy / n)) / spread;
  const double intercept = sy / n - slope * mx;
  NoiseParams p;
  p.alpha = std::max(slope, 0.0);
  p.beta = std::max(intercept, 0.0);
  p.gain_label = "calibrated";
  return p;
}

void save_noise_params(const std::filesystem::path& path, const NoiseParams& params) {
  params.validate();
  nlohmann::ordered_json j;
  j["alpha"] = params.alpha;
  j["beta"] = params.beta;
  j["gain_label"] = params.gain_label;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write noise parameters to '" + path.string() + "'");
  out << j.dump(2) << "\n";
}

NoiseParams load_noise_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read noise parameters from '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed noise parameter file '" + path.string() + "': " + e.what());
  }
  NoiseParams p;
  for (const auto& [key, value] : j.items()) {
    if (key == "alpha")
      p.alpha = value.get<double>();
    else if (key == "beta")
      p.beta = value.get<double>();
    else if (key == "gain_label")
      p.gain_label = value.get<std::string>();
    else
      throw ConfigError("unknown key '" + key + "' in noise parameter file");
  }
  if (!j.contains("alpha") || !j.contains("beta")) {
    throw ConfigError("noise parameter file must define alpha and beta");
  }
  p.validate();
  return p;
}

}  // namespace photoseq

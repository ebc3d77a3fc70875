#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "photoseq/image.hpp"

namespace photoseq {

/// Affine variance law var(n) = alpha * i + beta for one sensor gain.
struct NoiseParams {
  double alpha = 0.0;
  double beta = 0.0;
  std::string gain_label = "default";

  void validate() const;
  bool operator==(const NoiseParams&) const = default;
};

/// Zero-mean Gaussian noise with variance alpha*i + beta, i the clean value.
/// Returned unclamped; deterministic for a given seed.
Image noise_field(const Image& clean, const NoiseParams& params, std::uint64_t seed);

/// clean + noise_field(clean, params, seed), clamped to [0,1].
Image add_noise(const Image& clean, const NoiseParams& params, std::uint64_t seed);

/// Least-squares fit of per-pixel temporal variance against temporal mean,
/// pooled over static-scene bursts of at least 8 frames each. Slope and
/// intercept are clipped at zero.
///
/// Throws IllPosedError when the per-pixel means do not span more than one
/// intensity level, i.e. their spread is not clearly larger than what the
/// noise alone would produce in a temporal average.
NoiseParams estimate_noise_params(std::span<const FrameClip> bursts);

void save_noise_params(const std::filesystem::path& path, const NoiseParams& params);
NoiseParams load_noise_params(const std::filesystem::path& path);

}  // namespace photoseq

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "photoseq/imaging_model.hpp"
#include "photoseq/noise_model.hpp"

namespace photoseq {

/// Which short exposures receive synthetic noise. `One` picks a side at random
/// per sample.
enum class NoisyShorts { Both, One, None };

const char* to_string(NoisyShorts mode);
NoisyShorts noisy_shorts_from_string(const std::string& s);

struct BlurBucket {
  double variance_cutoff;
  int n_frames;
};

struct BuilderConfig {
  int n_min = 11;
  int n_max = 39;
  int crop_size = 128;
  double variance_reject_threshold = 1e-4;
  /// Ascending cutoffs; a window maps to the N of the last cutoff <= its variance.
  std::vector<BlurBucket> blur_buckets{{1e-4, 11}, {1e-3, 17}, {3e-3, 23}, {1e-2, 31}, {3e-2, 39}};
  bool h_flip = true;
  bool rot90 = true;
  bool temporal_flip = true;
  NoisyShorts noisy_shorts = NoisyShorts::Both;
  int max_attempts = 64;

  /// Window length needed by select_blur_length and build_sample.
  int window_length() const { return n_max + 2; }
  void validate() const;
};

struct TrainingSample {
  ExposureTriplet triplet;     // shorts noisy per the builder mode, long clean
  DecompositionTriple target;  // noise-free
  int crop_row = 0;
  int crop_col = 0;
  int window_start = 0;  // first frame of the variance window in the source clip
  std::string source_id;
};

/// Mean over pixels of the per-pixel temporal variance of luma.
double temporal_luma_variance(std::span<const Image> window);

/// Blur length for a window, or nullopt when the window is static.
std::optional<int> select_blur_length(std::span<const Image> window, const BuilderConfig& cfg);

/// One random crop/window of `clip`; nullopt when the crop is static.
std::optional<TrainingSample> build_sample(const FrameClip& clip, std::uint64_t seed,
                                           const BuilderConfig& cfg, const NoiseParams& noise);

// Deterministic augmentations.
TrainingSample flip_horizontal(const TrainingSample& s);
TrainingSample rotate90(const TrainingSample& s, bool counter_clockwise);
/// Swaps shorts and halves; long and mid_sharp unchanged.
TrainingSample temporal_flip(const TrainingSample& s);

/// Applies each enabled augmentation independently with probability 0.5.
TrainingSample augment(const TrainingSample& s, std::uint64_t seed, const BuilderConfig& cfg);

/// Several corpora of clips; a stateless sample generator over them.
/// Corpora are drawn uniformly, then a clip uniformly within the corpus.
class SampleGenerator {
 public:
  SampleGenerator(std::vector<std::vector<FrameClip>> corpora, BuilderConfig cfg,
                  NoiseParams noise, bool with_augmentation = true);

  /// Same seed, same sample. Retries rejected crops with derived seeds up to
  /// cfg.max_attempts, then throws DataError.
  TrainingSample generate(std::uint64_t seed) const;

  const BuilderConfig& config() const { return cfg_; }
  BuilderConfig& config() { return cfg_; }
  const NoiseParams& noise() const { return noise_; }
  const std::vector<std::vector<FrameClip>>& corpora() const { return *corpora_; }

 private:
  // Shared so copies with a different config stay cheap.
  std::shared_ptr<const std::vector<std::vector<FrameClip>>> corpora_;
  BuilderConfig cfg_;
  NoiseParams noise_;
  bool augment_;
};

/// Replaces the variance cutoffs with quantiles of window variances sampled
/// from the corpora, keeping the configured N values. The lowest cutoff stays
/// at the rejection threshold.
void calibrate_blur_buckets(BuilderConfig& cfg, std::span<const std::vector<FrameClip>> corpora,
                            int probes, std::uint64_t seed);

/// Loads each corpus directory: one sub-directory of PNG frames per clip.
std::vector<FrameClip> load_corpus(const std::filesystem::path& dir);

// Sample cache: one directory of 16-bit PNGs per sample.
void write_sample(const std::filesystem::path& dir, const TrainingSample& s);
TrainingSample read_sample(const std::filesystem::path& dir);

/// 16-bit quantization bound on the recomposition residual of a cached sample.
inline constexpr double kCachedSumTolerance = 1.0 / 65535.0 + 1e-9;

}  // namespace photoseq

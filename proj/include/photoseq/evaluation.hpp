#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "photoseq/decomposer_net.hpp"
#include "photoseq/noise_model.hpp"
#include "photoseq/sequencer.hpp"

namespace photoseq {

/// PSNR reported for identical images.
constexpr double kPsnrSentinel = 99.0;

/// 10 log10(1 / MSE) over all channels of [0,1] images, capped at the sentinel.
double psnr(const Image& a, const Image& b);

/// One evaluation triplet with the frames under its long exposure.
struct EvalExample {
  ExposureTriplet triplet;
  /// truth[f-1] is frame f (1-based) of the long exposure window.
  std::vector<Image> truth;
  std::string source_id;
  int window_start = 0;
};

struct EvalSetup {
  NoiseParams noise;
  std::uint64_t seed = 0;
  /// Triplets drawn per clip, evenly spaced through it.
  int examples_per_clip = 1;
  /// Centre crop side (0 = largest multiple of 16 that fits).
  int crop_size = 0;
  int workers = 1;
};

/// Noisy-short triplets of length n drawn from each clip. Throws RangeError
/// if a clip is shorter than n + 2 frames.
std::vector<EvalExample> build_eval_examples(const std::vector<FrameClip>& corpus, int n,
                                             const EvalSetup& setup);

/// Maps each example to a photo-sequence for a plan.
using SequencePredictor = std::function<PhotoSequence(const EvalExample&, const RecursionPlan&)>;

SequencePredictor network_predictor(const Weights& weights);
/// Returns the ground-truth frames at the plan's timepoints (self-test).
SequencePredictor oracle_predictor();

/// Ground-truth frame index (1-based) for every timepoint of a plan when the
/// long exposure averages n frames; each split must leave odd halves.
std::vector<int> discrete_frames(int n, int levels);

struct TimepointRow {
  double t;
  int frame;
  double mean_psnr;
  std::vector<double> per_example;
};

struct SweepRow {
  int n;
  double mean_psnr;
  /// psnr(long exposure, true mid frame), for reference.
  double blurred_input_psnr;
  std::vector<double> per_example;
};

/// Two-level sequencing at N (default 11); mean PSNR over examples per timepoint.
std::vector<TimepointRow> eval_timepoints(const SequencePredictor& predictor,
                                          const std::vector<FrameClip>& corpus,
                                          const EvalSetup& setup, int n = 11);

/// Mid-frame PSNR for each blur length.
std::vector<SweepRow> eval_blur_sweep(const SequencePredictor& predictor,
                                      const std::vector<FrameClip>& corpus,
                                      const EvalSetup& setup,
                                      const std::vector<int>& lengths = {9, 11, 15, 19});

/// Per-frame PSNR between two reconstructions of the same plan.
std::vector<double> relative_psnr(const PhotoSequence& a, const PhotoSequence& b);

/// XT slice (T x W, row r of every frame) and YT slice (H x T, column c).
std::pair<Image, Image> slice_xt_yt(std::span<const Image> frames, int row, int col);

struct EvalReport {
  std::string protocol;
  std::string weights_fingerprint;
  std::string dataset_id;
  int n = 0;
  int levels = 0;
  std::size_t examples = 0;
  std::vector<TimepointRow> timepoints;
  std::vector<SweepRow> sweep;
  /// (label, per-frame relative PSNR)
  std::vector<std::pair<std::string, std::vector<double>>> relative;
};

/// report.csv (one row per entry) and summary.txt in `dir`.
void write_report(const std::filesystem::path& dir, const EvalReport& report);

}  // namespace photoseq

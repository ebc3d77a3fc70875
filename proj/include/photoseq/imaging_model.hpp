#pragma once

#include <array>
#include <span>
#include <utility>

#include "photoseq/image.hpp"

namespace photoseq {

/// Short-long-short observation. The shorts are the frames adjacent to the
/// long exposure window; `n_frames_long` is the number of averaged frames.
struct ExposureTriplet {
  Image short_pre;
  Image long_exposure;
  Image short_post;
  int n_frames_long = 3;
  std::array<bool, 2> short_is_noisy{false, false};

  int height() const { return long_exposure.height(); }
  int width() const { return long_exposure.width(); }
  /// Checks N odd and >= 3 and that all three images share dimensions.
  void validate() const;
};

/// Two half-blurred images around the sharp midpoint frame.
/// With n1 = n2 = (N-1)/2 the long exposure is recovered as
/// (n1*first_half + mid_sharp + n2*second_half) / N.
struct DecompositionTriple {
  Image first_half;
  Image mid_sharp;
  Image second_half;
  int n1 = 1;
  int n2 = 1;

  int n_total() const { return n1 + n2 + 1; }
  void validate() const;
};

/// Pixelwise arithmetic mean of the frames.
Image average_frames(std::span<const Image> frames);

/// Recomposes the long exposure from a decomposition.
Image recompose(const DecompositionTriple& d);

/// Synthesizes a triplet and its ground-truth decomposition from frames
/// [start-1, start+n] of `clip` (0-based). The long exposure averages frames
/// start..start+n-1; shorts are frames start-1 and start+n, noise-free.
std::pair<ExposureTriplet, DecompositionTriple> make_triplet(const FrameClip& clip, int start, int n);

/// Largest per-pixel deviation between `long_exposure` and recompose(d).
double sum_identity_residual(const Image& long_exposure, const DecompositionTriple& d);

}  // namespace photoseq

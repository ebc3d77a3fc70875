#include "photoseq/imaging_model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "photoseq/errors.hpp"

namespace photoseq {

void ExposureTriplet::validate() const {
  if (n_frames_long < 3 || n_frames_long % 2 == 0) {
    throw ArgumentError("long exposure frame count must be odd and >= 3, got " +
                        std::to_string(n_frames_long));
  }
  require_same_shape(short_pre, long_exposure, "triplet");
  require_same_shape(short_post, long_exposure, "triplet");
}

void DecompositionTriple::validate() const {
  if (n1 < 1 || n2 < 1) throw ArgumentError("decomposition half lengths must be positive");
  require_same_shape(first_half, mid_sharp, "decomposition");
  require_same_shape(second_half, mid_sharp, "decomposition");
}

Image average_frames(std::span<const Image> frames) {
  if (frames.empty()) throw ArgumentError("average_frames: empty frame list");
  Image out(frames.front().height(), frames.front().width());
  auto acc = out.values();
  for (const auto& f : frames) {
    if (!f.same_shape(frames.front())) {
      throw ArgumentError("average_frames: frames have mismatched dimensions");
    }
    auto v = f.values();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
  }
  const double inv = 1.0 / static_cast<double>(frames.size());
  for (auto& a : acc) a *= inv;
  return out;
}

Image recompose(const DecompositionTriple& d) {
  d.validate();
  Image out(d.mid_sharp.height(), d.mid_sharp.width());
  auto o = out.values();
  auto a = d.first_half.values();
  auto m = d.mid_sharp.values();
  auto b = d.second_half.values();
  const double inv = 1.0 / d.n_total();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = (d.n1 * a[i] + m[i] + d.n2 * b[i]) * inv;
  return out;
}

std::pair<ExposureTriplet, DecompositionTriple> make_triplet(const FrameClip& clip, int start,
                                                             int n) {
  if (n < 3 || n % 2 == 0) {
    throw ArgumentError("make_triplet: blur length must be odd and >= 3, got " + std::to_string(n));
  }
  if (start < 1 || static_cast<std::size_t>(start) + n >= clip.size()) {
    throw RangeError("make_triplet: clip of " + std::to_string(clip.size()) +
                     " frames cannot supply frames [" + std::to_string(start - 1) + ", " +
                     std::to_string(start + n) + "]");
  }
  const auto frames = std::span<const Image>(clip.frames);
  const int half = (n - 1) / 2;

  ExposureTriplet t;
  t.short_pre = frames[start - 1];
  t.long_exposure = average_frames(frames.subspan(start, n));
  t.short_post = frames[start + n];
  t.n_frames_long = n;
  t.validate();

  DecompositionTriple d;
  d.first_half = average_frames(frames.subspan(start, half));
  d.mid_sharp = frames[start + half];
  d.second_half = average_frames(frames.subspan(start + half + 1, half));
  d.n1 = half;
  d.n2 = half;
  return {std::move(t), std::move(d)};
}

double sum_identity_residual(const Image& long_exposure, const DecompositionTriple& d) {
  const Image r = recompose(d);
  require_same_shape(r, long_exposure, "sum identity");
  double worst = 0.0;
  auto a = r.values();
  auto b = long_exposure.values();
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace photoseq

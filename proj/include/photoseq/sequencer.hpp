#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "photoseq/decomposer_net.hpp"
#include "photoseq/imaging_model.hpp"

namespace photoseq {

/// One decomposition in the recursion tree. Times are integers in units of
/// 1/2^L, so node (level l, index j) spans [j, j+1] * 2^(L-l+1) and its
/// midpoint is (2j+1) * 2^(L-l).
struct PlanNode {
  int level = 1;  // 1-based
  int index = 0;  // position within the level, in time order
  int begin = 0;
  int end = 0;
  int mid = 0;
  int parent = -1;
  /// Node whose midpoint is `begin` / `end`; -1 when that flank is a captured short.
  int left_flank = -1;
  int right_flank = -1;
  /// How many of the two flanking sharp inputs are captured (noisy) shorts.
  int noisy_inputs = 2;
  /// 1-based frame of the midpoint when a discrete N is declared.
  std::optional<int> frame;
  /// Frames averaged by this node's long input and its halves under the
  /// discrete map (n_long = n1 + 1 + n2).
  std::optional<int> n_long;
};

struct RecursionPlan {
  int levels = 1;
  std::optional<int> n_frames;
  /// Level-major order: parents always precede children.
  std::vector<PlanNode> nodes;

  int denominator() const { return 1 << levels; }
  double midpoint(const PlanNode& n) const { return static_cast<double>(n.mid) / denominator(); }
  /// Node indices ordered by midpoint.
  std::vector<int> time_order() const;
  std::vector<double> timepoints() const;
  /// Frame indices of the midpoints at one level, in time order.
  std::vector<int> frames_at_level(int level) const;
};

/// Full binary decomposition tree of depth `levels`. With `n_frames` it must
/// equal 2^levels - 1 and every midpoint gets its frame index.
RecursionPlan build_plan(int levels, std::optional<int> n_frames = std::nullopt);

struct PhotoSequence {
  std::vector<Image> frames;
  std::vector<double> timepoints;
  RecursionPlan plan;
  /// Parameter hashes of the models used, indexed by noisy-input count
  /// (all three equal in single-model mode).
  std::array<std::string, 3> weight_fingerprints;
};

/// Any decomposition step; `noisy_inputs` tells a multi-model caller which
/// model to use.
using DecomposeFn = std::function<DecompositionTriple(const ExposureTriplet&, int noisy_inputs)>;

PhotoSequence sequence(const ExposureTriplet& triplet, const DecomposeFn& decompose,
                       const RecursionPlan& plan);
/// Single-model mode: the same weights at every node.
PhotoSequence sequence(const ExposureTriplet& triplet, const Weights& weights,
                       const RecursionPlan& plan);
/// Three-model mode: models[k] is used at nodes with k noisy inputs.
PhotoSequence sequence(const ExposureTriplet& triplet, const std::array<const Weights*, 3>& models,
                       const RecursionPlan& plan);

enum class ExposureKind { Short, Long };

struct Capture {
  Image image;
  ExposureKind kind;
};

/// One sequence per long exposure of an alternating S,L,S,...,L,S stream.
std::vector<PhotoSequence> sequence_stream(const std::vector<Capture>& captures,
                                           const DecomposeFn& decompose, int levels);
/// Throws ArgumentError describing the first alternation violation.
void check_alternation(const std::vector<Capture>& captures);

/// Loads a capture directory: PNGs sorted by name, tagged by a "short" or
/// "long" token in the file stem.
std::vector<Capture> load_capture_dir(const std::filesystem::path& dir);

/// Writes frame_00001.png ... in time order (continuing `first_index`) and
/// returns the written paths.
std::vector<std::filesystem::path> write_sequence_frames(const std::filesystem::path& dir,
                                                         const PhotoSequence& seq,
                                                         int first_index = 1);

}  // namespace photoseq

#include "photoseq/sequencer.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>

#include "photoseq/errors.hpp"

namespace photoseq {

namespace fs = std::filesystem;

constexpr int kMaxLevels = 16;

std::vector<int> RecursionPlan::time_order() const {
  std::vector<int> order(nodes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return nodes[a].mid < nodes[b].mid; });
  return order;
}

std::vector<double> RecursionPlan::timepoints() const {
  std::vector<double> t;
  for (int i : time_order()) t.push_back(midpoint(nodes[i]));
  return t;
}

std::vector<int> RecursionPlan::frames_at_level(int level) const {
  if (!n_frames) throw ArgumentError("plan has no discrete frame map");
  std::vector<int> out;
  for (int i : time_order()) {
    if (nodes[i].level == level) out.push_back(*nodes[i].frame);
  }
  return out;
}

RecursionPlan build_plan(int levels, std::optional<int> n_frames) {
  if (levels < 1 || levels > kMaxLevels) {
    throw ArgumentError("levels must lie in [1, " + std::to_string(kMaxLevels) + "]");
  }
  const int den = 1 << levels;
  if (n_frames && *n_frames != den - 1) {
    throw ArgumentError("n_frames = " + std::to_string(*n_frames) + " does not equal 2^" +
                        std::to_string(levels) + " - 1 = " + std::to_string(den - 1));
  }
  RecursionPlan plan;
  plan.levels = levels;
  plan.n_frames = n_frames;
  // Node id of every midpoint, so flanks can be looked up by time.
  std::vector<int> node_at(den + 1, -1);
  int level_start = 0;
  for (int level = 1; level <= levels; ++level) {
    const int span = 1 << (levels - level + 1);
    const int count = 1 << (level - 1);
    for (int j = 0; j < count; ++j) {
      PlanNode n;
      n.level = level;
      n.index = j;
      n.begin = j * span;
      n.end = n.begin + span;
      n.mid = n.begin + span / 2;
      n.parent = level == 1 ? -1 : level_start - (1 << (level - 2)) + j / 2;
      n.left_flank = n.begin == 0 ? -1 : node_at[n.begin];
      n.right_flank = n.end == den ? -1 : node_at[n.end];
      n.noisy_inputs = (n.left_flank == -1) + (n.right_flank == -1);
      if (n_frames) {
        n.frame = n.mid;
        n.n_long = n.end - n.begin - 1;
      }
      node_at[n.mid] = static_cast<int>(plan.nodes.size());
      plan.nodes.push_back(n);
    }
    level_start += count;
  }
  return plan;
}

PhotoSequence sequence(const ExposureTriplet& triplet, const DecomposeFn& decompose,
                       const RecursionPlan& plan) {
  triplet.validate();
  if (plan.nodes.empty()) throw ConfigError("empty recursion plan");
  std::vector<DecompositionTriple> out(plan.nodes.size());
  for (std::size_t i = 0; i < plan.nodes.size(); ++i) {
    const PlanNode& n = plan.nodes[i];
    ExposureTriplet t;
    if (n.parent < 0) {
      t = triplet;
    } else {
      const DecompositionTriple& p = out[n.parent];
      t.long_exposure = n.index % 2 == 0 ? p.first_half : p.second_half;
      t.short_pre = n.left_flank < 0 ? triplet.short_pre : out[n.left_flank].mid_sharp;
      t.short_post = n.right_flank < 0 ? triplet.short_post : out[n.right_flank].mid_sharp;
      t.short_is_noisy = {n.left_flank < 0 && triplet.short_is_noisy[0],
                          n.right_flank < 0 && triplet.short_is_noisy[1]};
      // Nominal length only sets n1/n2 of the result; fall back to a
      // finer virtual grid when the discrete map is too coarse.
      const int nl = n.n_long.value_or(0);
      t.n_frames_long = nl >= 3 && nl % 2 == 1 ? nl : 2 * (n.end - n.begin) - 1;
    }
    out[i] = decompose(t, n.noisy_inputs);
  }
  PhotoSequence seq;
  seq.plan = plan;
  for (int i : plan.time_order()) {
    seq.frames.push_back(out[i].mid_sharp);
    seq.timepoints.push_back(plan.midpoint(plan.nodes[i]));
  }
  return seq;
}

PhotoSequence sequence(const ExposureTriplet& triplet, const Weights& weights,
                       const RecursionPlan& plan) {
  DecomposerNet(weights.config).check_weights(weights);
  PhotoSequence seq = sequence(
      triplet, [&](const ExposureTriplet& t, int) { return forward(t, weights); }, plan);
  seq.weight_fingerprints.fill(weights_fingerprint_hex(weights));
  return seq;
}

PhotoSequence sequence(const ExposureTriplet& triplet, const std::array<const Weights*, 3>& models,
                       const RecursionPlan& plan) {
  std::array<bool, 3> used{};
  for (const auto& n : plan.nodes) used[n.noisy_inputs] = true;
  for (int k = 0; k < 3; ++k) {
    if (used[k] && !models[k]) {
      throw ConfigError("plan needs a model for " + std::to_string(k) +
                        " noisy inputs but none was given");
    }
    if (models[k]) DecomposerNet(models[k]->config).check_weights(*models[k]);
  }
  PhotoSequence seq = sequence(
      triplet, [&](const ExposureTriplet& t, int noisy) { return forward(t, *models[noisy]); },
      plan);
  for (int k = 0; k < 3; ++k) {
    if (models[k]) seq.weight_fingerprints[k] = weights_fingerprint_hex(*models[k]);
  }
  return seq;
}

void check_alternation(const std::vector<Capture>& captures) {
  if (captures.size() < 3) {
    throw ArgumentError("capture stream needs at least short, long, short; got " +
                        std::to_string(captures.size()) + " capture(s)");
  }
  for (std::size_t i = 0; i < captures.size(); ++i) {
    const ExposureKind want = i % 2 == 0 ? ExposureKind::Short : ExposureKind::Long;
    if (captures[i].kind != want) {
      throw ArgumentError("capture " + std::to_string(i + 1) + " should be a " +
                          (want == ExposureKind::Short ? "short" : "long") +
                          " exposure; captures must alternate S,L,S,...,L,S");
    }
  }
  if (captures.size() % 2 == 0) {
    throw ArgumentError("capture stream ends with a long exposure that has no flanking short");
  }
}

std::vector<PhotoSequence> sequence_stream(const std::vector<Capture>& captures,
                                           const DecomposeFn& decompose, int levels) {
  check_alternation(captures);
  const RecursionPlan plan = build_plan(levels);
  std::vector<PhotoSequence> out;
  for (std::size_t i = 1; i + 1 < captures.size(); i += 2) {
    ExposureTriplet t;
    t.short_pre = captures[i - 1].image;
    t.long_exposure = captures[i].image;
    t.short_post = captures[i + 1].image;
    t.n_frames_long = (1 << (levels + 1)) - 1;
    t.short_is_noisy = {true, true};
    out.push_back(sequence(t, decompose, plan));
  }
  return out;
}

std::vector<Capture> load_capture_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("capture directory '" + dir.string() + "' not found");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Capture> out;
  for (const auto& f : files) {
    std::string stem = f.stem().string();
    std::transform(stem.begin(), stem.end(), stem.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    const bool is_short = stem.find("short") != std::string::npos;
    const bool is_long = stem.find("long") != std::string::npos;
    if (is_short == is_long) {
      throw DataError("capture '" + f.string() + "' must name exactly one of 'short' or 'long'");
    }
    out.push_back({read_png(f), is_short ? ExposureKind::Short : ExposureKind::Long});
  }
  return out;
}

std::vector<fs::path> write_sequence_frames(const fs::path& dir, const PhotoSequence& seq,
                                            int first_index) {
  fs::create_directories(dir);
  std::vector<fs::path> paths;
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%05d.png", first_index + static_cast<int>(i));
    paths.push_back(dir / name);
    write_png(paths.back(), seq.frames[i], 16);
  }
  return paths;
}

}  // namespace photoseq

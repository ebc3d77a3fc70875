#include "photoseq/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>

#include "photoseq/errors.hpp"

namespace photoseq {

namespace fs = std::filesystem;

double psnr(const Image& a, const Image& b) {
  require_same_shape(a, b, "psnr");
  if (a.empty()) throw ArgumentError("psnr: empty images");
  const auto av = a.values();
  const auto bv = b.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(av.size());
  if (mse <= 0.0) return kPsnrSentinel;
  return std::min(kPsnrSentinel, 10.0 * std::log10(1.0 / mse));
}

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Runs fn(i) for i in [0, count) on up to `workers` threads.
template <typename Fn>
void parallel_for(std::size_t count, int workers, Fn fn) {
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::future<void>> jobs;
  const auto w = static_cast<std::size_t>(workers);
  for (std::size_t t = 0; t < std::min(w, count); ++t) {
    jobs.push_back(std::async(std::launch::async, [&, t] {
      for (std::size_t i = t; i < count; i += w) fn(i);
    }));
  }
  for (auto& j : jobs) j.get();
}

void collect_mids(int lo, int hi, int depth, int levels, std::vector<int>& out) {
  const int count = hi - lo + 1;
  if (count < 1 || count % 2 == 0) {
    throw ArgumentError("blur length does not split evenly: a sub-interval of " +
                        std::to_string(count) + " frames has no middle frame");
  }
  const int mid = (lo + hi) / 2;
  if (depth < levels) collect_mids(lo, mid - 1, depth + 1, levels, out);
  out.push_back(mid);
  if (depth < levels) collect_mids(mid + 1, hi, depth + 1, levels, out);
}

}  // namespace

std::vector<int> discrete_frames(int n, int levels) {
  if (levels < 1) throw ArgumentError("levels must be >= 1");
  std::vector<int> out;
  collect_mids(1, n, 1, levels, out);
  return out;
}

std::vector<EvalExample> build_eval_examples(const std::vector<FrameClip>& corpus, int n,
                                             const EvalSetup& setup) {
  if (n < 3 || n % 2 == 0) throw ArgumentError("eval blur length must be odd and >= 3");
  if (setup.examples_per_clip < 1) throw ArgumentError("examples_per_clip must be >= 1");
  setup.noise.validate();
  std::vector<EvalExample> out;
  for (std::size_t ci = 0; ci < corpus.size(); ++ci) {
    const FrameClip& clip = corpus[ci];
    const int frames = static_cast<int>(clip.size());
    if (frames < n + 2) {
      throw RangeError("clip '" + clip.source_id + "' has " + std::to_string(frames) +
                       " frames; N = " + std::to_string(n) + " needs " + std::to_string(n + 2));
    }
    int side = setup.crop_size;
    const int fit = std::min(clip.height(), clip.width()) / NetworkConfig::kSpatialMultiple *
                    NetworkConfig::kSpatialMultiple;
    if (side == 0) side = fit;
    if (side < NetworkConfig::kSpatialMultiple || side > std::min(clip.height(), clip.width())) {
      throw RangeError("clip '" + clip.source_id + "' is too small for a " +
                       std::to_string(side) + " px evaluation crop");
    }
    const int row = (clip.height() - side) / 2;
    const int col = (clip.width() - side) / 2;
    // Valid starts are 1 .. frames-n-1; spread the examples evenly.
    const int span = frames - n - 1;
    for (int k = 0; k < setup.examples_per_clip; ++k) {
      const int start = 1 + (span * (2 * k + 1)) / (2 * setup.examples_per_clip);
      FrameClip window;
      window.source_id = clip.source_id;
      for (int f = start - 1; f <= start + n; ++f) window.frames.push_back(clip.frames[f].crop(row, col, side, side));
      auto [triplet, target] = make_triplet(window, 1, n);
      const std::uint64_t s = mix(setup.seed, mix(ci, static_cast<std::uint64_t>(k)));
      triplet.short_pre = add_noise(triplet.short_pre, setup.noise, mix(s, 1));
      triplet.short_post = add_noise(triplet.short_post, setup.noise, mix(s, 2));
      triplet.short_is_noisy = {true, true};
      EvalExample ex;
      ex.triplet = std::move(triplet);
      ex.truth.assign(window.frames.begin() + 1, window.frames.begin() + 1 + n);
      ex.source_id = clip.source_id;
      ex.window_start = start - 1;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

SequencePredictor network_predictor(const Weights& weights) {
  return [&weights](const EvalExample& ex, const RecursionPlan& plan) {
    return sequence(ex.triplet, weights, plan);
  };
}

SequencePredictor oracle_predictor() {
  return [](const EvalExample& ex, const RecursionPlan& plan) {
    PhotoSequence seq;
    seq.plan = plan;
    seq.timepoints = plan.timepoints();
    for (int f : discrete_frames(static_cast<int>(ex.truth.size()), plan.levels)) {
      seq.frames.push_back(ex.truth[f - 1]);
    }
    seq.weight_fingerprints.fill("ground-truth");
    return seq;
  };
}

std::vector<TimepointRow> eval_timepoints(const SequencePredictor& predictor,
                                          const std::vector<FrameClip>& corpus,
                                          const EvalSetup& setup, int n) {
  constexpr int kLevels = 2;
  const std::vector<int> frames = discrete_frames(n, kLevels);
  const RecursionPlan plan = build_plan(kLevels);
  const auto examples = build_eval_examples(corpus, n, setup);
  if (examples.empty()) throw RangeError("evaluation corpus is empty");
  const std::vector<double> times = plan.timepoints();

  std::vector<std::vector<double>> scores(examples.size());
  parallel_for(examples.size(), setup.workers, [&](std::size_t i) {
    const PhotoSequence seq = predictor(examples[i], plan);
    if (seq.frames.size() != frames.size()) throw ArgumentError("predictor returned wrong frame count");
    for (std::size_t j = 0; j < frames.size(); ++j) {
      scores[i].push_back(psnr(seq.frames[j], examples[i].truth[frames[j] - 1]));
    }
  });

  std::vector<TimepointRow> rows;
  for (std::size_t j = 0; j < frames.size(); ++j) {
    TimepointRow r{times[j], frames[j], 0.0, {}};
    for (const auto& s : scores) r.per_example.push_back(s[j]);
    for (double v : r.per_example) r.mean_psnr += v;
    r.mean_psnr /= static_cast<double>(r.per_example.size());
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<SweepRow> eval_blur_sweep(const SequencePredictor& predictor,
                                      const std::vector<FrameClip>& corpus, const EvalSetup& setup,
                                      const std::vector<int>& lengths) {
  const RecursionPlan plan = build_plan(1);
  std::vector<SweepRow> rows;
  for (int n : lengths) {
    const auto examples = build_eval_examples(corpus, n, setup);
    if (examples.empty()) throw RangeError("evaluation corpus is empty");
    const int mid = discrete_frames(n, 1).front();
    std::vector<double> pred(examples.size()), base(examples.size());
    parallel_for(examples.size(), setup.workers, [&](std::size_t i) {
      const PhotoSequence seq = predictor(examples[i], plan);
      if (seq.frames.size() != 1) throw ArgumentError("predictor returned wrong frame count");
      pred[i] = psnr(seq.frames[0], examples[i].truth[mid - 1]);
      base[i] = psnr(examples[i].triplet.long_exposure, examples[i].truth[mid - 1]);
    });
    SweepRow r{n, 0.0, 0.0, pred};
    for (std::size_t i = 0; i < pred.size(); ++i) {
      r.mean_psnr += pred[i];
      r.blurred_input_psnr += base[i];
    }
    r.mean_psnr /= static_cast<double>(pred.size());
    r.blurred_input_psnr /= static_cast<double>(pred.size());
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<double> relative_psnr(const PhotoSequence& a, const PhotoSequence& b) {
  if (a.frames.size() != b.frames.size() || a.timepoints != b.timepoints) {
    throw ArgumentError("relative_psnr: sequences come from different plans");
  }
  std::vector<double> out;
  for (std::size_t i = 0; i < a.frames.size(); ++i) out.push_back(psnr(a.frames[i], b.frames[i]));
  return out;
}

std::pair<Image, Image> slice_xt_yt(std::span<const Image> frames, int row, int col) {
  if (frames.empty()) throw ArgumentError("slice_xt_yt: no frames");
  const Image& first = frames.front();
  if (row < 0 || row >= first.height() || col < 0 || col >= first.width()) {
    throw RangeError("slice_xt_yt: row/col outside the frame");
  }
  const int t = static_cast<int>(frames.size());
  Image xt(t, first.width()), yt(first.height(), t);
  for (int k = 0; k < t; ++k) {
    require_same_shape(frames[k], first, "slice_xt_yt");
    for (int x = 0; x < first.width(); ++x)
      for (int c = 0; c < Image::kChannels; ++c) xt.at(k, x, c) = frames[k].at(row, x, c);
    for (int y = 0; y < first.height(); ++y)
      for (int c = 0; c < Image::kChannels; ++c) yt.at(y, k, c) = frames[k].at(y, col, c);
  }
  return {xt, yt};
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

void write_report(const fs::path& dir, const EvalReport& r) {
  fs::create_directories(dir);
  std::ofstream csv(dir / "report.csv");
  if (!csv) throw DataError("cannot write report in '" + dir.string() + "'");
  csv << "section,key,frame,psnr_db,blurred_input_psnr_db\n";
  for (const auto& row : r.timepoints) {
    csv << "timepoint," << row.t << ',' << row.frame << ',' << num(row.mean_psnr) << ",\n";
  }
  for (const auto& row : r.sweep) {
    csv << "blur_sweep," << row.n << ',' << (row.n + 1) / 2 << ',' << num(row.mean_psnr) << ','
        << num(row.blurred_input_psnr) << '\n';
  }
  for (const auto& [label, values] : r.relative) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      csv << "relative," << label << ',' << i + 1 << ',' << num(values[i]) << ",\n";
    }
  }

  std::ofstream txt(dir / "summary.txt");
  if (!txt) throw DataError("cannot write summary in '" + dir.string() + "'");
  txt << "protocol: " << r.protocol << '\n'
      << "weights: " << r.weights_fingerprint << '\n'
      << "dataset: " << r.dataset_id << '\n'
      << "N: " << r.n << "  levels: " << r.levels << "  examples: " << r.examples << '\n'
      << "PSNR in dB over all three channels of [0,1] images; identical images report "
      << kPsnrSentinel << " dB.\n"
      << "Means are taken over examples, separately for each timepoint or blur length.\n\n";
  if (!r.timepoints.empty()) {
    txt << "timepoint  frame  PSNR\n";
    for (const auto& row : r.timepoints) {
      char line[80];
      std::snprintf(line, sizeof(line), "%9.4f  %5d  %7.3f\n", row.t, row.frame, row.mean_psnr);
      txt << line;
    }
  }
  if (!r.sweep.empty()) {
    txt << "N   mid-frame PSNR  blurred-input PSNR\n";
    for (const auto& row : r.sweep) {
      char line[80];
      std::snprintf(line, sizeof(line), "%-3d %14.3f  %18.3f\n", row.n, row.mean_psnr,
                    row.blurred_input_psnr);
      txt << line;
    }
  }
  for (const auto& [label, values] : r.relative) {
    txt << "relative PSNR (" << label << "):";
    for (double v : values) txt << ' ' << num(v);
    txt << '\n';
  }
}

}  // namespace photoseq

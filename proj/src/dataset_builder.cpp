#include "photoseq/dataset_builder.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include <json.hpp>

#include "photoseq/errors.hpp"

namespace photoseq {

namespace fs = std::filesystem;

const char* to_string(NoisyShorts mode) {
  switch (mode) {
    case NoisyShorts::Both:
      return "both";
    case NoisyShorts::One:
      return "one";
    case NoisyShorts::None:
      return "none";
  }
  return "both";
}

NoisyShorts noisy_shorts_from_string(const std::string& s) {
  if (s == "both") return NoisyShorts::Both;
  if (s == "one") return NoisyShorts::One;
  if (s == "none") return NoisyShorts::None;
  throw ConfigError("noisy_shorts must be one of both|one|none, got '" + s + "'");
}

void BuilderConfig::validate() const {
  if (n_min < 3 || n_min % 2 == 0 || n_max % 2 == 0 || n_min > n_max) {
    throw ConfigError("builder: n_min/n_max must be odd with 3 <= n_min <= n_max");
  }
  if (crop_size < 1) throw ConfigError("builder: crop_size must be positive");
  if (!(variance_reject_threshold >= 0.0)) {
    throw ConfigError("builder: variance_reject_threshold must be non-negative");
  }
  if (blur_buckets.empty()) throw ConfigError("builder: at least one blur bucket is required");
  for (std::size_t i = 0; i < blur_buckets.size(); ++i) {
    const auto& b = blur_buckets[i];
    if (b.n_frames % 2 == 0 || b.n_frames < n_min || b.n_frames > n_max) {
      throw ConfigError("builder: bucket N=" + std::to_string(b.n_frames) +
                        " must be odd and within [n_min, n_max]");
    }
    if (i > 0 && (b.variance_cutoff < blur_buckets[i - 1].variance_cutoff ||
                  b.n_frames < blur_buckets[i - 1].n_frames)) {
      throw ConfigError("builder: blur buckets must be ascending in cutoff and N");
    }
  }
  if (max_attempts < 1) throw ConfigError("builder: max_attempts must be positive");
}

double temporal_luma_variance(std::span<const Image> window) {
  if (window.empty()) throw ArgumentError("temporal variance of an empty window");
  std::vector<std::vector<double>> y;
  y.reserve(window.size());
  for (const auto& f : window) {
    if (!f.same_shape(window.front())) throw ArgumentError("window frames differ in size");
    y.push_back(luma(f));
  }
  const std::size_t pixels = y.front().size();
  const double t = static_cast<double>(window.size());
  double total = 0.0;
  for (std::size_t p = 0; p < pixels; ++p) {
    double s = 0, ss = 0;
    for (const auto& frame : y) s += frame[p];
    const double mean = s / t;
    for (const auto& frame : y) ss += (frame[p] - mean) * (frame[p] - mean);
    total += ss / t;
  }
  return total / static_cast<double>(pixels);
}

std::optional<int> select_blur_length(std::span<const Image> window, const BuilderConfig& cfg) {
  if (static_cast<int>(window.size()) < cfg.window_length()) {
    throw RangeError("select_blur_length: window of " + std::to_string(window.size()) +
                     " frames is shorter than n_max + 2 = " + std::to_string(cfg.window_length()));
  }
  const double v = temporal_luma_variance(window);
  if (v < cfg.variance_reject_threshold) return std::nullopt;
  int n = cfg.blur_buckets.front().n_frames;
  for (const auto& b : cfg.blur_buckets) {
    if (v >= b.variance_cutoff) n = b.n_frames;
  }
  return n;
}

std::optional<TrainingSample> build_sample(const FrameClip& clip, std::uint64_t seed,
                                           const BuilderConfig& cfg, const NoiseParams& noise) {
  cfg.validate();
  clip.validate();
  const int window = cfg.window_length();
  if (static_cast<int>(clip.size()) < window) {
    throw RangeError("build_sample: clip '" + clip.source_id + "' has " +
                     std::to_string(clip.size()) + " frames, need " + std::to_string(window));
  }
  if (clip.height() < cfg.crop_size || clip.width() < cfg.crop_size) {
    throw RangeError("build_sample: clip '" + clip.source_id + "' is smaller than the crop size");
  }
  std::mt19937_64 rng(seed);
  auto uniform_int = [&rng](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };
  const int w0 = uniform_int(0, static_cast<int>(clip.size()) - window);
  const int row = uniform_int(0, clip.height() - cfg.crop_size);
  const int col = uniform_int(0, clip.width() - cfg.crop_size);
  const std::uint64_t noise_seed_pre = rng();
  const std::uint64_t noise_seed_post = rng();
  const bool noisy_pre_if_one = (rng() & 1u) == 0;

  FrameClip crop;
  crop.source_id = clip.source_id;
  crop.nominal_fps = clip.nominal_fps;
  crop.frames.reserve(window);
  for (int i = 0; i < window; ++i) {
    crop.frames.push_back(clip.frames[w0 + i].crop(row, col, cfg.crop_size, cfg.crop_size));
  }
  const auto n = select_blur_length(crop.frames, cfg);
  if (!n) return std::nullopt;

  // Center the N+2 frames used by the triplet inside the variance window.
  const int start = 1 + (cfg.n_max - *n) / 2;
  auto [triplet, target] = make_triplet(crop, start, *n);

  bool noisy_pre = false, noisy_post = false;
  switch (cfg.noisy_shorts) {
    case NoisyShorts::Both:
      noisy_pre = noisy_post = true;
      break;
    case NoisyShorts::One:
      noisy_pre = noisy_pre_if_one;
      noisy_post = !noisy_pre_if_one;
      break;
    case NoisyShorts::None:
      break;
  }
  if (noisy_pre) triplet.short_pre = add_noise(triplet.short_pre, noise, noise_seed_pre);
  if (noisy_post) triplet.short_post = add_noise(triplet.short_post, noise, noise_seed_post);
  triplet.short_is_noisy = {noisy_pre, noisy_post};

  TrainingSample s;
  s.triplet = std::move(triplet);
  s.target = std::move(target);
  s.crop_row = row;
  s.crop_col = col;
  s.window_start = w0;
  s.source_id = clip.source_id;
  return s;
}

namespace {

template <typename F>
TrainingSample map_images(const TrainingSample& s, F&& f) {
  TrainingSample out = s;
  out.triplet.short_pre = f(s.triplet.short_pre);
  out.triplet.long_exposure = f(s.triplet.long_exposure);
  out.triplet.short_post = f(s.triplet.short_post);
  out.target.first_half = f(s.target.first_half);
  out.target.mid_sharp = f(s.target.mid_sharp);
  out.target.second_half = f(s.target.second_half);
  return out;
}

}  // namespace

TrainingSample flip_horizontal(const TrainingSample& s) {
  return map_images(s, [](const Image& img) { return img.flipped_horizontal(); });
}

TrainingSample rotate90(const TrainingSample& s, bool counter_clockwise) {
  return map_images(s, [=](const Image& img) { return img.rotated90(counter_clockwise); });
}

TrainingSample temporal_flip(const TrainingSample& s) {
  TrainingSample out = s;
  std::swap(out.triplet.short_pre, out.triplet.short_post);
  std::swap(out.triplet.short_is_noisy[0], out.triplet.short_is_noisy[1]);
  std::swap(out.target.first_half, out.target.second_half);
  std::swap(out.target.n1, out.target.n2);
  return out;
}

TrainingSample augment(const TrainingSample& s, std::uint64_t seed, const BuilderConfig& cfg) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  // Draw every coin regardless of flags so enabling one flag does not
  // reshuffle the others.
  const bool do_flip = coin(rng);
  const bool do_rot = coin(rng);
  const bool rot_ccw = coin(rng);
  const bool do_time = coin(rng);
  TrainingSample out = s;
  if (cfg.h_flip && do_flip) out = flip_horizontal(out);
  if (cfg.rot90 && do_rot) out = rotate90(out, rot_ccw);
  if (cfg.temporal_flip && do_time) out = temporal_flip(out);
  return out;
}

SampleGenerator::SampleGenerator(std::vector<std::vector<FrameClip>> corpora, BuilderConfig cfg,
                                 NoiseParams noise, bool with_augmentation)
    : cfg_(std::move(cfg)), noise_(std::move(noise)), augment_(with_augmentation) {
  cfg_.validate();
  noise_.validate();
  corpora.erase(std::remove_if(corpora.begin(), corpora.end(),
                               [](const auto& c) { return c.empty(); }),
                corpora.end());
  if (corpora.empty()) throw DataError("sample generator: no clips in any corpus");
  corpora_ = std::make_shared<const std::vector<std::vector<FrameClip>>>(std::move(corpora));
}

TrainingSample SampleGenerator::generate(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  for (int attempt = 0; attempt < cfg_.max_attempts; ++attempt) {
    const auto& corpus =
        (*corpora_)[std::uniform_int_distribution<std::size_t>(0, corpora_->size() - 1)(rng)];
    const auto& clip =
        corpus[std::uniform_int_distribution<std::size_t>(0, corpus.size() - 1)(rng)];
    const std::uint64_t sample_seed = rng();
    const std::uint64_t augment_seed = rng();
    auto sample = build_sample(clip, sample_seed, cfg_, noise_);
    if (!sample) continue;
    return augment_ ? augment(*sample, augment_seed, cfg_) : std::move(*sample);
  }
  throw DataError("sample generator: " + std::to_string(cfg_.max_attempts) +
                  " consecutive crops were static; corpus has too little motion");
}

void calibrate_blur_buckets(BuilderConfig& cfg, std::span<const std::vector<FrameClip>> corpora,
                            int probes, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::vector<double> variances;
  std::vector<const FrameClip*> clips;
  for (const auto& corpus : corpora)
    for (const auto& c : corpus) clips.push_back(&c);
  if (clips.empty()) throw DataError("calibrate_blur_buckets: empty corpus");
  const int window = cfg.window_length();
  for (int i = 0; i < probes; ++i) {
    const FrameClip& clip =
        *clips[std::uniform_int_distribution<std::size_t>(0, clips.size() - 1)(rng)];
    if (static_cast<int>(clip.size()) < window || clip.height() < cfg.crop_size ||
        clip.width() < cfg.crop_size) {
      continue;
    }
    const int w0 = std::uniform_int_distribution<int>(0, static_cast<int>(clip.size()) - window)(rng);
    const int row = std::uniform_int_distribution<int>(0, clip.height() - cfg.crop_size)(rng);
    const int col = std::uniform_int_distribution<int>(0, clip.width() - cfg.crop_size)(rng);
    std::vector<Image> frames;
    for (int k = 0; k < window; ++k) {
      frames.push_back(clip.frames[w0 + k].crop(row, col, cfg.crop_size, cfg.crop_size));
    }
    const double v = temporal_luma_variance(frames);
    if (v >= cfg.variance_reject_threshold) variances.push_back(v);
  }
  if (variances.size() < cfg.blur_buckets.size()) {
    throw DataError("calibrate_blur_buckets: too few moving windows to form quantiles");
  }
  std::sort(variances.begin(), variances.end());
  const std::size_t k = cfg.blur_buckets.size();
  cfg.blur_buckets.front().variance_cutoff = cfg.variance_reject_threshold;
  for (std::size_t b = 1; b < k; ++b) {
    const std::size_t idx = b * variances.size() / k;
    cfg.blur_buckets[b].variance_cutoff =
        std::max(variances[idx], cfg.blur_buckets[b - 1].variance_cutoff);
  }
  cfg.validate();
}

std::vector<FrameClip> load_corpus(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("corpus directory '" + dir.string() + "' not found");
  std::vector<fs::path> clip_dirs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory()) clip_dirs.push_back(entry.path());
  }
  std::sort(clip_dirs.begin(), clip_dirs.end());
  if (clip_dirs.empty()) throw DataError("corpus directory '" + dir.string() + "' has no clips");
  std::vector<FrameClip> clips;
  for (const auto& d : clip_dirs) {
    clips.push_back(read_clip_dir(d));
    clips.back().source_id = dir.filename().string() + "/" + d.filename().string();
  }
  return clips;
}

namespace {

constexpr const char* kSampleImages[] = {"short_pre", "long",     "short_post",
                                         "first_half", "mid_sharp", "second_half"};

}  // namespace

void write_sample(const fs::path& dir, const TrainingSample& s) {
  fs::create_directories(dir);
  const Image* images[] = {&s.triplet.short_pre, &s.triplet.long_exposure, &s.triplet.short_post,
                           &s.target.first_half, &s.target.mid_sharp,       &s.target.second_half};
  for (int i = 0; i < 6; ++i) {
    write_png(dir / (std::string(kSampleImages[i]) + ".png"), *images[i], 16);
  }
  nlohmann::ordered_json meta;
  meta["n_frames"] = s.triplet.n_frames_long;
  meta["n1"] = s.target.n1;
  meta["n2"] = s.target.n2;
  meta["crop_row"] = s.crop_row;
  meta["crop_col"] = s.crop_col;
  meta["window_start"] = s.window_start;
  meta["source_id"] = s.source_id;
  meta["short_is_noisy"] = {s.triplet.short_is_noisy[0], s.triplet.short_is_noisy[1]};
  std::ofstream out(dir / "sample.json");
  if (!out) throw DataError("cannot write sample metadata in '" + dir.string() + "'");
  out << meta.dump(2) << "\n";
}

TrainingSample read_sample(const fs::path& dir) {
  std::ifstream in(dir / "sample.json");
  if (!in) throw DataError("sample directory '" + dir.string() + "' lacks sample.json");
  nlohmann::json meta;
  try {
    in >> meta;
    TrainingSample s;
    s.triplet.short_pre = read_png(dir / "short_pre.png");
    s.triplet.long_exposure = read_png(dir / "long.png");
    s.triplet.short_post = read_png(dir / "short_post.png");
    s.target.first_half = read_png(dir / "first_half.png");
    s.target.mid_sharp = read_png(dir / "mid_sharp.png");
    s.target.second_half = read_png(dir / "second_half.png");
    s.triplet.n_frames_long = meta.at("n_frames").get<int>();
    s.target.n1 = meta.at("n1").get<int>();
    s.target.n2 = meta.at("n2").get<int>();
    s.crop_row = meta.at("crop_row").get<int>();
    s.crop_col = meta.at("crop_col").get<int>();
    s.window_start = meta.at("window_start").get<int>();
    s.source_id = meta.at("source_id").get<std::string>();
    s.triplet.short_is_noisy = {meta.at("short_is_noisy")[0].get<bool>(),
                                meta.at("short_is_noisy")[1].get<bool>()};
    s.triplet.validate();
    s.target.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed sample metadata in '" + dir.string() + "': " + e.what());
  }
}

}  // namespace photoseq

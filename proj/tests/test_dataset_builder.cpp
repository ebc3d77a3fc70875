#include <doctest.h>

#include <set>

#include "photoseq/dataset_builder.hpp"
#include "photoseq/errors.hpp"
#include "photoseq/synthetic.hpp"
#include "test_util.hpp"

using namespace photoseq;

namespace {

const NoiseParams kNoise{2e-3, 1e-5, "test"};

BuilderConfig small_config() {
  BuilderConfig cfg;
  cfg.crop_size = 32;
  return cfg;
}

FrameClip moving_clip(std::uint64_t seed, double speed = 1.5) {
  SceneSpec spec;
  spec.height = 48;
  spec.width = 48;
  spec.max_speed = speed;
  spec.pan_speed = 0.5;
  return render_scene(spec, seed);
}

Image clean_short(const FrameClip& clip, const TrainingSample& s, const BuilderConfig& cfg, bool pre) {
  const int n = s.target.n_total();
  const int start = 1 + (cfg.n_max - n) / 2;
  const int frame = s.window_start + (pre ? start - 1 : start + n);
  return clip.frames[frame].crop(s.crop_row, s.crop_col, cfg.crop_size, cfg.crop_size);
}

}  // namespace

TEST_CASE("static windows are rejected") {
  const BuilderConfig cfg = small_config();
  std::vector<Image> window(cfg.window_length(), Image(8, 8, 0.4));
  CHECK_FALSE(select_blur_length(window, cfg).has_value());
  const FrameClip still = constant_clip(40, 40, 48, 0.3);
  CHECK_FALSE(build_sample(still, 1, cfg, kNoise).has_value());
}

TEST_CASE("blur length mapping endpoints") {
  BuilderConfig cfg = small_config();
  std::vector<Image> window;
  for (int i = 0; i < cfg.window_length(); ++i) window.push_back(Image(4, 4, i % 2 ? 0.2 : 0.0));
  const double v = temporal_luma_variance(window);
  CHECK(v > 0.0);

  cfg.variance_reject_threshold = v;
  cfg.blur_buckets = {{v, 11}, {v * 2, 17}, {v * 4, 23}, {v * 8, 31}, {v * 16, 39}};
  CHECK(select_blur_length(window, cfg) == 11);

  cfg.variance_reject_threshold = v / 100;
  cfg.blur_buckets = {{v / 100, 11}, {v / 50, 17}, {v / 20, 23}, {v / 10, 31}, {v / 2, 39}};
  CHECK(select_blur_length(window, cfg) == 39);

  std::vector<Image> short_window(cfg.window_length() - 1, Image(4, 4, 0.1));
  CHECK_THROWS_AS(select_blur_length(short_window, cfg), RangeError);
}

TEST_CASE("variance is measured on luma against an independent oracle") {
  std::vector<Image> frames;
  for (int i = 0; i < 5; ++i) frames.push_back(testutil::random_image(3, 3, 50 + i));
  double total = 0.0;
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) {
      std::vector<double> l;
      for (const Image& f : frames) {
        l.push_back(0.299 * f.at(y, x, 0) + 0.587 * f.at(y, x, 1) + 0.114 * f.at(y, x, 2));
      }
      double m = 0.0;
      for (double v : l) m += v / 5.0;
      for (double v : l) total += (v - m) * (v - m) / 5.0;
    }
  CHECK(temporal_luma_variance(frames) == doctest::Approx(total / 9.0).epsilon(1e-12));
}

TEST_CASE("build_sample is deterministic and satisfies the sum identity") {
  const BuilderConfig cfg = small_config();
  const FrameClip clip = moving_clip(3);
  int built = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = build_sample(clip, seed, cfg, kNoise);
    const auto b = build_sample(clip, seed, cfg, kNoise);
    REQUIRE(a.has_value() == b.has_value());
    if (!a) continue;
    ++built;
    CHECK(a->triplet.short_pre == b->triplet.short_pre);
    CHECK(a->target.mid_sharp == b->target.mid_sharp);
    CHECK(sum_identity_residual(a->triplet.long_exposure, a->target) <= 1e-6);
    CHECK(a->triplet.height() == cfg.crop_size);
    const int n = a->target.n_total();
    CHECK(n % 2 == 1);
    CHECK(n >= cfg.n_min);
    CHECK(n <= cfg.n_max);
    CHECK(a->triplet.short_is_noisy == std::array<bool, 2>{true, true});
    CHECK_FALSE(a->triplet.short_pre == clean_short(clip, *a, cfg, true));
  }
  CHECK(built > 10);
}

TEST_CASE("noisy-short gating") {
  BuilderConfig cfg = small_config();
  const FrameClip clip = moving_clip(4);
  cfg.noisy_shorts = NoisyShorts::None;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = build_sample(clip, seed, cfg, kNoise);
    if (!s) continue;
    CHECK(s->triplet.short_pre == clean_short(clip, *s, cfg, true));
    CHECK(s->triplet.short_post == clean_short(clip, *s, cfg, false));
    CHECK(s->triplet.short_is_noisy == std::array<bool, 2>{false, false});
  }
  cfg.noisy_shorts = NoisyShorts::One;
  std::set<bool> sides;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto s = build_sample(clip, seed, cfg, kNoise);
    if (!s) continue;
    const bool pre_clean = s->triplet.short_pre == clean_short(clip, *s, cfg, true);
    const bool post_clean = s->triplet.short_post == clean_short(clip, *s, cfg, false);
    CHECK(pre_clean != post_clean);
    CHECK(s->triplet.short_is_noisy[0] == !pre_clean);
    CHECK(s->triplet.short_is_noisy[1] == !post_clean);
    sides.insert(s->triplet.short_is_noisy[0]);
  }
  CHECK(sides.size() == 2);
}

TEST_CASE("augmentations") {
  const BuilderConfig cfg = small_config();
  const FrameClip clip = moving_clip(5);
  std::optional<TrainingSample> s;
  for (std::uint64_t seed = 0; !s; ++seed) s = build_sample(clip, seed, cfg, kNoise);

  const TrainingSample t = temporal_flip(*s);
  CHECK(t.triplet.short_pre == s->triplet.short_post);
  CHECK(t.target.first_half == s->target.second_half);
  CHECK(t.target.mid_sharp == s->target.mid_sharp);
  CHECK(t.triplet.long_exposure == s->triplet.long_exposure);
  CHECK(sum_identity_residual(t.triplet.long_exposure, t.target) <= 1e-6);
  const TrainingSample tt = temporal_flip(t);
  CHECK(tt.triplet.short_pre == s->triplet.short_pre);
  CHECK(tt.target.first_half == s->target.first_half);
  CHECK(tt.triplet.short_is_noisy == s->triplet.short_is_noisy);

  const TrainingSample h = flip_horizontal(flip_horizontal(*s));
  CHECK(h.triplet.long_exposure == s->triplet.long_exposure);
  CHECK(h.target.second_half == s->target.second_half);

  const TrainingSample r = rotate90(rotate90(*s, true), false);
  CHECK(r.target.mid_sharp == s->target.mid_sharp);

  BuilderConfig off = cfg;
  off.h_flip = off.rot90 = off.temporal_flip = false;
  const TrainingSample same = augment(*s, 77, off);
  CHECK(same.triplet.long_exposure == s->triplet.long_exposure);
  CHECK(same.target.first_half == s->target.first_half);

  for (std::uint64_t seed = 0; seed < 16; ++seed) {
    const TrainingSample a = augment(*s, seed, cfg);
    CHECK(sum_identity_residual(a.triplet.long_exposure, a.target) <= 1e-6);
  }
}

TEST_CASE("sample generator is stateless per seed") {
  const BuilderConfig cfg = small_config();
  SampleGenerator gen({{moving_clip(6), moving_clip(7)}, {moving_clip(8)}}, cfg, kNoise);
  const TrainingSample a = gen.generate(123);
  const TrainingSample b = gen.generate(123);
  CHECK(a.triplet.short_pre == b.triplet.short_pre);
  CHECK(a.target.mid_sharp == b.target.mid_sharp);
  std::set<int> ns;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const TrainingSample s = gen.generate(seed);
    ns.insert(s.target.n_total());
    CHECK(sum_identity_residual(s.triplet.long_exposure, s.target) <= 1e-6);
  }
  for (int n : ns) CHECK(n % 2 == 1);

  SampleGenerator still({{constant_clip(40, 40, 48, 0.5)}}, cfg, kNoise);
  CHECK_THROWS_AS(still.generate(1), DataError);
  CHECK_THROWS_AS(SampleGenerator({{}}, cfg, kNoise), DataError);
}

TEST_CASE("bucket calibration stays monotone") {
  BuilderConfig cfg = small_config();
  std::vector<std::vector<FrameClip>> corpora{{moving_clip(9, 0.5), moving_clip(10, 3.0)}};
  calibrate_blur_buckets(cfg, corpora, 200, 4);
  CHECK(cfg.blur_buckets.front().variance_cutoff == cfg.variance_reject_threshold);
  for (std::size_t i = 1; i < cfg.blur_buckets.size(); ++i) {
    CHECK(cfg.blur_buckets[i].variance_cutoff >= cfg.blur_buckets[i - 1].variance_cutoff);
  }
  CHECK(cfg.blur_buckets.back().n_frames == 39);
}

TEST_CASE("config validation") {
  BuilderConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.n_min = 12;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = BuilderConfig{};
  cfg.blur_buckets = {{1e-3, 17}, {1e-4, 11}};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = BuilderConfig{};
  cfg.blur_buckets.push_back({1.0, 41});
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK(noisy_shorts_from_string("one") == NoisyShorts::One);
  CHECK_THROWS_AS(noisy_shorts_from_string("two"), ConfigError);
}

TEST_CASE("sample cache round trip within 16-bit tolerance") {
  const BuilderConfig cfg = small_config();
  const FrameClip clip = moving_clip(11);
  std::optional<TrainingSample> s;
  for (std::uint64_t seed = 0; !s; ++seed) s = build_sample(clip, seed, cfg, kNoise);
  testutil::TempDir dir("cache");
  write_sample(dir / "s0", *s);
  const TrainingSample back = read_sample(dir / "s0");
  CHECK(back.target.n1 == s->target.n1);
  CHECK(back.triplet.n_frames_long == s->triplet.n_frames_long);
  CHECK(back.triplet.short_is_noisy == s->triplet.short_is_noisy);
  CHECK(back.source_id == s->source_id);
  CHECK(sum_identity_residual(back.triplet.long_exposure, back.target) <= kCachedSumTolerance);
  CHECK_THROWS_AS(read_sample(dir / "nope"), DataError);
}

TEST_CASE("corpus loading") {
  testutil::TempDir dir("corpus");
  FrameClip clip;
  for (int i = 0; i < 3; ++i) clip.frames.push_back(Image(4, 4, i * 0.1));
  write_clip_dir(dir / "b_clip", clip);
  write_clip_dir(dir / "a_clip", clip);
  const auto clips = load_corpus(dir.path());
  REQUIRE(clips.size() == 2);
  CHECK(clips[0].source_id.find("a_clip") != std::string::npos);
  CHECK_THROWS_AS(load_corpus(dir / "missing"), DataError);
}

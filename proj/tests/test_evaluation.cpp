#include <doctest.h>

#include <cmath>
#include <fstream>

#include "photoseq/errors.hpp"
#include "photoseq/evaluation.hpp"
#include "photoseq/synthetic.hpp"
#include "test_util.hpp"

using namespace photoseq;

namespace {

std::vector<FrameClip> small_corpus(int frames = 24) {
  SceneSpec spec;
  spec.height = spec.width = 32;
  spec.frames = frames;
  spec.pan_speed = 0.5;
  return {render_scene(spec, 1), render_scene(spec, 2)};
}

EvalSetup small_setup() {
  EvalSetup s;
  s.noise = NoiseParams{2e-3, 1e-5, "eval"};
  s.seed = 3;
  s.examples_per_clip = 2;
  return s;
}

Image plus_noise(const Image& img, double sigma, std::uint64_t seed) {
  return add_noise(img, NoiseParams{0.0, sigma * sigma, "g"}, seed);
}

}  // namespace

TEST_CASE("psnr definition") {
  const Image a = testutil::random_image(8, 8, 1);
  CHECK(psnr(a, a) == kPsnrSentinel);

  Image b = a;
  for (double& v : b.values()) v += 0.1;  // MSE 0.01
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-9));

  const Image c = testutil::random_image(8, 8, 2);
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) se += std::pow(a.values()[i] - c.values()[i], 2);
  CHECK(psnr(a, c) == doctest::Approx(10.0 * std::log10(a.size() / se)).epsilon(1e-12));
  CHECK(psnr(a, c) == psnr(c, a));
  CHECK_THROWS_AS(psnr(a, Image(4, 4)), ShapeError);
}

TEST_CASE("psnr falls as noise grows") {
  const Image clean(64, 64, 0.5);
  double previous = kPsnrSentinel;
  for (double sigma : {0.01, 0.03, 0.1}) {
    const double p = psnr(clean, plus_noise(clean, sigma, 7));
    CHECK(p < previous);
    previous = p;
  }
}

TEST_CASE("discrete frame map") {
  CHECK(discrete_frames(11, 2) == std::vector<int>{3, 6, 9});
  CHECK(discrete_frames(19, 1) == std::vector<int>{10});
  CHECK(discrete_frames(15, 4).size() == 15);
  CHECK(discrete_frames(7, 3) == std::vector<int>{1, 2, 3, 4, 5, 6, 7});
  CHECK_THROWS_AS(discrete_frames(9, 2), ArgumentError);
}

TEST_CASE("evaluation examples") {
  const auto corpus = small_corpus();
  const auto ex = build_eval_examples(corpus, 11, small_setup());
  REQUIRE(ex.size() == 4);
  for (const auto& e : ex) {
    CHECK(e.truth.size() == 11);
    CHECK(e.triplet.n_frames_long == 11);
    CHECK(e.triplet.height() == 32);
    CHECK(e.triplet.short_is_noisy == std::array<bool, 2>{true, true});
    CHECK(psnr(average_frames(e.truth), e.triplet.long_exposure) == kPsnrSentinel);
  }
  CHECK(ex[0].window_start != ex[1].window_start);
  CHECK_THROWS_AS(build_eval_examples(small_corpus(12), 11, small_setup()), RangeError);
}

TEST_CASE("ground-truth predictions hit the sentinel") {
  const auto corpus = small_corpus();
  const auto rows = eval_timepoints(oracle_predictor(), corpus, small_setup());
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].t == 0.25);
  CHECK(rows[1].frame == 6);
  for (const auto& r : rows) CHECK(r.mean_psnr == kPsnrSentinel);

  const auto sweep = eval_blur_sweep(oracle_predictor(), corpus, small_setup());
  REQUIRE(sweep.size() == 4);
  CHECK(sweep[0].n == 9);
  CHECK(sweep[3].n == 19);
  for (const auto& r : sweep) {
    CHECK(r.mean_psnr == kPsnrSentinel);
    CHECK(r.blurred_input_psnr < kPsnrSentinel);
  }
}

TEST_CASE("network evaluation is finite and deterministic") {
  const auto corpus = small_corpus();
  const Weights w = init_weights(NetworkConfig::scaled(16), 4);
  EvalSetup setup = small_setup();
  setup.workers = 2;
  const auto a = eval_timepoints(network_predictor(w), corpus, setup);
  const auto b = eval_timepoints(network_predictor(w), corpus, setup);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::isfinite(a[i].mean_psnr));
    CHECK(a[i].per_example == b[i].per_example);
  }
  for (const auto& r : eval_blur_sweep(network_predictor(w), corpus, setup)) CHECK(std::isfinite(r.mean_psnr));
}

TEST_CASE("relative psnr") {
  const NetworkConfig cfg = NetworkConfig::scaled(16);
  const Weights w1 = init_weights(cfg, 1), w2 = init_weights(cfg, 2);
  const ExposureTriplet t{testutil::random_image(16, 16, 1), testutil::random_image(16, 16, 2),
                          testutil::random_image(16, 16, 3), 11, {true, true}};
  const auto plan = build_plan(2);
  const PhotoSequence a = sequence(t, w1, plan);
  const PhotoSequence b = sequence(t, std::array<const Weights*, 3>{&w2, &w1, &w2}, plan);
  const auto ab = relative_psnr(a, b);
  REQUIRE(ab.size() == 3);
  CHECK(ab == relative_psnr(b, a));
  for (double v : ab) CHECK(std::isfinite(v));
  for (double v : relative_psnr(a, a)) CHECK(v == kPsnrSentinel);
  CHECK_THROWS_AS(relative_psnr(a, sequence(t, w1, build_plan(1))), ArgumentError);
}

TEST_CASE("xt and yt slices") {
  std::vector<Image> frames;
  for (int i = 0; i < 5; ++i) frames.push_back(testutil::random_image(6, 8, 10 + i));
  const auto [xt, yt] = slice_xt_yt(frames, 2, 3);
  CHECK(xt.height() == 5);
  CHECK(xt.width() == 8);
  CHECK(yt.height() == 6);
  CHECK(yt.width() == 5);
  for (int t = 0; t < 5; ++t) {
    for (int x = 0; x < 8; ++x) CHECK(xt.at(t, x, 1) == frames[t].at(2, x, 1));
    for (int y = 0; y < 6; ++y) CHECK(yt.at(y, t, 2) == frames[t].at(y, 3, 2));
  }

  const std::vector<Image> one{frames[0]};
  CHECK(slice_xt_yt(one, 0, 0).first.height() == 1);

  const std::vector<Image> still(4, frames[0]);
  const Image s = slice_xt_yt(still, 1, 1).first;
  for (int t = 1; t < 4; ++t)
    for (int x = 0; x < 8; ++x) CHECK(s.at(t, x, 0) == s.at(0, x, 0));

  CHECK_THROWS_AS(slice_xt_yt(frames, 6, 0), RangeError);
  CHECK_THROWS_AS(slice_xt_yt(std::vector<Image>{}, 0, 0), ArgumentError);
}

TEST_CASE("report files") {
  testutil::TempDir dir("report");
  EvalReport r;
  r.protocol = "blur-sweep";
  r.sweep = {{9, 30.0, 25.0, {30.0}}, {11, 29.0, 24.0, {29.0}}};
  r.relative = {{"single-vs-three", {40.0, 99.0, 41.0}}};
  write_report(dir.path(), r);
  std::ifstream csv(dir / "report.csv");
  std::string line;
  int lines = 0;
  while (std::getline(csv, line)) ++lines;
  CHECK(lines == 1 + 2 + 3);
  CHECK(std::filesystem::exists(dir / "summary.txt"));
}

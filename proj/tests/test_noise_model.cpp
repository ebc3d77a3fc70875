#include <doctest.h>

#include <cmath>
#include <fstream>

#include "photoseq/errors.hpp"
#include "photoseq/noise_model.hpp"
#include "test_util.hpp"

using namespace photoseq;

namespace {

struct Moments {
  double mean = 0.0;
  double var = 0.0;
};

Moments field_moments(double intensity, const NoiseParams& p, std::uint64_t seed, int side = 600) {
  // 600 x 600 x 3 > 1e6 draws.
  const Image field = noise_field(Image(side, side, intensity), p, seed);
  double s = 0.0, ss = 0.0;
  for (double v : field.values()) {
    s += v;
    ss += v * v;
  }
  const double n = static_cast<double>(field.size());
  return {s / n, ss / n - (s / n) * (s / n)};
}

std::vector<FrameClip> static_bursts(const NoiseParams& p, const std::vector<double>& levels, int frames,
                                     int side, std::uint64_t seed) {
  std::vector<FrameClip> bursts;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    FrameClip clip;
    clip.source_id = "level" + std::to_string(l);
    const Image clean(side, side, levels[l]);
    for (int f = 0; f < frames; ++f) {
      Image noisy = noise_field(clean, p, seed + l * 1000 + f);
      for (std::size_t i = 0; i < noisy.size(); ++i) noisy.values()[i] += levels[l];
      clip.frames.push_back(noisy);
    }
    bursts.push_back(std::move(clip));
  }
  return bursts;
}

}  // namespace

TEST_CASE("zero parameters leave the image untouched") {
  const Image img = testutil::random_image(8, 8, 1);
  CHECK(add_noise(img, NoiseParams{0.0, 0.0, "off"}, 5) == img);
}

TEST_CASE("negative parameters are rejected") {
  const Image img(2, 2, 0.5);
  CHECK_THROWS_AS(add_noise(img, NoiseParams{-1e-3, 0.0, "x"}, 1), ArgumentError);
  CHECK_THROWS_AS(add_noise(img, NoiseParams{0.0, -1e-3, "x"}, 1), ArgumentError);
}

TEST_CASE("Monte-Carlo variance at one half") {
  const NoiseParams p{0.01, 0.001, "mc"};
  const Moments m = field_moments(0.5, p, 42);
  CHECK(std::abs(m.var - 0.006) / 0.006 < 0.02);
  // Mean of ~1e6 draws has standard error sqrt(0.006/1.08e6) ~ 7.5e-5.
  CHECK(std::abs(m.mean) < 4e-4);
}

TEST_CASE("variance is affine in intensity") {
  const NoiseParams p{0.02, 0.003, "affine"};
  for (double i : {0.1, 0.5, 0.9}) {
    CAPTURE(i);
    const Moments m = field_moments(i, p, 7 + static_cast<std::uint64_t>(i * 10));
    const double expected = i * p.alpha + p.beta;
    CHECK(std::abs(m.var - expected) / expected < 0.02);
  }
}

TEST_CASE("clamping keeps the output in range") {
  const Image noisy = add_noise(Image(64, 64, 1.0), NoiseParams{0.05, 0.01, "hot"}, 3);
  CHECK(noisy.max_value() <= 1.0);
  CHECK(noisy.min_value() >= 0.0);
  CHECK(noisy.max_value() == 1.0);
}

TEST_CASE("same seed gives bit-identical output") {
  const Image img = testutil::random_image(16, 16, 2);
  const NoiseParams p{0.01, 1e-4, "d"};
  CHECK(add_noise(img, p, 9) == add_noise(img, p, 9));
  CHECK_FALSE(add_noise(img, p, 9) == add_noise(img, p, 10));
}

TEST_CASE("calibration round trip") {
  const NoiseParams truth{0.02, 0.003, "truth"};
  const auto bursts = static_bursts(truth, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}, 16, 48, 100);
  const NoiseParams est = estimate_noise_params(bursts);
  CHECK(std::abs(est.alpha - truth.alpha) / truth.alpha < 0.05);
  CHECK(std::abs(est.beta - truth.beta) / truth.beta < 0.05);
}

TEST_CASE("noise-free bursts calibrate to zero") {
  const auto bursts = static_bursts(NoiseParams{0.0, 0.0, "off"}, {0.2, 0.5, 0.8}, 8, 8, 1);
  const NoiseParams est = estimate_noise_params(bursts);
  CHECK(est.alpha == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(est.beta == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("a single intensity level is ill-posed") {
  const auto bursts = static_bursts(NoiseParams{0.01, 1e-3, "x"}, {0.5, 0.5}, 12, 16, 3);
  CHECK_THROWS_AS(estimate_noise_params(bursts), IllPosedError);
  const auto one = static_bursts(NoiseParams{0.01, 1e-3, "x"}, {0.4}, 12, 16, 4);
  CHECK_THROWS_AS(estimate_noise_params(one), IllPosedError);
}

TEST_CASE("short bursts are rejected") {
  const auto bursts = static_bursts(NoiseParams{0.01, 1e-3, "x"}, {0.2, 0.8}, 5, 4, 3);
  CHECK_THROWS_AS(estimate_noise_params(bursts), ArgumentError);
}

TEST_CASE("parameter file round trip") {
  testutil::TempDir dir("noise");
  const NoiseParams p{0.0123, 4.5e-5, "iso800"};
  save_noise_params(dir / "n.json", p);
  CHECK(load_noise_params(dir / "n.json") == p);

  std::ofstream(dir / "bad.json") << R"({"alpha": 0.1, "beta": 0.0, "gamma": 1})";
  CHECK_THROWS_AS(load_noise_params(dir / "bad.json"), ConfigError);
  std::ofstream(dir / "neg.json") << R"({"alpha": -0.1, "beta": 0.0})";
  CHECK_THROWS_AS(load_noise_params(dir / "neg.json"), ArgumentError);
  CHECK_THROWS_AS(load_noise_params(dir / "missing.json"), DataError);
}

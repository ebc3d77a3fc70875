#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "photoseq/errors.hpp"
#include "photoseq/synthetic.hpp"
#include "photoseq/tensor_image.hpp"
#include "photoseq/training.hpp"
#include "test_util.hpp"

using namespace photoseq;
namespace fs = std::filesystem;

namespace {

SampleGenerator tiny_generator() {
  SceneSpec spec;
  spec.height = spec.width = 32;
  spec.pan_speed = 0.5;
  BuilderConfig cfg;
  cfg.crop_size = 16;
  return SampleGenerator({{render_scene(spec, 1), render_scene(spec, 2)}}, cfg, NoiseParams{2e-3, 1e-5, "t"});
}

TrainOptions tiny_options(std::int64_t iterations) {
  TrainOptions o;
  o.loss.lambda_perc = 0.0;
  o.schedule.total_iterations = iterations;
  o.schedule.lr_decay_every = std::max<std::int64_t>(iterations, 1);
  o.schedule.batch_size = 2;
  o.schedule.initial_lr = 1e-3;
  o.discriminator = DiscriminatorConfig::scaled(8);
  return o;
}

const NetworkConfig kTiny = NetworkConfig::scaled(16);

std::vector<DecompositionTriple> perturbed_targets(const std::vector<TrainingSample>& batch) {
  std::vector<DecompositionTriple> preds;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    DecompositionTriple p = batch[b].target;
    p.mid_sharp = testutil::random_image(p.mid_sharp.height(), p.mid_sharp.width(), 300 + b);
    p.first_half = testutil::random_image(p.mid_sharp.height(), p.mid_sharp.width(), 400 + b);
    preds.push_back(p);
  }
  return preds;
}

}  // namespace

TEST_CASE("staircase learning rate") {
  const TrainSchedule s;
  CHECK(s.lr_at(0) == doctest::Approx(1e-4));
  CHECK(s.lr_at(24999) == doctest::Approx(1e-4));
  CHECK(s.lr_at(25000) == doctest::Approx(1e-5));
  CHECK(s.lr_at(50000) == doctest::Approx(1e-6));
  CHECK(s.lr_at(75000) == doctest::Approx(1e-7));
  CHECK_THROWS_AS(s.lr_at(-1), ArgumentError);
}

TEST_CASE("schedule and loss validation") {
  TrainSchedule s;
  CHECK_NOTHROW(s.validate());
  s.total_iterations = 0;
  CHECK_NOTHROW(s.validate());
  s = TrainSchedule{};
  s.total_iterations = 1000;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.lr_decay_every = 1000;
  CHECK_NOTHROW(s.validate());
  s.batch_size = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);

  LossWeights w;
  CHECK(w.lambda_sum == 1e-2);
  CHECK(w.lambda_perc == 3e-4);
  CHECK(w.lambda_adv == 1e-4);
  CHECK(w.lambda_grad == 1e-4);
  w.lambda_grad = -1.0;
  CHECK_THROWS_AS(w.validate(), ConfigError);

  TrainOptions o;
  CHECK_THROWS_AS(o.validate(), ConfigError);  // perceptual term without an extractor
  o.loss.lambda_perc = 0.0;
  CHECK_NOTHROW(o.validate());
}

TEST_CASE("total is the weighted sum and zero weights remove terms exactly") {
  const SampleGenerator gen = tiny_generator();
  std::vector<TrainingSample> batch{gen.generate(1), gen.generate(2)};
  const auto preds = perturbed_targets(batch);
  const VggFeatureExtractor vgg = VggFeatureExtractor::random({4, VggFeatureExtractor::kPool, 8}, 3);
  Discriminator disc(DiscriminatorConfig::scaled(8), 4);

  LossWeights all;
  const BatchCosts full = compute_costs(preds, batch, all, &vgg, &disc, 1e-4, nullptr);
  const CostTerms& t = full.terms;
  CHECK(t.total == doctest::Approx(t.supervised + t.sum + t.perceptual + t.tv + t.adversarial));
  CHECK(t.sum > 0.0);
  CHECK(t.perceptual > 0.0);
  CHECK(t.tv > 0.0);
  CHECK(t.adversarial > 0.0);

  LossWeights sup_only{0.0, 0.0, 0.0, 0.0};
  const BatchCosts base = compute_costs(preds, batch, sup_only, nullptr, nullptr, 1e-4, nullptr);
  CHECK(base.terms.total == base.terms.supervised);

  // Reference: the supervised gradient alone, averaged over the batch.
  for (std::size_t b = 0; b < batch.size(); ++b) {
    TripleGrad g;
    supervised_cost(preds[b], batch[b].target, &g);
    for (std::size_t i = 0; i < g.mid_sharp.size(); ++i) {
      CHECK(base.grads[b].mid_sharp.values()[i] == doctest::Approx(g.mid_sharp.values()[i] / 2));
    }
  }

  // Switching a single term back on changes the gradient only through that term.
  LossWeights tv_only = sup_only;
  tv_only.lambda_grad = 1e-2;
  const BatchCosts with_tv = compute_costs(preds, batch, tv_only, nullptr, nullptr, 1e-4, nullptr);
  Image tv_grad;
  tv_cost(preds[0].mid_sharp, &tv_grad);
  for (std::size_t i = 0; i < tv_grad.size(); ++i) {
    CHECK(with_tv.grads[0].mid_sharp.values()[i] - base.grads[0].mid_sharp.values()[i] ==
          doctest::Approx(1e-2 * tv_grad.values()[i] / 2).epsilon(1e-9));
  }
  CHECK(with_tv.grads[0].first_half == base.grads[0].first_half);

  CHECK_THROWS_AS(compute_costs(preds, batch, LossWeights{0, 1, 0, 0}, nullptr, nullptr, 1e-4, nullptr),
                  ConfigError);
}

TEST_CASE("perceptual cost") {
  const VggFeatureExtractor vgg = VggFeatureExtractor::random({4, VggFeatureExtractor::kPool, 8, 8}, 5);
  const Image a = testutil::random_image(16, 16, 1), b = testutil::random_image(16, 16, 2);
  CHECK(perceptual_cost(a, a, vgg) == 0.0);
  Image g;
  const double c = perceptual_cost(a, b, vgg, &g);
  CHECK(c > 0.0);
  double norm = 0.0;
  for (double v : g.values()) norm += v * v;
  CHECK(norm > 0.0);

  // Directional derivative with a small step: ReLU and max-pool kinks bias larger ones.
  const Image dir = testutil::random_image(16, 16, 3, -1.0, 1.0);
  const double h = 1e-4;
  Image up = a, down = a;
  double analytic = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    up.values()[i] += h * dir.values()[i];
    down.values()[i] -= h * dir.values()[i];
    analytic += g.values()[i] * dir.values()[i];
  }
  const double numeric = (perceptual_cost(up, b, vgg) - perceptual_cost(down, b, vgg)) / (2 * h);
  CHECK(std::abs(numeric - analytic) <= 1e-2 * std::abs(analytic));
}

TEST_CASE("vgg19 layout and missing weights") {
  const auto plan = VggFeatureExtractor::vgg19_conv54_plan();
  int convs = 0, pools = 0;
  for (int p : plan) (p == VggFeatureExtractor::kPool ? pools : convs)++;
  CHECK(convs == 16);
  CHECK(pools == 4);
  const auto names = vgg_parameter_names(plan);
  CHECK(names.front() == "features.0.weight");
  CHECK(names.back() == "features.34.bias");
  CHECK_THROWS_AS(VggFeatureExtractor::load("/nonexistent/vgg.bin"), ConfigError);
}

TEST_CASE("discriminator learns a fixed toy pair") {
  Discriminator d(DiscriminatorConfig::scaled(8), 7);
  const nn::Tensor real = to_tensor(Image(32, 32, 0.8));
  const nn::Tensor fake = to_tensor(testutil::random_image(32, 32, 8));
  const double before = d.loss(real, fake);
  for (int i = 0; i < 100; ++i) d.train_step(real, fake, 1e-3);
  const double after = d.loss(real, fake);
  CHECK(after < before);
  CHECK(std::isfinite(d.generator_cost(fake)));

  const AdversarialResult r = adversarial_step(d, testutil::random_image(32, 32, 9), Image(32, 32, 0.8), 1e-4);
  CHECK(std::isfinite(r.generator_cost));
  CHECK(std::isfinite(r.discriminator_loss));
  CHECK(softplus(1000.0) == doctest::Approx(1000.0));
  CHECK(softplus(-1000.0) >= 0.0);
}

TEST_CASE("zero iterations return the input weights") {
  const Weights w0 = init_weights(kTiny, 11);
  const FixedSampleSource src({tiny_generator().generate(1)});
  const Weights w = train(src, w0, tiny_options(0));
  CHECK(w.params == w0.params);
}

TEST_CASE("dry run logs the schedule and leaves weights alone") {
  testutil::TempDir dir("dry");
  const Weights w0 = init_weights(kTiny, 11);
  TrainOptions o = tiny_options(40);
  o.schedule.lr_decay_every = 10;
  o.schedule.batch_size = 1;
  o.log_every = 5;
  o.dry_run = true;
  o.log_path = dir / "log.csv";
  const FixedSampleSource src({tiny_generator().generate(1)});
  CHECK(train(src, w0, o).params == w0.params);
  const auto rows = read_lr_log(o.log_path);
  REQUIRE(rows.size() == 9);
  CHECK(rows.back().first == 39);
  for (const auto& [it, lr] : rows) CHECK(lr == doctest::Approx(1e-3 * std::pow(0.1, it / 10)));
}

TEST_CASE("training log, checkpoints, determinism and resume") {
  testutil::TempDir dir("train");
  const SampleGenerator gen = tiny_generator();
  const GeneratorSource src(gen, 5);
  const Weights w0 = init_weights(kTiny, 12);

  TrainOptions o = tiny_options(4);
  o.log_path = dir / "log.csv";
  o.log_every = 1;
  o.checkpoint_every = 2;
  const Weights straight = train(src, w0, o);
  CHECK_FALSE(straight.params == w0.params);
  CHECK(fs::exists(dir / "ckpt_00000002.weights"));
  CHECK(fs::exists(dir / "ckpt_00000002.state.json"));
  CHECK(fs::exists(dir / "ckpt_00000004.weights"));

  const auto rows = read_lr_log(dir / "log.csv");
  REQUIRE(rows.size() == 4);
  for (int i = 0; i < 4; ++i) {
    CHECK(rows[i].first == i);
    CHECK(rows[i].second == doctest::Approx(1e-3));
  }

  TrainOptions again = tiny_options(4);
  CHECK(train(src, w0, again).params == straight.params);

  TrainOptions resumed = tiny_options(4);
  resumed.resume_from = dir / "ckpt_00000002";
  CHECK(train(src, w0, resumed).params == straight.params);

  TrainOptions bad = tiny_options(4);
  bad.resume_from = dir / "ckpt_99999999";
  CHECK_THROWS_AS(train(src, w0, bad), DataError);
}

TEST_CASE("adversarial training checkpoints its discriminator") {
  testutil::TempDir dir("adv");
  const FixedSampleSource src({tiny_generator().generate(3), tiny_generator().generate(4)});
  TrainOptions o = tiny_options(2);
  o.checkpoint_dir = dir.path();
  o.checkpoint_every = 2;
  const Weights w = train(src, init_weights(kTiny, 13), o);
  CHECK(fs::exists(dir / "ckpt_00000002.disc"));
  bool finite = true;
  for (const auto& p : w.params)
    for (float v : p.value) finite = finite && std::isfinite(v);
  CHECK(finite);
}

TEST_CASE("non-finite cost aborts with a diagnostic checkpoint") {
  testutil::TempDir dir("nan");
  Weights w0 = init_weights(kTiny, 14);
  w0.params.at("op2.bias").value[0] = std::numeric_limits<float>::quiet_NaN();
  const FixedSampleSource src({tiny_generator().generate(1)});
  TrainOptions o = tiny_options(3);
  o.checkpoint_dir = dir.path();
  CHECK_THROWS_AS(train(src, w0, o), NumericalError);
  CHECK(fs::exists(dir / "nan_iter00000000.weights"));
  CHECK(fs::exists(dir / "nan_iter00000000.state.json"));
}

TEST_CASE("three models are keyed by noisy-input count") {
  testutil::TempDir dir("three");
  TrainOptions o = tiny_options(2);
  o.log_path = dir / "train.csv";
  const ModelTriple models = train_three_models(tiny_generator(), kTiny, o);
  CHECK(models[0].params.content_hash() != models[1].params.content_hash());
  CHECK(models[1].params.content_hash() != models[2].params.content_hash());
  CHECK(models[0].params.content_hash() != models[2].params.content_hash());
  for (int k = 0; k < 3; ++k) CHECK(fs::exists(dir / ("train" + model_suffix(k) + ".csv")));
  CHECK(model_suffix(2) == "-noisy2");
  CHECK_THROWS_AS(model_suffix(3), ArgumentError);
}

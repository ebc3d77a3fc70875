#include <doctest.h>

#include <cmath>
#include <random>

#include "photoseq/decomposer_net.hpp"
#include "photoseq/errors.hpp"
#include "photoseq/tensor_image.hpp"
#include "layer_table.hpp"
#include "test_util.hpp"

using namespace photoseq;

namespace {

using testutil::kTable;
using testutil::Row;

ExposureTriplet random_triplet(int side, std::uint64_t seed, int n = 11) {
  return {testutil::random_image(side, side, seed), testutil::random_image(side, side, seed + 1),
          testutil::random_image(side, side, seed + 2), n, {true, true}};
}

}  // namespace

TEST_CASE("layer walk matches the reference table") {
  const DecomposerNet net{NetworkConfig{}};
  const auto layers = net.layers();
  REQUIRE(layers.size() == std::size(kTable));
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Row& row = kTable[i];
    const LayerInfo& l = layers[i];
    CAPTURE(row.name);
    CHECK(l.name == row.name);
    CHECK(l.kind == row.kind);
    CHECK(l.channels_in == row.cin);
    if (row.cout >= 0) CHECK(l.channels_out == row.cout);
    CHECK(l.kernel == row.kernel);
    CHECK(l.pad == row.pad);
    CHECK(l.stride == row.stride);
    const bool out_layer = l.name == "op1" || l.name == "op2";
    CHECK(l.activation == (out_layer ? Activation::RescaledTanh : Activation::LeakyReLU));
  }
}

TEST_CASE("residual blocks expand into four channel-preserving convs") {
  const DecomposerNet net{NetworkConfig{}};
  int block_convs = 0;
  for (const auto& l : net.conv_layers()) {
    if (l.name.find(".d") == std::string::npos) continue;
    ++block_convs;
    CHECK(l.channels_in == l.channels_out);
    CHECK(l.kernel == 3);
    CHECK(l.stride == 1);
  }
  // 9 encoder blocks + 8 decoder blocks.
  CHECK(block_convs == 17 * 4);
}

TEST_CASE("config validation and scaling") {
  CHECK_NOTHROW(NetworkConfig{}.validate());
  const NetworkConfig s = NetworkConfig::scaled(8);
  CHECK(s.short_head_channels == 2);
  CHECK(s.long_head_channels == 4);
  CHECK(s.trunk_channels == std::array<int, 5>{8, 16, 32, 64, 128});
  CHECK_THROWS_AS(NetworkConfig::scaled(3), ConfigError);
  NetworkConfig bad;
  bad.long_head_channels = 16;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK(NetworkConfig{}.fingerprint() != s.fingerprint());
  CHECK(NetworkConfig{}.fingerprint() == NetworkConfig{}.fingerprint());
}

TEST_CASE("forward shape, range and determinism") {
  const Weights w = init_weights(NetworkConfig::scaled(8), 3);
  const ExposureTriplet t = random_triplet(32, 10, 15);
  const DecompositionTriple a = forward(t, w);
  const DecompositionTriple b = forward(t, w);
  for (const Image* img : {&a.first_half, &a.mid_sharp, &a.second_half}) {
    CHECK(img->height() == 32);
    CHECK(img->width() == 32);
    CHECK(img->in_unit_range());
    for (double v : img->values()) CHECK(std::isfinite(v));
  }
  CHECK(a.first_half == b.first_half);
  CHECK(a.mid_sharp == b.mid_sharp);
  CHECK(a.n1 == 7);
  CHECK(a.n2 == 7);
}

TEST_CASE("outputs stay in range for extreme inputs") {
  Weights w = init_weights(NetworkConfig::scaled(8), 4);
  // Inflate the output biases so the tanh saturates.
  for (float& v : w.params.at("op2.bias").value) v = 50.0f;
  for (float& v : w.params.at("op1.bias").value) v = -50.0f;
  ExposureTriplet t{Image(16, 16, 1.0), Image(16, 16, 0.0), Image(16, 16, 1.0), 3, {false, false}};
  const DecompositionTriple d = forward(t, w);
  CHECK(d.mid_sharp.max_value() <= 1.0);
  CHECK(d.first_half.min_value() >= 0.0);
  CHECK(d.second_half.min_value() >= 0.0);
}

TEST_CASE("input sizes must be multiples of sixteen") {
  const Weights w = init_weights(NetworkConfig::scaled(8), 5);
  CHECK_THROWS_AS(forward(random_triplet(24, 1), w), ShapeError);
}

TEST_CASE("shorts share one head; halves share one output layer") {
  const DecomposerNet net{NetworkConfig{}};
  int heads = 0, outs = 0;
  for (const auto& l : net.conv_layers()) {
    heads += l.name == "ip1";
    outs += l.name == "op1";
    CHECK(l.name != "ip3");
  }
  CHECK(heads == 1);
  CHECK(outs == 1);

  // Both passes through the shared head reach the outputs.
  const Weights w = init_weights(NetworkConfig::scaled(8), 6);
  ExposureTriplet t = random_triplet(16, 20);
  const DecompositionTriple base = forward(t, w);
  t.short_post = testutil::random_image(16, 16, 99);
  const DecompositionTriple moved = forward(t, w);
  CHECK_FALSE(base.first_half == moved.first_half);
  CHECK_FALSE(base.second_half == moved.second_half);
}

TEST_CASE("initialization is seeded and fan-in scaled") {
  const NetworkConfig cfg = NetworkConfig::scaled(8);
  const Weights a = init_weights(cfg, 1);
  const Weights b = init_weights(cfg, 1);
  const Weights c = init_weights(cfg, 2);
  CHECK(a.params == b.params);
  CHECK_FALSE(a.params == c.params);
  for (const auto& p : a.params) {
    const std::size_t fan = p.shape.size() == 1 ? 0 : p.fan_in();
    if (fan == 0) continue;
    const float bound = 1.0f / std::sqrt(static_cast<float>(fan));
    float peak = 0.0f;
    for (float v : p.value) peak = std::max(peak, std::abs(v));
    CHECK(peak <= bound * (1.0f + 1e-6f));
  }
}

TEST_CASE("every parameter receives gradient") {
  const Weights w = init_weights(NetworkConfig::scaled(8), 7);
  const DecomposerNet net(w.config);
  const ExposureTriplet t = random_triplet(16, 30);
  nn::Tape tape;
  const auto out = net.forward(tape, w, tape.constant(to_tensor(t.short_pre)),
                               tape.constant(to_tensor(t.long_exposure)),
                               tape.constant(to_tensor(t.short_post)));
  std::mt19937 rng(1);
  std::normal_distribution<float> g;
  std::vector<std::pair<nn::Var, nn::Tensor>> seeds;
  for (const auto& v : {out.first_half, out.mid_sharp, out.second_half}) {
    nn::Tensor s(v->value.channels(), v->value.batch(), v->value.height(), v->value.width());
    for (float& x : s.values()) x = g(rng);
    seeds.emplace_back(v, std::move(s));
  }
  tape.backward(seeds);
  for (const auto& p : w.params) {
    CAPTURE(p.name);
    const auto* grad = tape.grad_of(p);
    REQUIRE(grad != nullptr);
    double norm = 0.0;
    for (float v : *grad) norm += static_cast<double>(v) * v;
    CHECK(norm > 0.0);
  }
}

TEST_CASE("whole-network directional derivative") {
  Weights w = init_weights(NetworkConfig::scaled(8), 8);
  const DecomposerNet net(w.config);
  const ExposureTriplet t = random_triplet(16, 40);
  const nn::Tensor pre = to_tensor(t.short_pre), lng = to_tensor(t.long_exposure),
                   post = to_tensor(t.short_post);
  std::mt19937 rng(2);
  std::normal_distribution<float> g;
  nn::Tensor probe(3, 1, 16, 16);
  for (float& x : probe.values()) x = g(rng);

  // L = sum(probe * (first + 2 mid + 3 second)), in double for the difference quotient.
  auto loss = [&](const Weights& wt) {
    nn::Tape tape(false);
    const auto o = net.forward(tape, wt, tape.constant(pre), tape.constant(lng), tape.constant(post));
    double s = 0.0;
    for (std::size_t i = 0; i < probe.size(); ++i) {
      s += probe.values()[i] * (o.first_half->value.values()[i] + 2.0 * o.mid_sharp->value.values()[i] +
                                3.0 * o.second_half->value.values()[i]);
    }
    return s;
  };

  nn::Tape tape;
  const auto o = net.forward(tape, w, tape.constant(pre), tape.constant(lng), tape.constant(post));
  std::vector<std::pair<nn::Var, nn::Tensor>> seeds;
  for (float scale : {1.0f, 2.0f, 3.0f}) {
    nn::Tensor s = probe;
    for (float& x : s.values()) x *= scale;
    seeds.emplace_back(scale == 1.0f ? o.first_half : scale == 2.0f ? o.mid_sharp : o.second_half,
                       std::move(s));
  }
  tape.backward(seeds);

  std::vector<std::vector<float>> dir;
  double analytic = 0.0;
  for (const auto& p : w.params) {
    std::vector<float> d(p.numel());
    for (float& x : d) x = g(rng);
    const auto* grad = tape.grad_of(p);
    for (std::size_t i = 0; i < d.size(); ++i) analytic += static_cast<double>(d[i]) * (*grad)[i];
    dir.push_back(std::move(d));
  }
  // Small step: the error grows with the number of leaky-ReLU kinks crossed.
  const float h = 1e-5f;
  Weights up = w, down = w;
  for (std::size_t k = 0; k < w.params.size(); ++k) {
    for (std::size_t i = 0; i < dir[k].size(); ++i) {
      up.params[k].value[i] += h * dir[k][i];
      down.params[k].value[i] -= h * dir[k][i];
    }
  }
  const double numeric = (loss(up) - loss(down)) / (2.0 * h);
  CHECK(std::abs(numeric - analytic) <= 1e-2 * std::abs(analytic));
}

TEST_CASE("weights round trip and mismatch detection") {
  testutil::TempDir dir("weights");
  const NetworkConfig cfg = NetworkConfig::scaled(8);
  const Weights w = init_weights(cfg, 9);
  save_weights(dir / "w.bin", w);
  CHECK(std::filesystem::exists(dir / "w.bin.json"));
  const Weights back = load_weights(dir / "w.bin", cfg);
  CHECK(back.params == w.params);
  CHECK(back.config == cfg);
  CHECK(weights_fingerprint_hex(back) == weights_fingerprint_hex(w));

  const ExposureTriplet t = random_triplet(16, 50);
  CHECK(forward(t, back).mid_sharp == forward(t, w).mid_sharp);

  CHECK_THROWS_AS(load_weights(dir / "w.bin", NetworkConfig::scaled(4)), WeightError);
  CHECK_THROWS_AS(load_weights(dir / "missing.bin"), WeightError);

  Weights wrong = init_weights(NetworkConfig::scaled(4), 1);
  wrong.config = cfg;
  CHECK_THROWS_AS(forward(t, wrong), WeightError);
}

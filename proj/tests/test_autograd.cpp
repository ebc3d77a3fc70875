#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "photoseq/errors.hpp"
#include "photoseq/nn/adam.hpp"
#include "photoseq/nn/autograd.hpp"
#include "test_util.hpp"

using namespace photoseq;
using namespace photoseq::nn;

namespace {

Tensor random_tensor(int c, int n, int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  Tensor t(c, n, h, w);
  for (float& v : t.values()) v = d(rng);
  return t;
}

/// Distinct values at least 0.07 apart and away from zero, shuffled, so
/// finite differences never straddle a kink or an argmax switch.
Tensor separated_tensor(int c, int n, int h, int w, std::uint64_t seed) {
  Tensor t(c, n, h, w);
  for (std::size_t i = 0; i < t.size(); ++i) {
    t.data()[i] = 0.07f * (static_cast<float>(i) - static_cast<float>(t.size()) / 2.0f + 0.5f);
  }
  std::mt19937_64 rng(seed);
  std::shuffle(t.data(), t.data() + t.size(), rng);
  return t;
}

void randomize(Parameter& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(-0.5f, 0.5f);
  for (float& v : p.value) v = d(rng);
}

using Build = std::function<Var(Tape&, const Var&)>;

/// L = sum(out * r); compares tape gradients of x and of every parameter in
/// `params` with central differences computed in double from float forwards.
void check_gradients(const Build& build, Tensor x, ParameterSet* params = nullptr, double tol = 2e-2) {
  Tape probe(false);
  const Tensor out0 = build(probe, probe.constant(x))->value;
  const Tensor r = random_tensor(out0.channels(), out0.batch(), out0.height(), out0.width(), 99);
  auto loss = [&](const Tensor& xin) {
    Tape t(false);
    const Tensor o = build(t, t.constant(xin))->value;
    double acc = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) acc += static_cast<double>(o.data()[i]) * r.data()[i];
    return acc;
  };

  Tape tape;
  Var xv = tape.variable(x);
  Var out = build(tape, xv);
  tape.backward(out, r);

  const float h = 1e-2f;
  double err = 0.0, scale = 1e-9;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Tensor xp = x, xm = x;
    xp.data()[i] += h;
    xm.data()[i] -= h;
    const double fd = (loss(xp) - loss(xm)) / (2.0 * h);
    const double an = xv->grad_buffer().data()[i];
    err = std::max(err, std::abs(fd - an));
    scale = std::max({scale, std::abs(fd), std::abs(an)});
  }
  CHECK(err / scale < tol);

  if (!params) return;
  for (auto& p : *params) {
    const std::vector<float>* g = tape.grad_of(p);
    REQUIRE(g != nullptr);
    double perr = 0.0, pscale = 1e-9;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const float orig = p.value[i];
      p.value[i] = orig + h;
      const double up = loss(x);
      p.value[i] = orig - h;
      const double down = loss(x);
      p.value[i] = orig;
      const double fd = (up - down) / (2.0 * h);
      perr = std::max(perr, std::abs(fd - (*g)[i]));
      pscale = std::max({pscale, std::abs(fd), std::abs(static_cast<double>((*g)[i]))});
    }
    INFO("parameter " << p.name);
    CHECK(perr / pscale < tol);
  }
}

}  // namespace

TEST_CASE("conv2d forward matches a direct convolution") {
  ParameterSet ps;
  ps.add("w", {2, 3, 3, 3});
  ps.add("b", {2});
  Parameter& w = ps[0];
  Parameter& b = ps[1];
  randomize(w, 1);
  randomize(b, 2);
  const Tensor x = random_tensor(3, 2, 5, 6, 3);
  for (int stride : {1, 2}) {
    Tape t(false);
    const Tensor out = conv2d(t, t.constant(x), w, &b, stride, 1)->value;
    REQUIRE(out.height() == conv_out_size(5, 3, stride, 1));
    for (int co = 0; co < 2; ++co)
      for (int n = 0; n < 2; ++n)
        for (int y = 0; y < out.height(); ++y)
          for (int xx = 0; xx < out.width(); ++xx) {
            double acc = b.value[co];
            for (int ci = 0; ci < 3; ++ci)
              for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                  const int iy = y * stride - 1 + ky, ix = xx * stride - 1 + kx;
                  if (iy < 0 || iy >= 5 || ix < 0 || ix >= 6) continue;
                  acc += w.value[((co * 3 + ci) * 3 + ky) * 3 + kx] * x.at(ci, n, iy, ix);
                }
            CHECK(out.at(co, n, y, xx) == doctest::Approx(acc).epsilon(1e-5));
          }
  }
}

TEST_CASE("conv_transpose2d is the adjoint of the strided conv") {
  // <conv(x), y> == <x, convT(y)> for matching weights and no bias.
  ParameterSet ps;
  Parameter& w = ps[ps.add("w", {3, 2, 4, 4})];
  randomize(w, 5);
  ParameterSet pt;
  Parameter& wt = pt[pt.add("wt", {3, 2, 4, 4})];
  wt.value = w.value;  // conv [Cout=3,Cin=2] vs transpose [Cin=3,Cout=2]
  const Tensor x = random_tensor(2, 1, 8, 8, 6);
  Tape t(false);
  const Tensor cx = conv2d(t, t.constant(x), w, nullptr, 2, 1)->value;
  const Tensor y = random_tensor(cx.channels(), 1, cx.height(), cx.width(), 7);
  const Tensor ty = conv_transpose2d(t, t.constant(y), wt, nullptr, 2, 1)->value;
  REQUIRE(ty.same_shape(x));
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < cx.size(); ++i) lhs += double(cx.data()[i]) * y.data()[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += double(x.data()[i]) * ty.data()[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-4));
}

TEST_CASE("op gradients match finite differences") {
  SUBCASE("conv2d stride 1 and 2") {
    for (int stride : {1, 2}) {
      ParameterSet ps;
      ps.add("w", {2, 3, 3, 3});
      ps.add("b", {2});
      randomize(ps[0], 11);
      randomize(ps[1], 12);
      check_gradients([&](Tape& t, const Var& x) { return conv2d(t, x, ps[0], &ps[1], stride, 1); },
                      random_tensor(3, 2, 6, 5, 13), &ps);
    }
  }
  SUBCASE("pointwise conv") {
    ParameterSet ps;
    ps.add("w", {4, 3, 1, 1});
    ps.add("b", {4});
    randomize(ps[0], 14);
    randomize(ps[1], 15);
    check_gradients([&](Tape& t, const Var& x) { return conv2d(t, x, ps[0], &ps[1], 1, 0); },
                    random_tensor(3, 2, 4, 4, 16), &ps);
  }
  SUBCASE("conv_transpose2d") {
    ParameterSet ps;
    ps.add("w", {3, 2, 4, 4});
    ps.add("b", {2});
    randomize(ps[0], 17);
    randomize(ps[1], 18);
    check_gradients(
        [&](Tape& t, const Var& x) { return conv_transpose2d(t, x, ps[0], &ps[1], 2, 1); },
        random_tensor(3, 2, 3, 4, 19), &ps);
  }
  SUBCASE("activations") {
    check_gradients([](Tape& t, const Var& x) { return leaky_relu(t, x, 0.2f); },
                    separated_tensor(2, 1, 4, 4, 20));
    check_gradients([](Tape& t, const Var& x) { return rescaled_tanh(t, x); },
                    random_tensor(2, 1, 4, 4, 21));
  }
  SUBCASE("structural ops") {
    check_gradients(
        [](Tape& t, const Var& x) {
          Var a = slice_channels(t, x, 0, 2);
          Var b = slice_channels(t, x, 2, 2);
          const Var parts[] = {b, add(t, a, b), a};
          return concat_channels(t, parts);
        },
        random_tensor(4, 2, 3, 3, 22));
    check_gradients([](Tape& t, const Var& x) { return max_pool2(t, x); },
                    separated_tensor(2, 2, 4, 6, 23));
    check_gradients([](Tape& t, const Var& x) { return global_avg_pool(t, x); },
                    random_tensor(3, 2, 4, 5, 24));
    const float scale[] = {2.0f, -1.0f}, shift[] = {0.5f, 0.0f};
    check_gradients([&](Tape& t, const Var& x) { return channel_affine(t, x, scale, shift); },
                    random_tensor(2, 1, 3, 3, 25));
  }
}

TEST_CASE("frozen parameters receive no gradient") {
  ParameterSet ps;
  randomize(ps[ps.add("w", {2, 2, 3, 3})], 1);
  Tape tape;
  tape.freeze(ps);
  Var x = tape.variable(random_tensor(2, 1, 4, 4, 2));
  Var y = conv2d(tape, x, ps[0], nullptr, 1, 1);
  tape.backward(y, random_tensor(2, 1, 4, 4, 3));
  CHECK(tape.grad_of(ps[0]) == nullptr);
  CHECK_FALSE(x->grad.empty());
}

TEST_CASE("shape errors are reported") {
  ParameterSet ps;
  ps.add("w", {2, 3, 3, 3});
  Tape t(false);
  CHECK_THROWS(conv2d(t, t.constant(Tensor(4, 1, 5, 5)), ps[0], nullptr, 1, 1));
  CHECK_THROWS(add(t, t.constant(Tensor(1, 1, 2, 2)), t.constant(Tensor(1, 1, 3, 2))));
}

TEST_CASE("adam minimizes a quadratic and matches the reference update") {
  ParameterSet ps;
  Parameter& p = ps[ps.add("p", {3})];
  p.value = {1.0f, -2.0f, 3.0f};
  Adam adam(ps);
  // First step of Adam moves each coordinate by lr against the gradient sign.
  {
    Tape tape;
    tape.grad_for(p) = {2.0f, -4.0f, 6.0f};
    adam.step(ps, tape, 0.1);
  }
  CHECK(p.value[0] == doctest::Approx(0.9).epsilon(1e-5));
  CHECK(p.value[1] == doctest::Approx(-1.9).epsilon(1e-5));
  CHECK(p.value[2] == doctest::Approx(2.9).epsilon(1e-5));
  for (int i = 0; i < 2000; ++i) {
    Tape tape;
    auto& g = tape.grad_for(p);
    for (int k = 0; k < 3; ++k) g[k] = 2.0f * p.value[k];
    adam.step(ps, tape, 0.01);
  }
  for (float v : p.value) CHECK(std::abs(v) < 1e-2);
  CHECK(adam.steps() == 2001);
}

TEST_CASE("adam state round-trips through the container format") {
  testutil::TempDir dir("adam");
  ParameterSet ps;
  Parameter& p = ps[ps.add("p", {2})];
  p.value = {1.0f, 2.0f};
  Adam a(ps);
  Tape tape;
  tape.grad_for(p) = {0.5f, -0.5f};
  a.step(ps, tape, 0.1);
  a.save(dir / "opt");
  Adam b(ps);
  b.load(dir / "opt");
  CHECK(b.steps() == 1);
  CHECK(b.first_moment() == a.first_moment());
  CHECK(b.second_moment() == a.second_moment());
}

TEST_CASE("parameter containers round-trip and reject corruption") {
  testutil::TempDir dir("container");
  ParameterSet ps;
  ps.add("a.weight", {2, 1, 3, 3});
  ps.add("a.bias", {2});
  randomize(ps[0], 3);
  randomize(ps[1], 4);
  write_container(dir / "w.bin", ps, {1, 0xabcdefULL});
  ContainerHeader h;
  const ParameterSet back = read_container(dir / "w.bin", &h);
  CHECK(back == ps);
  CHECK(h.fingerprint == 0xabcdefULL);
  CHECK(back.content_hash() == ps.content_hash());

  std::filesystem::resize_file(dir / "w.bin", std::filesystem::file_size(dir / "w.bin") - 3);
  CHECK_THROWS_AS(read_container(dir / "w.bin"), WeightError);
  CHECK_THROWS(read_container(dir / "missing.bin"));
}

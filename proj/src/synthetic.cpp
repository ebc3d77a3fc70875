#include "photoseq/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "photoseq/errors.hpp"

namespace photoseq {

namespace {

struct Wave {
  double kx, ky, phase;
  std::array<double, 3> amp;
};

struct Texture {
  std::array<double, 3> base;
  std::vector<Wave> waves;

  std::array<double, 3> eval(double x, double y) const {
    std::array<double, 3> c = base;
    for (const auto& w : waves) {
      const double s = std::sin(w.kx * x + w.ky * y + w.phase);
      for (int ch = 0; ch < 3; ++ch) c[ch] += w.amp[ch] * s;
    }
    return c;
  }
};

struct Mover {
  bool disc;
  double x0, y0, vx, vy, ax, ay;
  double size_a, size_b;  // radius, or box half-extents
  Texture tex;
};

Texture random_texture(std::mt19937_64& rng, double scale, int waves, double amplitude) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Texture t;
  for (auto& b : t.base) b = 0.25 + 0.5 * u(rng);
  for (int i = 0; i < waves; ++i) {
    const double angle = 2 * std::numbers::pi * u(rng);
    const double freq = (0.5 + u(rng)) * 2 * std::numbers::pi / scale;
    Wave w{freq * std::cos(angle), freq * std::sin(angle), 2 * std::numbers::pi * u(rng), {}};
    for (auto& a : w.amp) a = amplitude * (u(rng) - 0.5);
    t.waves.push_back(w);
  }
  return t;
}

double smoothstep_edge(double signed_dist) {
  // signed_dist < 0 inside; one-pixel anti-aliased edge
  return std::clamp(0.5 - signed_dist, 0.0, 1.0);
}

}  // namespace

FrameClip render_scene(const SceneSpec& spec, std::uint64_t seed) {
  if (spec.height < 1 || spec.width < 1 || spec.frames < 1 || spec.objects < 0) {
    throw ArgumentError("render_scene: invalid scene dimensions");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  const Texture background = random_texture(rng, spec.texture_scale * 2.0, 6, 0.35);
  const double pan_angle = 2 * std::numbers::pi * u(rng);
  const double pan_vx = spec.pan_speed * std::cos(pan_angle);
  const double pan_vy = spec.pan_speed * std::sin(pan_angle);

  std::vector<Mover> movers;
  for (int i = 0; i < spec.objects; ++i) {
    Mover m;
    m.disc = u(rng) < 0.5;
    m.x0 = spec.width * (0.15 + 0.7 * u(rng));
    m.y0 = spec.height * (0.15 + 0.7 * u(rng));
    const double speed = spec.max_speed * (0.4 + 0.6 * u(rng));
    const double dir = 2 * std::numbers::pi * u(rng);
    m.vx = speed * std::cos(dir);
    m.vy = speed * std::sin(dir);
    m.ax = 0.01 * spec.max_speed * (u(rng) - 0.5);
    m.ay = 0.01 * spec.max_speed * (u(rng) - 0.5);
    const double extent = std::min(spec.height, spec.width);
    m.size_a = extent * (0.08 + 0.12 * u(rng));
    m.size_b = extent * (0.08 + 0.12 * u(rng));
    m.tex = random_texture(rng, spec.texture_scale, 3, 0.5);
    movers.push_back(std::move(m));
  }

  FrameClip clip;
  clip.source_id = "synthetic-" + std::to_string(seed);
  clip.frames.reserve(spec.frames);
  for (int f = 0; f < spec.frames; ++f) {
    Image img(spec.height, spec.width);
    const double t = f;
    for (int r = 0; r < spec.height; ++r) {
      for (int c = 0; c < spec.width; ++c) {
        const double x = c + 0.5, y = r + 0.5;
        auto px = background.eval(x + pan_vx * t, y + pan_vy * t);
        for (const auto& m : movers) {
          const double cx = m.x0 + m.vx * t + 0.5 * m.ax * t * t;
          const double cy = m.y0 + m.vy * t + 0.5 * m.ay * t * t;
          const double dx = x - cx, dy = y - cy;
          double sd;
          if (m.disc) {
            sd = std::hypot(dx, dy) - m.size_a;
          } else {
            sd = std::max(std::abs(dx) - m.size_a, std::abs(dy) - m.size_b);
          }
          const double cover = smoothstep_edge(sd);
          if (cover <= 0.0) continue;
          const auto obj = m.tex.eval(dx, dy);  // texture moves with the object
          for (int ch = 0; ch < 3; ++ch) px[ch] = (1 - cover) * px[ch] + cover * obj[ch];
        }
        for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = std::clamp(px[ch], 0.0, 1.0);
      }
    }
    clip.frames.push_back(std::move(img));
  }
  return clip;
}

FrameClip constant_clip(int height, int width, int frames, double value) {
  FrameClip clip;
  clip.source_id = "constant";
  for (int i = 0; i < frames; ++i) clip.frames.emplace_back(height, width, value);
  return clip;
}

}  // namespace photoseq

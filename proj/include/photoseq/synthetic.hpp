#pragma once

#include <cstdint>

#include "photoseq/image.hpp"

namespace photoseq {

/// Procedural high-frame-rate scene: a textured background under an optional
/// global pan, plus textured discs and boxes moving along straight paths.
struct SceneSpec {
  int height = 64;
  int width = 64;
  int frames = 48;
  int objects = 3;
  double max_speed = 1.5;      // pixels per frame
  double pan_speed = 0.0;      // pixels per frame; 0 disables camera motion
  double texture_scale = 6.0;  // background feature size in pixels
};

/// Renders a clip; fully determined by (spec, seed).
FrameClip render_scene(const SceneSpec& spec, std::uint64_t seed);

/// Constant-image clip, handy for static-scene cases.
FrameClip constant_clip(int height, int width, int frames, double value);

}  // namespace photoseq

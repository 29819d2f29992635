#pragma once

// Procedural histology-like scenes: eosin-pink textured stroma with purple
// elliptical nuclei. A scene lives in continuous unit coordinates and can be
// rendered at any resolution; 64 px renders the same scene at twice the
// sampling density of 32 px.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "latentaug/core/error.hpp"
#include "latentaug/core/rng.hpp"
#include "latentaug/patchlab/patch.hpp"

namespace latentaug::patchlab {

struct Nucleus {
  double cx, cy;  // centre in [0,1]^2
  double rx, ry;  // semi-axes, fraction of patch side
  double angle;
  std::array<double, 3> color;
};

struct TextureWave {
  double fx, fy, phase, amplitude;
};

struct SceneRecord {
  int class_label = 0;
  std::array<double, 3> background{};
  std::vector<TextureWave> texture;
  std::vector<Nucleus> nuclei;
};

// Blob-count ranges per class (inclusive). The class-1 range starts above
// the class-0 range so their means differ by at least kBlobCountMargin.
inline constexpr int kClass0MinBlobs = 5;
inline constexpr int kClass0MaxBlobs = 11;
inline constexpr int kClass1MinBlobs = 14;
inline constexpr int kClass1MaxBlobs = 20;
inline constexpr double kBlobCountMargin = 6.0;

inline SceneRecord synth_scene(std::uint64_t seed, int class_label) {
  if (class_label != 0 && class_label != 1) throw ContractError("class label must be 0 or 1");
  Rng rng(derive_seed(seed, {0x5ce4e, std::uint64_t(class_label)}));
  SceneRecord s;
  s.class_label = class_label;
  s.background = {0.90 + rng.uniform(-0.015, 0.015), 0.60 + rng.uniform(-0.02, 0.02), 0.76 + rng.uniform(-0.02, 0.02)};
  const int waves = 4;
  for (int i = 0; i < waves; ++i) {
    s.texture.push_back({rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0), rng.uniform(0, 2 * std::numbers::pi),
                         rng.uniform(0.01, 0.035)});
  }
  const int lo = class_label == 0 ? kClass0MinBlobs : kClass1MinBlobs;
  const int hi = class_label == 0 ? kClass0MaxBlobs : kClass1MaxBlobs;
  const auto count = rng.uniform_int(lo, hi);
  for (std::int64_t i = 0; i < count; ++i) {
    Nucleus n;
    n.cx = rng.uniform(0.0, 1.0);
    n.cy = rng.uniform(0.0, 1.0);
    n.rx = rng.uniform(0.06, 0.08);
    n.ry = n.rx * rng.uniform(0.6, 1.0);
    n.angle = rng.uniform(0.0, std::numbers::pi);
    n.color = {0.36 + rng.uniform(-0.06, 0.06), 0.18 + rng.uniform(-0.05, 0.05), 0.52 + rng.uniform(-0.06, 0.06)};
    s.nuclei.push_back(n);
  }
  return s;
}

// Scene colour at continuous coordinates (u, v) in [0,1]^2.
inline std::array<double, 3> shade(const SceneRecord& s, double u, double v) {
  double tex = 0;
  for (const TextureWave& w : s.texture) tex += w.amplitude * std::sin(2 * std::numbers::pi * (w.fx * u + w.fy * v) + w.phase);
  std::array<double, 3> c = {s.background[0] + tex, s.background[1] + 1.4 * tex, s.background[2] + 0.8 * tex};
  for (const Nucleus& n : s.nuclei) {
    const double du = u - n.cx, dv = v - n.cy;
    const double ca = std::cos(n.angle), sa = std::sin(n.angle);
    const double a = (ca * du + sa * dv) / n.rx;
    const double b = (-sa * du + ca * dv) / n.ry;
    const double r = std::sqrt(a * a + b * b);
    if (r >= 1.0) continue;
    // soft rim, darker core
    const double w = std::clamp((1.0 - r) / 0.35, 0.0, 1.0);
    const double core = 1.0 - 0.25 * (1.0 - r);
    for (int ch = 0; ch < 3; ++ch) c[ch] = (1 - w) * c[ch] + w * n.color[ch] * core;
  }
  for (double& x : c) x = std::clamp(x, 0.0, 1.0);
  return c;
}

inline Patch render(const SceneRecord& s, std::size_t resolution) {
  if (resolution == 0) throw ContractError("resolution must be positive");
  Patch p(resolution, resolution);
  for (std::size_t y = 0; y < resolution; ++y) {
    for (std::size_t x = 0; x < resolution; ++x) {
      const auto c = shade(s, (double(x) + 0.5) / double(resolution), (double(y) + 0.5) / double(resolution));
      for (std::size_t ch = 0; ch < 3; ++ch) p.at(y, x, ch) = static_cast<float>(c[ch]);
    }
  }
  return p;
}

inline Patch synth_patch(std::uint64_t seed, int class_label, std::size_t resolution) {
  if (resolution != 32 && resolution != 64) throw ContractError("synthetic patches are rendered at 32 or 64 px");
  return render(synth_scene(seed, class_label), resolution);
}

}  // namespace latentaug::patchlab

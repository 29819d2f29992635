#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "latentaug/core/binary_io.hpp"
#include "latentaug/core/error.hpp"

namespace latentaug::patchlab {

/// An RGB image with intensities in [0, 1], stored row-major with
/// interleaved channels (y, x, c).
class Patch {
 public:
  static constexpr std::size_t kChannels = 3;

  Patch() = default;
  Patch(std::size_t height, std::size_t width, float fill = 0.0f)
      : height_(height), width_(width), pixels_(height * width * kChannels, fill) {
    if (height == 0 || width == 0) throw DimensionError("patch dimensions must be positive");
  }
  Patch(std::size_t height, std::size_t width, std::vector<float> pixels)
      : height_(height), width_(width), pixels_(std::move(pixels)) {
    if (height == 0 || width == 0) throw DimensionError("patch dimensions must be positive");
    if (pixels_.size() != height * width * kChannels) throw DimensionError("patch pixel count does not match H*W*3");
  }

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return pixels_.size(); }

  float& at(std::size_t y, std::size_t x, std::size_t c) { return pixels_[(y * width_ + x) * kChannels + c]; }
  float at(std::size_t y, std::size_t x, std::size_t c) const { return pixels_[(y * width_ + x) * kChannels + c]; }

  std::span<float> pixels() { return pixels_; }
  std::span<const float> pixels() const { return pixels_; }

  void clamp() {
    for (float& v : pixels_) v = std::clamp(v, 0.0f, 1.0f);
  }

  friend bool operator==(const Patch&, const Patch&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<float> pixels_;
};

inline float max_abs_diff(const Patch& a, const Patch& b) {
  if (a.height() != b.height() || a.width() != b.width()) throw DimensionError("patch shapes differ");
  float m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.pixels()[i] - b.pixels()[i]));
  return m;
}

// ---- "LAPX" serialization -------------------------------------------------

inline constexpr std::uint32_t kPatchFormatVersion = 1;

inline void write_patch(io::Writer& w, const Patch& p) {
  w.magic("LAPX");
  w.u32(kPatchFormatVersion);
  w.u32(static_cast<std::uint32_t>(p.height()));
  w.u32(static_cast<std::uint32_t>(p.width()));
  for (float v : p.pixels()) w.f32(v);
}

inline Patch read_patch(io::Reader& r) {
  r.expect_magic("LAPX");
  r.expect_version(kPatchFormatVersion);
  const std::size_t at = r.offset();
  const std::uint32_t h = r.u32();
  const std::uint32_t w = r.u32();
  if (h == 0 || w == 0) throw FormatError("patch dimensions must be positive", at);
  const std::size_t n = std::size_t(h) * w * Patch::kChannels;
  r.require_available(n * sizeof(float), "patch pixels");
  return Patch(h, w, r.f32_array<float>(n));
}

inline void save_patch(const std::filesystem::path& path, const Patch& p) {
  io::Writer w;
  write_patch(w, p);
  w.save(path);
}

inline Patch load_patch(const std::filesystem::path& path) {
  io::Reader r = io::Reader::from_file(path);
  Patch p = read_patch(r);
  r.expect_end();
  return p;
}

}  // namespace latentaug::patchlab

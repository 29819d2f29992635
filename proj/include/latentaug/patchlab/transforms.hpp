#pragma once

// The image-space transformation catalog: twelve parameterized transforms,
// their parameter encodings (the generator's conditioning input), and their
// designated identity points.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "latentaug/core/error.hpp"
#include "latentaug/patchlab/patch.hpp"

namespace latentaug::patchlab {

enum class TransformKind : std::size_t {
  kCrop,
  kDilation,
  kErosion,
  kBlur,
  kBrightness,
  kContrast,
  kSaturation,
  kHue,
  kHed,
  kFlip,
  kRotate,
  kGamma,
};

inline constexpr std::size_t kNumKinds = 12;

inline constexpr std::array<TransformKind, kNumKinds> kAllKinds = {
    TransformKind::kCrop,     TransformKind::kDilation,   TransformKind::kErosion, TransformKind::kBlur,
    TransformKind::kBrightness, TransformKind::kContrast, TransformKind::kSaturation, TransformKind::kHue,
    TransformKind::kHed,      TransformKind::kFlip,       TransformKind::kRotate,  TransformKind::kGamma,
};

/// Static description of one transform kind.
///
/// Continuous kinds carry `param_count` real values in [lo, hi] and encode
/// them affinely as (value - centre) / half_width. Discrete kinds carry one
/// category index; index `categories` is the added identity slot, and the
/// encoding is one-hot over categories + 1 slots.
struct KindSpec {
  TransformKind kind;
  std::string_view name;
  bool discrete;
  std::size_t param_count;
  std::size_t categories;  // discrete only, excluding the identity slot
  double lo, hi;           // continuous only
  double identity;         // continuous identity value
  double centre;
  double half_width;

  std::size_t encoded_dim() const { return discrete ? categories + 1 : param_count; }
};

inline constexpr std::array<KindSpec, kNumKinds> kKindSpecs = {{
    {TransformKind::kCrop, "crop", true, 1, 5, 0, 0, 0, 0, 0},
    {TransformKind::kDilation, "dilation", true, 1, 1, 0, 0, 0, 0, 0},
    {TransformKind::kErosion, "erosion", true, 1, 1, 0, 0, 0, 0, 0},
    {TransformKind::kBlur, "blur", true, 1, 1, 0, 0, 0, 0, 0},
    {TransformKind::kBrightness, "brightness", false, 1, 0, 0.5, 1.5, 1.0, 1.0, 0.5},
    {TransformKind::kContrast, "contrast", false, 1, 0, 0.5, 1.5, 1.0, 1.0, 0.5},
    {TransformKind::kSaturation, "saturation", false, 1, 0, 0.5, 1.5, 1.0, 1.0, 0.5},
    {TransformKind::kHue, "hue", false, 1, 0, -0.5, 0.5, 0.0, 0.0, 0.5},
    {TransformKind::kHed, "hed", false, 6, 0, -0.05, 0.05, 0.0, 0.0, 0.05},
    {TransformKind::kFlip, "flip", true, 1, 2, 0, 0, 0, 0, 0},
    {TransformKind::kRotate, "rotate", true, 1, 3, 0, 0, 0, 0, 0},
    {TransformKind::kGamma, "gamma", false, 1, 0, 0.5, 1.5, 1.0, 1.0, 0.5},
}};

inline const KindSpec& spec(TransformKind k) { return kKindSpecs[static_cast<std::size_t>(k)]; }
inline std::string_view kind_name(TransformKind k) { return spec(k).name; }

inline std::optional<TransformKind> kind_from_name(std::string_view name) {
  for (const KindSpec& s : kKindSpecs)
    if (s.name == name) return s.kind;
  return std::nullopt;
}

enum class CropPosition : std::size_t { kTopLeft, kTopRight, kBottomLeft, kBottomRight, kCenter };
enum class FlipAxis : std::size_t { kHorizontal, kVertical };

/// One transform with its raw parameter point.
struct TransformStep {
  TransformKind kind = TransformKind::kHue;
  std::vector<double> param;

  friend bool operator==(const TransformStep&, const TransformStep&) = default;

  // Throws ParameterError naming the kind and its range.
  void validate() const {
    const KindSpec& s = spec(kind);
    if (param.size() != s.param_count) {
      throw ParameterError(std::string(s.name) + ": expected " + std::to_string(s.param_count) + " parameter(s), got " +
                           std::to_string(param.size()));
    }
    if (s.discrete) {
      const double v = param[0];
      if (!(v >= 0 && v <= double(s.categories)) || v != std::floor(v)) {
        throw ParameterError(std::string(s.name) + ": category " + std::to_string(v) + " outside {0.." +
                             std::to_string(s.categories) + "}");
      }
    } else {
      for (double v : param) {
        if (!(v >= s.lo && v <= s.hi)) {
          throw ParameterError(std::string(s.name) + ": parameter " + std::to_string(v) + " outside [" +
                               std::to_string(s.lo) + ", " + std::to_string(s.hi) + "]");
        }
      }
    }
  }

  bool is_identity() const {
    const KindSpec& s = spec(kind);
    if (s.discrete) return param[0] == double(s.categories);
    return std::all_of(param.begin(), param.end(), [&](double v) { return v == s.identity; });
  }

  std::size_t category() const { return static_cast<std::size_t>(param.at(0)); }

  std::vector<double> encode() const {
    const KindSpec& s = spec(kind);
    std::vector<double> e(s.encoded_dim(), 0.0);
    if (s.discrete) {
      e[category()] = 1.0;
    } else {
      for (std::size_t i = 0; i < param.size(); ++i) e[i] = (param[i] - s.centre) / s.half_width;
    }
    return e;
  }

  static TransformStep decode(TransformKind kind, std::span<const double> encoded) {
    const KindSpec& s = spec(kind);
    if (encoded.size() != s.encoded_dim()) throw DimensionError(std::string(s.name) + ": wrong encoded width");
    TransformStep st{kind, {}};
    if (s.discrete) {
      const auto it = std::max_element(encoded.begin(), encoded.end());
      st.param = {double(it - encoded.begin())};
    } else {
      for (double e : encoded) st.param.push_back(s.centre + e * s.half_width);
    }
    return st;
  }

  std::string describe() const {
    std::string out(kind_name(kind));
    out += '(';
    for (std::size_t i = 0; i < param.size(); ++i) {
      if (i) out += ' ';
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%g", param[i]);
      out += buf;
    }
    return out + ')';
  }

  // ---- constructors for each kind ----
  static TransformStep identity(TransformKind k) {
    const KindSpec& s = spec(k);
    if (s.discrete) return {k, {double(s.categories)}};
    return {k, std::vector<double>(s.param_count, s.identity)};
  }
  static TransformStep crop(CropPosition p) { return {TransformKind::kCrop, {double(p)}}; }
  static TransformStep dilation() { return {TransformKind::kDilation, {0.0}}; }
  static TransformStep erosion() { return {TransformKind::kErosion, {0.0}}; }
  static TransformStep blur() { return {TransformKind::kBlur, {0.0}}; }
  static TransformStep brightness(double b) { return {TransformKind::kBrightness, {b}}; }
  static TransformStep contrast(double c) { return {TransformKind::kContrast, {c}}; }
  static TransformStep saturation(double s) { return {TransformKind::kSaturation, {s}}; }
  static TransformStep hue(double h) { return {TransformKind::kHue, {h}}; }
  static TransformStep hed(std::array<double, 6> p) { return {TransformKind::kHed, {p.begin(), p.end()}}; }
  static TransformStep flip(FlipAxis a) { return {TransformKind::kFlip, {double(a)}}; }
  // Counter-clockwise rotation by 90, 180 or 270 degrees.
  static TransformStep rotate(int degrees) {
    if (degrees != 90 && degrees != 180 && degrees != 270) {
      throw ParameterError("rotate: angle must be 90, 180 or 270 degrees");
    }
    return {TransformKind::kRotate, {double(degrees / 90 - 1)}};
  }
  static TransformStep gamma(double g) { return {TransformKind::kGamma, {g}}; }
};

/// An ordered list of steps, applied left to right.
struct TransformSequence {
  std::vector<TransformStep> steps;

  std::size_t size() const { return steps.size(); }
  friend bool operator==(const TransformSequence&, const TransformSequence&) = default;

  // Image-space composition is defined for any non-empty list of valid steps.
  void validate() const {
    if (steps.empty()) throw ParameterError("transform sequence is empty");
    for (const TransformStep& s : steps) s.validate();
  }

  // Sampled and generator-conditioning sequences additionally use each kind
  // at most once.
  void validate_distinct() const {
    validate();
    std::array<bool, kNumKinds> seen{};
    for (const TransformStep& s : steps) {
      const auto idx = static_cast<std::size_t>(s.kind);
      if (seen[idx]) throw ParameterError("transform sequence repeats kind " + std::string(kind_name(s.kind)));
      seen[idx] = true;
    }
  }

  std::string describe() const {
    std::string out;
    for (const TransformStep& s : steps) {
      if (!out.empty()) out += " > ";
      out += s.describe();
    }
    return out;
  }
};

inline TransformSequence identity_sequence(const TransformSequence& seq) {
  TransformSequence out;
  for (const TransformStep& s : seq.steps) out.steps.push_back(TransformStep::identity(s.kind));
  return out;
}

// ---- kernels ---------------------------------------------------------------

namespace detail {

inline float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

inline double gray(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

template <class F>
Patch per_pixel(const Patch& in, F f) {
  Patch out(in.height(), in.width());
  auto src = in.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); i += 3) {
    std::array<double, 3> c = {src[i], src[i + 1], src[i + 2]};
    c = f(c);
    for (int k = 0; k < 3; ++k) dst[i + k] = clamp01(c[k]);
  }
  return out;
}

inline std::array<double, 3> rgb_to_hsv(std::array<double, 3> c) {
  const double mx = std::max({c[0], c[1], c[2]});
  const double mn = std::min({c[0], c[1], c[2]});
  const double delta = mx - mn;
  double h = 0;
  if (delta > 0) {
    if (mx == c[0]) {
      h = std::fmod((c[1] - c[2]) / delta, 6.0);
    } else if (mx == c[1]) {
      h = (c[2] - c[0]) / delta + 2.0;
    } else {
      h = (c[0] - c[1]) / delta + 4.0;
    }
    h /= 6.0;
    if (h < 0) h += 1.0;
  }
  const double s = mx > 0 ? delta / mx : 0.0;
  return {h, s, mx};
}

inline std::array<double, 3> hsv_to_rgb(std::array<double, 3> hsv) {
  const double h6 = hsv[0] * 6.0;
  const double s = hsv[1], v = hsv[2];
  const double sector = std::floor(h6);
  const double f = h6 - sector;
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (static_cast<int>(sector) % 6) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

// H&E-DAB stain vectors (rows: haematoxylin, eosin, DAB) in optical density.
inline constexpr std::array<std::array<double, 3>, 3> kRgbFromHed = {{
    {0.65, 0.70, 0.29},
    {0.07, 0.99, 0.11},
    {0.27, 0.57, 0.78},
}};

inline std::array<std::array<double, 3>, 3> invert3(const std::array<std::array<double, 3>, 3>& m) {
  const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  std::array<std::array<double, 3>, 3> r{};
  r[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
  r[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
  r[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
  r[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
  r[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
  r[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
  r[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
  r[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
  r[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
  return r;
}

inline const std::array<std::array<double, 3>, 3>& hed_from_rgb() {
  static const auto inv = invert3(kRgbFromHed);
  return inv;
}

// Row vector times 3x3 matrix.
inline std::array<double, 3> row_times(const std::array<double, 3>& v, const std::array<std::array<double, 3>, 3>& m) {
  return {v[0] * m[0][0] + v[1] * m[1][0] + v[2] * m[2][0], v[0] * m[0][1] + v[1] * m[1][1] + v[2] * m[2][1],
          v[0] * m[0][2] + v[1] * m[1][2] + v[2] * m[2][2]};
}

inline Patch hed_perturb(const Patch& in, std::span<const double> p) {
  // p = (sigma_h, sigma_e, sigma_d, beta_h, beta_e, beta_d)
  constexpr double kOffset = 1e-6;
  const auto& to_hed = hed_from_rgb();
  return per_pixel(in, [&](std::array<double, 3> c) {
    std::array<double, 3> od;
    for (int k = 0; k < 3; ++k) od[k] = -std::log10(c[k] + kOffset);
    std::array<double, 3> stains = row_times(od, to_hed);
    for (int k = 0; k < 3; ++k) stains[k] = (1.0 + p[k]) * stains[k] + p[3 + k];
    const std::array<double, 3> od2 = row_times(stains, kRgbFromHed);
    std::array<double, 3> out;
    for (int k = 0; k < 3; ++k) out[k] = std::pow(10.0, -od2[k]) - kOffset;
    return out;
  });
}

inline Patch flip(const Patch& in, FlipAxis axis) {
  Patch out(in.height(), in.width());
  const std::size_t h = in.height(), w = in.width();
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        out.at(y, x, c) = axis == FlipAxis::kHorizontal ? in.at(y, w - 1 - x, c) : in.at(h - 1 - y, x, c);
  return out;
}

// Counter-clockwise quarter turns.
inline Patch rotate_quarters(const Patch& in, int quarters) {
  if (in.height() != in.width()) throw ParameterError("rotate: requires a square patch");
  const std::size_t n = in.height();
  Patch out(n, n);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        float v = 0;
        switch (quarters) {
          case 1: v = in.at(x, n - 1 - y, c); break;
          case 2: v = in.at(n - 1 - y, n - 1 - x, c); break;
          default: v = in.at(n - 1 - x, y, c); break;
        }
        out.at(y, x, c) = v;
      }
  return out;
}

// 4x4 window anchored at the top-left pixel, edges replicated.
template <class Reduce>
Patch morphology(const Patch& in, Reduce reduce) {
  constexpr std::size_t kSide = 4;
  const std::size_t h = in.height(), w = in.width();
  Patch out(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        float acc = in.at(y, x, c);
        for (std::size_t dy = 0; dy < kSide; ++dy)
          for (std::size_t dx = 0; dx < kSide; ++dx)
            acc = reduce(acc, in.at(std::min(y + dy, h - 1), std::min(x + dx, w - 1), c));
        out.at(y, x, c) = acc;
      }
  return out;
}

inline std::size_t blur_kernel_side(std::size_t patch_side) {
  // 15x15 at 256 px, scaled with the patch and rounded to the nearest odd size
  const double scaled = 15.0 * double(patch_side) / 256.0;
  const auto k = static_cast<std::size_t>(2 * std::llround((scaled - 1.0) / 2.0) + 1);
  return std::max<std::size_t>(3, k);
}

inline Patch gaussian_blur(const Patch& in) {
  const std::size_t side = blur_kernel_side(std::min(in.height(), in.width()));
  const double sigma = double(side) / 6.0;
  const auto r = static_cast<std::ptrdiff_t>(side / 2);
  std::vector<double> k(side);
  double total = 0;
  for (std::ptrdiff_t i = -r; i <= r; ++i) total += k[i + r] = std::exp(-double(i * i) / (2 * sigma * sigma));
  for (double& v : k) v /= total;
  const auto h = static_cast<std::ptrdiff_t>(in.height()), w = static_cast<std::ptrdiff_t>(in.width());
  auto clampi = [](std::ptrdiff_t v, std::ptrdiff_t n) { return std::clamp<std::ptrdiff_t>(v, 0, n - 1); };
  std::vector<double> tmp(in.size());
  for (std::ptrdiff_t y = 0; y < h; ++y)
    for (std::ptrdiff_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0;
        for (std::ptrdiff_t i = -r; i <= r; ++i) acc += k[i + r] * in.at(y, clampi(x + i, w), c);
        tmp[(y * w + x) * 3 + c] = acc;
      }
  Patch out(in.height(), in.width());
  for (std::ptrdiff_t y = 0; y < h; ++y)
    for (std::ptrdiff_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0;
        for (std::ptrdiff_t i = -r; i <= r; ++i) acc += k[i + r] * tmp[(clampi(y + i, h) * w + x) * 3 + c];
        out.at(y, x, c) = clamp01(acc);
      }
  return out;
}

// Bilinear resize with half-pixel centres and clamped borders.
inline Patch resize_bilinear(const Patch& in, std::size_t y0, std::size_t x0, std::size_t src_h, std::size_t src_w,
                             std::size_t out_h, std::size_t out_w) {
  Patch out(out_h, out_w);
  const double sy = double(src_h) / double(out_h), sx = double(src_w) / double(out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const double fy = std::clamp((double(y) + 0.5) * sy - 0.5, 0.0, double(src_h - 1));
    const auto iy = static_cast<std::size_t>(fy);
    const std::size_t iy1 = std::min(iy + 1, src_h - 1);
    const double ty = fy - double(iy);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double fx = std::clamp((double(x) + 0.5) * sx - 0.5, 0.0, double(src_w - 1));
      const auto ix = static_cast<std::size_t>(fx);
      const std::size_t ix1 = std::min(ix + 1, src_w - 1);
      const double tx = fx - double(ix);
      for (std::size_t c = 0; c < 3; ++c) {
        const double a = in.at(y0 + iy, x0 + ix, c), b = in.at(y0 + iy, x0 + ix1, c);
        const double d = in.at(y0 + iy1, x0 + ix, c), e = in.at(y0 + iy1, x0 + ix1, c);
        out.at(y, x, c) = clamp01((1 - ty) * ((1 - tx) * a + tx * b) + ty * ((1 - tx) * d + tx * e));
      }
    }
  }
  return out;
}

inline Patch crop_resize(const Patch& in, CropPosition pos) {
  const std::size_t h = in.height(), w = in.width();
  const std::size_t side = std::min(h, w) / 2;
  std::size_t y0 = 0, x0 = 0;
  switch (pos) {
    case CropPosition::kTopLeft: break;
    case CropPosition::kTopRight: x0 = w - side; break;
    case CropPosition::kBottomLeft: y0 = h - side; break;
    case CropPosition::kBottomRight: y0 = h - side; x0 = w - side; break;
    case CropPosition::kCenter: y0 = (h - side) / 2; x0 = (w - side) / 2; break;
  }
  return resize_bilinear(in, y0, x0, side, side, h, w);
}

}  // namespace detail

/// Applies one step. The identity parameter point returns an exact copy for
/// every kind.
inline Patch apply_transform(const Patch& p, const TransformStep& step) {
  step.validate();
  if (step.is_identity()) return p;
  const double a = step.param[0];
  switch (step.kind) {
    case TransformKind::kCrop:
      return detail::crop_resize(p, static_cast<CropPosition>(step.category()));
    case TransformKind::kDilation:
      return detail::morphology(p, [](float x, float y) { return std::max(x, y); });
    case TransformKind::kErosion:
      return detail::morphology(p, [](float x, float y) { return std::min(x, y); });
    case TransformKind::kBlur:
      return detail::gaussian_blur(p);
    case TransformKind::kBrightness:
      return detail::per_pixel(p, [a](std::array<double, 3> c) {
        for (double& v : c) v *= a;
        return c;
      });
    case TransformKind::kContrast: {
      double mean = 0;
      auto px = p.pixels();
      for (std::size_t i = 0; i < px.size(); i += 3) mean += detail::gray(px[i], px[i + 1], px[i + 2]);
      mean /= double(px.size() / 3);
      return detail::per_pixel(p, [a, mean](std::array<double, 3> c) {
        for (double& v : c) v = mean + a * (v - mean);
        return c;
      });
    }
    case TransformKind::kSaturation:
      return detail::per_pixel(p, [a](std::array<double, 3> c) {
        const double g = detail::gray(c[0], c[1], c[2]);
        for (double& v : c) v = g + a * (v - g);
        return c;
      });
    case TransformKind::kHue:
      return detail::per_pixel(p, [a](std::array<double, 3> c) {
        auto hsv = detail::rgb_to_hsv(c);
        hsv[0] = hsv[0] + a;
        hsv[0] -= std::floor(hsv[0]);
        return detail::hsv_to_rgb(hsv);
      });
    case TransformKind::kHed:
      return detail::hed_perturb(p, step.param);
    case TransformKind::kFlip:
      return detail::flip(p, static_cast<FlipAxis>(step.category()));
    case TransformKind::kRotate:
      return detail::rotate_quarters(p, static_cast<int>(step.category()) + 1);
    case TransformKind::kGamma:
      return detail::per_pixel(p, [a](std::array<double, 3> c) {
        for (double& v : c) v = std::pow(v, a);
        return c;
      });
  }
  throw ContractError("unknown transform kind");
}

inline Patch apply_sequence(const Patch& p, const TransformSequence& seq) {
  seq.validate();
  Patch out = p;
  for (const TransformStep& s : seq.steps) out = apply_transform(out, s);
  return out;
}

}  // namespace latentaug::patchlab

#pragma once

// Synthetic slides, their bags of patch embeddings, and leakage-safe splits.
//
// A slide owns M patches. Positive slides draw 20-60% class-1 patches,
// negative slides 0-10%; the slide label is whether that fraction exceeds
// the threshold. Every slide also carries a stain: a short sequence of
// colour transforms applied to all of its patches, so slide-level colour
// variation has to be ignored by the MIL model.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <set>
#include <vector>

#include "latentaug/core/binary_io.hpp"
#include "latentaug/core/error.hpp"
#include "latentaug/core/rng.hpp"
#include "latentaug/encoder/toy_encoder.hpp"
#include "latentaug/patchlab/sampler.hpp"
#include "latentaug/patchlab/synth.hpp"
#include "latentaug/tensorcore/tensor.hpp"

namespace latentaug::mil {

using patchlab::Patch;
using patchlab::TransformSequence;
using tensorcore::Tensor;

inline constexpr double kLabelThreshold = 0.15;
inline constexpr std::size_t kMinPatches = 20;
inline constexpr std::size_t kMaxPatches = 200;

// Globally unique patch id: slide id in the high bits, index in the low.
inline std::uint64_t patch_id(std::uint64_t slide, std::size_t index) { return (slide << 16) | index; }

struct SlideSpec {
  std::uint64_t id = 0;
  int label = 0;
  double positive_fraction = 0;  // fraction of class-1 patches actually drawn
  double threshold = kLabelThreshold;
  std::vector<int> patch_classes;
  TransformSequence stain;
  std::uint64_t seed = 0;

  std::size_t size() const { return patch_classes.size(); }
};

struct SlideConfig {
  double stain_strength = 0.5;  // fraction of each colour kind's range used for stains
  std::size_t stain_k_max = 3;
};

inline const std::vector<patchlab::TransformKind>& stain_kinds() {
  using K = patchlab::TransformKind;
  static const std::vector<K> kinds = {K::kBrightness, K::kContrast, K::kSaturation, K::kHue, K::kHed, K::kGamma};
  return kinds;
}

/// Colour-only sequence with parameters pulled towards identity by
/// `strength`.
inline TransformSequence sample_stain(Rng& rng, const SlideConfig& cfg) {
  patchlab::SamplerConfig sc;
  sc.k_max = cfg.stain_k_max;
  sc.kinds = stain_kinds();
  TransformSequence s = patchlab::sample_sequence(rng, sc);
  for (auto& step : s.steps) {
    const auto& ks = patchlab::spec(step.kind);
    for (double& p : step.param) p = ks.identity + cfg.stain_strength * (p - ks.identity);
  }
  return s;
}

inline SlideSpec make_slide(std::uint64_t root_seed, std::uint64_t id, const SlideConfig& cfg = {}) {
  Rng rng(derive_seed(root_seed, {0x511de, id}));
  SlideSpec s;
  s.id = id;
  s.seed = rng.next_u64();
  const bool positive = rng.bernoulli(0.5);
  const auto m = static_cast<std::size_t>(rng.uniform_int(kMinPatches, kMaxPatches));
  const double rate = positive ? rng.uniform(0.20, 0.60) : rng.uniform(0.0, 0.10);
  const auto n_pos = static_cast<std::size_t>(std::llround(rate * double(m)));
  s.patch_classes.assign(m, 0);
  std::fill_n(s.patch_classes.begin(), n_pos, 1);
  rng.shuffle(s.patch_classes);
  s.positive_fraction = double(n_pos) / double(m);
  s.label = s.positive_fraction > s.threshold ? 1 : 0;
  s.stain = sample_stain(rng, cfg);
  return s;
}

inline Patch render_patch(const SlideSpec& s, std::size_t index, std::size_t resolution = 32) {
  const Patch raw = patchlab::synth_patch(derive_seed(s.seed, {index}), s.patch_classes.at(index), resolution);
  return patchlab::apply_sequence(raw, s.stain);
}

inline std::vector<Patch> render_slide(const SlideSpec& s, std::size_t resolution = 32) {
  std::vector<Patch> out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out.push_back(render_patch(s, i, resolution));
  return out;
}

struct Bag {
  Tensor embeddings;  // [M, d]
  int label = 0;
  std::uint64_t slide_id = 0;
  double positive_fraction = 0;
  double threshold = kLabelThreshold;

  std::size_t size() const { return embeddings.empty() ? 0 : embeddings.dim(0); }
  std::size_t dim() const { return embeddings.empty() ? 0 : embeddings.dim(1); }
  std::vector<std::uint64_t> patch_ids() const {
    std::vector<std::uint64_t> ids(size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = patch_id(slide_id, i);
    return ids;
  }
};

/// Embeddings are stored at 32-bit precision, matching the bag file.
inline Bag encode_slide(const SlideSpec& s, const encoder::ToyEncoder& enc, std::size_t resolution = 32) {
  const auto patches = render_slide(s, resolution);
  Bag b;
  b.embeddings = enc.encode_batch(patches);
  for (double& v : b.embeddings.data()) v = double(float(v));
  b.label = s.label;
  b.slide_id = s.id;
  b.positive_fraction = s.positive_fraction;
  b.threshold = s.threshold;
  return b;
}

// ---- "LBAG" serialization ----
inline constexpr std::uint32_t kBagFormatVersion = 1;

inline void write_bag(io::Writer& w, const Bag& b) {
  w.magic("LBAG");
  w.u32(kBagFormatVersion);
  w.u32(static_cast<std::uint32_t>(b.size()));
  w.u32(static_cast<std::uint32_t>(b.dim()));
  w.u32(static_cast<std::uint32_t>(b.label));
  w.f32_array<double>(b.embeddings.data());
}

inline Bag read_bag(io::Reader& r) {
  r.expect_magic("LBAG");
  r.expect_version(kBagFormatVersion);
  const std::size_t at = r.offset();
  const std::size_t m = r.u32(), d = r.u32();
  const std::uint32_t label = r.u32();
  if (m == 0 || d == 0) throw FormatError("bag has zero instances or zero width", at);
  if (label > 1) throw FormatError("bag label must be 0 or 1", at + 8);
  r.require_available(m * d * sizeof(float), "bag embeddings");
  Bag b;
  b.embeddings = Tensor({m, d}, r.f32_array<double>(m * d));
  b.label = int(label);
  return b;
}

inline void save_bag(const std::filesystem::path& path, const Bag& b) {
  io::Writer w;
  write_bag(w, b);
  w.save(path);
}

inline Bag load_bag(const std::filesystem::path& path) {
  io::Reader r = io::Reader::from_file(path);
  Bag b = read_bag(r);
  r.expect_end();
  return b;
}

// ---- splits ----

inline constexpr std::size_t kFolds = 5;

struct Fold {
  std::vector<std::uint64_t> train;  // bootstrap draw from the generator slides; may repeat
  std::vector<std::uint64_t> val;
  std::vector<std::uint64_t> test;

  friend bool operator==(const Fold&, const Fold&) = default;
};

struct SplitPlan {
  std::vector<std::uint64_t> generator_slides;  // 70%
  std::vector<std::uint64_t> heldout_slides;    // 30%
  std::vector<Fold> folds;

  friend bool operator==(const SplitPlan&, const SplitPlan&) = default;
};

/// Slides 0..n_bags-1: 70/30 split, five bootstrap training pools from the
/// 70%, five shuffle-splits of the 30% into halves for validation and test.
inline SplitPlan make_splits(std::uint64_t seed, std::size_t n_bags) {
  if (n_bags < 50) throw ContractError("make_splits needs at least 50 bags, got " + std::to_string(n_bags));
  Rng rng(derive_seed(seed, {0x5e1175}));
  std::vector<std::uint64_t> ids(n_bags);
  std::iota(ids.begin(), ids.end(), 0);
  rng.shuffle(ids);
  const auto n_gen = static_cast<std::size_t>(std::llround(0.7 * double(n_bags)));
  SplitPlan p;
  p.generator_slides.assign(ids.begin(), ids.begin() + n_gen);
  p.heldout_slides.assign(ids.begin() + n_gen, ids.end());
  for (std::size_t b = 0; b < kFolds; ++b) {
    Fold f;
    for (std::size_t i = 0; i < n_gen; ++i) f.train.push_back(p.generator_slides[rng.index(n_gen)]);
    std::vector<std::uint64_t> h = p.heldout_slides;
    rng.shuffle(h);
    const std::size_t n_val = h.size() / 2;
    f.val.assign(h.begin(), h.begin() + n_val);
    f.test.assign(h.begin() + n_val, h.end());
    p.folds.push_back(std::move(f));
  }
  return p;
}

/// Patch ids across `slides` (each slide counted once).
inline std::set<std::uint64_t> patch_ids_of(std::span<const std::uint64_t> slides, std::span<const SlideSpec> all) {
  std::set<std::uint64_t> out;
  for (std::uint64_t s : std::set<std::uint64_t>(slides.begin(), slides.end())) {
    for (std::size_t i = 0; i < all[s].size(); ++i) out.insert(patch_id(s, i));
  }
  return out;
}

}  // namespace latentaug::mil

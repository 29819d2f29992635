#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "latentaug/core/error.hpp"
#include "latentaug/core/rng.hpp"
#include "latentaug/encoder/invariance.hpp"
#include "latentaug/generator/forward.hpp"
#include "latentaug/mil/bags.hpp"

namespace latentaug::mil {

enum class Strategy { kBase, kNoise, kInst, kWsi };

inline constexpr Strategy kAllStrategies[] = {Strategy::kBase, Strategy::kNoise, Strategy::kInst, Strategy::kWsi};

inline std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kBase: return "base";
    case Strategy::kNoise: return "noise";
    case Strategy::kInst: return "inst";
    case Strategy::kWsi: return "wsi";
  }
  return "?";
}

inline std::optional<Strategy> strategy_from_name(std::string_view n) {
  for (Strategy s : kAllStrategies)
    if (strategy_name(s) == n) return s;
  return std::nullopt;
}

inline bool needs_generator(Strategy s) { return s == Strategy::kInst || s == Strategy::kWsi; }

struct AugmentContext {
  const generator::GeneratorModel* generator = nullptr;
  encoder::SequenceSampler sampler = encoder::catalog_sampler();
  double p_aug = 0.75;
  double noise_sigma = 0.0;  // per-coordinate standard deviation for Noise
};

struct AugmentedBag {
  Tensor embeddings;
  bool applied = false;
  std::vector<TransformSequence> sequences;  // per instance, filled for Inst/WSI when applied
};

/// With probability 1 - p_aug the bag is returned unchanged; otherwise Inst
/// gives each instance its own sequence, WSI one sequence for the whole bag,
/// and Noise adds isotropic Gaussian noise. Base never changes the bag.
inline AugmentedBag augment_bag(const Bag& bag, Strategy strategy, const AugmentContext& ctx, Rng& rng) {
  AugmentedBag out{bag.embeddings, false, {}};
  if (strategy == Strategy::kBase) return out;
  if (!rng.bernoulli(ctx.p_aug)) return out;
  out.applied = true;
  const std::size_t m = bag.size();
  if (strategy == Strategy::kNoise) {
    for (double& v : out.embeddings.data()) v += rng.normal(0.0, ctx.noise_sigma);
    return out;
  }
  if (!ctx.generator) throw DependencyError("augmentation strategy " + std::string(strategy_name(strategy)) + " needs a generator");
  if (strategy == Strategy::kWsi) {
    out.sequences.assign(m, ctx.sampler(rng));
  } else {
    for (std::size_t i = 0; i < m; ++i) out.sequences.push_back(ctx.sampler(rng));
  }
  const tensorcore::Tensor32 z = bag.embeddings.cast<float>();
  const tensorcore::Tensor32 za =
      strategy == Strategy::kWsi ? generator::augment_batch(*ctx.generator, z, out.sequences.front())
                                 : generator::augment_batch(*ctx.generator, z, out.sequences);
  out.embeddings = za.cast<double>();
  return out;
}

// E||n|| for n ~ N(0, I_d).
inline double expected_gaussian_norm(std::size_t d) {
  return std::sqrt(2.0) * std::exp(std::lgamma((double(d) + 1) / 2) - std::lgamma(double(d) / 2));
}

struct NoiseCalibration {
  double generator_displacement = 0;  // mean ||z_hat - z|| over instance-wise augmentations
  double sigma = 0;
  double noise_displacement = 0;  // measured mean ||n|| at that sigma
  double relative_error() const { return std::abs(noise_displacement - generator_displacement) / generator_displacement; }
};

/// Matches the Noise strategy's mean per-row displacement to the generator's.
inline NoiseCalibration calibrate_noise(const std::vector<Bag>& bags, const generator::GeneratorModel& gen,
                                        const encoder::SequenceSampler& sampler, Rng& rng) {
  if (bags.empty()) throw ContractError("noise calibration needs bags");
  NoiseCalibration c;
  std::size_t rows = 0;
  for (const Bag& b : bags) {
    std::vector<TransformSequence> seqs;
    for (std::size_t i = 0; i < b.size(); ++i) seqs.push_back(sampler(rng));
    const tensorcore::Tensor32 za = generator::augment_batch(gen, b.embeddings.cast<float>(), seqs);
    const std::size_t d = b.dim();
    for (std::size_t i = 0; i < b.size(); ++i) {
      double s = 0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = double(za.at(i, j)) - b.embeddings.at(i, j);
        s += diff * diff;
      }
      c.generator_displacement += std::sqrt(s);
    }
    rows += b.size();
  }
  c.generator_displacement /= double(rows);
  const std::size_t d = bags.front().dim();
  c.sigma = c.generator_displacement / expected_gaussian_norm(d);
  double total = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const double n = rng.normal(0.0, c.sigma);
      s += n * n;
    }
    total += std::sqrt(s);
  }
  c.noise_displacement = total / double(rows);
  return c;
}

}  // namespace latentaug::mil

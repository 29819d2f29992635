#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "latentaug/core/error.hpp"
#include "latentaug/core/rng.hpp"
#include "latentaug/patchlab/transforms.hpp"

namespace latentaug::patchlab {

/// Draws one step of `kind` from its sampling range. Discrete kinds pick a
/// non-identity category uniformly; continuous parameters are uniform on
/// [lo, hi].
inline TransformStep sample_step(Rng& rng, TransformKind kind) {
  const KindSpec& s = spec(kind);
  TransformStep st{kind, {}};
  if (s.discrete) {
    st.param = {double(rng.index(s.categories))};
  } else {
    for (std::size_t i = 0; i < s.param_count; ++i) st.param.push_back(rng.uniform(s.lo, s.hi));
  }
  return st;
}

struct SamplerConfig {
  std::size_t k_max = 4;
  std::vector<TransformKind> kinds{kAllKinds.begin(), kAllKinds.end()};
};

/// K ~ Uniform{1..k_max}; K distinct kinds drawn without replacement, in
/// draw order; each parameter from its range.
inline TransformSequence sample_sequence(Rng& rng, const SamplerConfig& cfg) {
  if (cfg.k_max == 0 || cfg.k_max > kNumKinds) throw ContractError("k_max must be in 1..12");
  if (cfg.kinds.empty()) throw ContractError("sampler has no enabled transform kinds");
  const std::size_t k_cap = std::min(cfg.k_max, cfg.kinds.size());
  const auto k = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(k_cap)));
  std::vector<TransformKind> pool = cfg.kinds;
  TransformSequence seq;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.index(pool.size() - i);
    std::swap(pool[i], pool[j]);
    seq.steps.push_back(sample_step(rng, pool[i]));
  }
  return seq;
}

inline TransformSequence sample_sequence(Rng& rng, std::size_t k_max) {
  SamplerConfig cfg;
  cfg.k_max = k_max;
  return sample_sequence(rng, cfg);
}

}  // namespace latentaug::patchlab

#pragma once

#include <functional>
#include <span>
#include <vector>

#include "latentaug/core/error.hpp"
#include "latentaug/core/rng.hpp"
#include "latentaug/encoder/toy_encoder.hpp"
#include "latentaug/patchlab/sampler.hpp"

namespace latentaug::encoder {

using SequenceSampler = std::function<patchlab::TransformSequence(Rng&)>;

inline SequenceSampler catalog_sampler(patchlab::SamplerConfig cfg = {}) {
  return [cfg](Rng& rng) { return patchlab::sample_sequence(rng, cfg); };
}

/// cos(encode(x), encode(tau(x))) per patch, one sampled sequence each.
inline std::vector<double> invariance_cosines(const ToyEncoder& enc, std::span<const Patch> patches,
                                              const SequenceSampler& sampler, Rng& rng) {
  constexpr std::size_t kBlock = 256;
  std::vector<double> out;
  out.reserve(patches.size());
  for (std::size_t start = 0; start < patches.size(); start += kBlock) {
    const auto block = patches.subspan(start, std::min(kBlock, patches.size() - start));
    std::vector<Patch> aug;
    aug.reserve(block.size());
    for (const Patch& p : block) aug.push_back(patchlab::apply_sequence(p, sampler(rng)));
    const Tensor z = enc.encode_batch(block);
    const Tensor za = enc.encode_batch(aug);
    for (std::size_t i = 0; i < block.size(); ++i) out.push_back(tensorcore::cosine(z.row(i), za.row(i)));
  }
  return out;
}

inline double encoder_invariance(const ToyEncoder& enc, std::span<const Patch> patches, const SequenceSampler& sampler,
                                 Rng& rng) {
  if (patches.size() < 100) throw ContractError("encoder_invariance needs at least 100 patches");
  const auto c = invariance_cosines(enc, patches, sampler, rng);
  double s = 0;
  for (double v : c) s += v;
  return s / double(c.size());
}

}  // namespace latentaug::encoder

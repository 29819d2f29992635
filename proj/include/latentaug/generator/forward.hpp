#pragma once

// Generator forward pass. Embeddings are split into C chunk tokens; each
// block lets the chunk tokens cross-attend to the step tokens of their row's
// transformation sequence; the head maps the concatenated tokens back to d.
//
// The same template runs eagerly in double or float precision and on an
// autodiff tape.

#include <cmath>
#include <span>
#include <type_traits>
#include <vector>

#include "latentaug/core/error.hpp"
#include "latentaug/generator/model.hpp"
#include "latentaug/patchlab/transforms.hpp"
#include "latentaug/tensorcore/autodiff.hpp"
#include "latentaug/tensorcore/ops.hpp"

namespace latentaug::generator {

using patchlab::TransformSequence;
using tensorcore::AttentionLayout;
using tensorcore::BasicTensor;
using tensorcore::Tensor32;

/// Sinusoidal encoding for token positions 0..count-1, [count, width].
inline Tensor sinusoidal_pe(std::size_t count, std::size_t width) {
  Tensor pe({count, width});
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = 0; j < width; ++j) {
      const double freq = std::pow(10000.0, -double(2 * (j / 2)) / double(width));
      pe.at(i, j) = j % 2 == 0 ? std::sin(double(i) * freq) : std::cos(double(i) * freq);
    }
  return pe;
}

/// Contiguous split of `z` into C tokens [C, d/C], plus positional encoding
/// unless `add_pe` is false.
inline Tensor chunk(std::span<const double> z, std::size_t chunks, bool add_pe = true) {
  if (chunks == 0 || z.empty() || z.size() % chunks != 0) {
    throw DimensionError("chunk: d=" + std::to_string(z.size()) + " is not divisible by C=" + std::to_string(chunks));
  }
  const std::size_t w = z.size() / chunks;
  Tensor t({chunks, w}, z);
  if (add_pe) t = tensorcore::add(t, sinusoidal_pe(chunks, w));
  return t;
}

// Step-token inputs for a batch of sequences: one row per step holding the
// step's encoded parameters in its kind's column block, the order position
// of each step, and the attention layout tying rows to their steps.
struct StepBatch {
  Tensor encoded;  // [total steps, sum of encoded dims]
  std::vector<std::size_t> position;
  AttentionLayout layout;
};

inline std::size_t encoded_offset(patchlab::TransformKind kind) {
  std::size_t off = 0;
  for (std::size_t k = 0; k < std::size_t(kind); ++k) off += patchlab::kKindSpecs[k].encoded_dim();
  return off;
}

inline std::size_t encoded_total() { return encoded_offset(patchlab::TransformKind(patchlab::kNumKinds)); }

inline void check_sequence(const TransformSequence& seq, std::size_t k_max) {
  seq.validate();
  seq.validate_distinct();
  if (seq.size() > k_max) {
    throw CapacityError("sequence of " + std::to_string(seq.size()) + " steps exceeds k_max=" + std::to_string(k_max));
  }
}

/// `seqs` holds one sequence per row, or a single sequence shared by all
/// `rows`.
inline StepBatch make_step_batch(std::span<const TransformSequence> seqs, std::size_t rows, std::size_t chunks,
                                 std::size_t k_max) {
  if (seqs.size() != 1 && seqs.size() != rows) {
    throw DimensionError("augment: " + std::to_string(seqs.size()) + " sequences for " + std::to_string(rows) + " rows");
  }
  std::size_t total = 0;
  for (const auto& s : seqs) {
    check_sequence(s, k_max);
    total += s.size();
  }
  StepBatch b;
  b.encoded = Tensor({total, encoded_total()});
  std::size_t r = 0;
  for (const auto& s : seqs) {
    for (std::size_t k = 0; k < s.size(); ++k, ++r) {
      const auto e = s.steps[k].encode();
      std::copy(e.begin(), e.end(), b.encoded.ptr() + r * encoded_total() + encoded_offset(s.steps[k].kind));
      b.position.push_back(k);
    }
  }
  if (seqs.size() == 1) {
    b.layout = AttentionLayout::shared(rows, chunks, total);
  } else {
    b.layout.queries_per_group = chunks;
    std::size_t off = 0;
    for (const auto& s : seqs) {
      b.layout.key_offset.push_back(off);
      b.layout.key_count.push_back(s.size());
      off += s.size();
    }
  }
  return b;
}

// ---- execution contexts ----------------------------------------------------

template <class T>
class EagerContext {
 public:
  using V = BasicTensor<T>;

  explicit EagerContext(const GeneratorModel& m) : model_(m) {
    if constexpr (!std::is_same_v<T, double>) {
      for (const auto& p : m.params()) cast_.push_back(p.value.template cast<T>());
    }
  }

  const V& p(std::size_t i) const {
    if constexpr (std::is_same_v<T, double>) {
      return model_.params()[i].value;
    } else {
      return cast_[i];
    }
  }
  V constant(const Tensor& t) const {
    if constexpr (std::is_same_v<T, double>) {
      return t;
    } else {
      return t.template cast<T>();
    }
  }
  V ln(const V& x, const V& g, const V& b) const { return tensorcore::layer_norm(x, g, b, T(1e-5)); }
  const GeneratorModel& model() const { return model_; }

 private:
  const GeneratorModel& model_;
  std::vector<V> cast_;
};

class TapedContext {
 public:
  using V = tensorcore::Var;

  TapedContext(tensorcore::Tape& tape, const GeneratorModel& m) : tape_(tape), model_(m) {
    for (const auto& p : m.params()) vars_.push_back(tape.variable(p.value));
  }
  // Uses caller-provided variables, one per model tensor, in model order.
  TapedContext(tensorcore::Tape& tape, const GeneratorModel& m, std::vector<V> vars)
      : tape_(tape), model_(m), vars_(std::move(vars)) {
    if (vars_.size() != m.size()) throw DimensionError("taped generator: wrong number of parameter variables");
  }

  V p(std::size_t i) const { return vars_[i]; }
  V constant(const Tensor& t) const { return tape_.constant(t); }
  V ln(const V& x, const V& g, const V& b) const { return tensorcore::layer_norm(x, g, b, 1e-5); }
  const GeneratorModel& model() const { return model_; }
  const std::vector<V>& vars() const { return vars_; }
  tensorcore::Tape& tape() const { return tape_; }

 private:
  tensorcore::Tape& tape_;
  const GeneratorModel& model_;
  std::vector<V> vars_;
};

/// Step tokens [total steps, d/C] for a step batch.
template <class Ctx>
typename Ctx::V step_tokens(const Ctx& c, const StepBatch& sb) {
  using namespace tensorcore;
  const GeneratorModel& m = c.model();
  std::vector<typename Ctx::V> phis;
  for (std::size_t k = 0; k < patchlab::kNumKinds; ++k) phis.push_back(c.p(m.phi_index(k)));
  return add(matmul(c.constant(sb.encoded), concat(phis, 0)), gather_rows(c.p(m.order_index()), sb.position));
}

/// z: [B, d] -> augmented [B, d].
template <class Ctx>
typename Ctx::V forward_impl(const Ctx& c, const typename Ctx::V& z, const StepBatch& sb) {
  using namespace tensorcore;
  const GeneratorModel& m = c.model();
  const GeneratorConfig& cfg = m.config();
  if (z.shape().size() != 2 || z.shape()[1] != cfg.d) {
    throw DimensionError("generator: input " + shape_string(z.shape()) + " does not have d=" + std::to_string(cfg.d));
  }
  const std::size_t rows = z.shape()[0];
  const std::size_t w = cfg.width();
  const Tensor pe = sinusoidal_pe(cfg.chunks, w).reshaped({cfg.d});
  auto x = reshape(add_row(z, c.constant(pe)), {rows * cfg.chunks, w});
  const auto tokens = step_tokens(c, sb);
  for (std::size_t j = 0; j < cfg.blocks; ++j) {
    auto P = [&](BlockParam p) -> decltype(auto) { return c.p(m.block_index(j, p)); };
    const auto h = c.ln(x, P(kLn1Gain), P(kLn1Bias));
    const auto q = add_row(matmul(h, P(kWq)), P(kBq));
    const auto k = add_row(matmul(tokens, P(kWk)), P(kBk));
    const auto v = add_row(matmul(tokens, P(kWv)), P(kBv));
    x = add(x, add_row(matmul(cross_attention(q, k, v, sb.layout, cfg.heads), P(kWo)), P(kBo)));
    const auto h2 = c.ln(x, P(kLn2Gain), P(kLn2Bias));
    x = add(x, add_row(matmul(gelu(add_row(matmul(h2, P(kFf1W)), P(kFf1B))), P(kFf2W)), P(kFf2B)));
  }
  auto H = [&](HeadParam p) -> decltype(auto) { return c.p(m.head_index(p)); };
  const auto y = reshape(x, {rows, cfg.d});
  return add_row(matmul(gelu(add_row(matmul(y, H(kHeadW1)), H(kHeadB1))), H(kHeadW2)), H(kHeadB2));
}

/// Step tokens of one sequence, [K, d/C].
inline Tensor embed_steps(const GeneratorModel& m, const TransformSequence& seq) {
  const TransformSequence one[] = {seq};
  const StepBatch sb = make_step_batch(one, 1, m.config().chunks, m.config().k_max);
  return step_tokens(EagerContext<double>(m), sb);
}

/// Double-precision single-row forward.
inline std::vector<double> forward(const GeneratorModel& m, std::span<const double> z, const TransformSequence& seq) {
  if (z.size() != m.config().d) {
    throw DimensionError("generator: embedding of width " + std::to_string(z.size()) + ", expected " +
                         std::to_string(m.config().d));
  }
  const TransformSequence one[] = {seq};
  const StepBatch sb = make_step_batch(one, 1, m.config().chunks, m.config().k_max);
  const Tensor out = forward_impl(EagerContext<double>(m), Tensor({1, z.size()}, z), sb);
  return {out.data().begin(), out.data().end()};
}

/// Single-row forward on the 32-bit inference path.
inline std::vector<float> forward_f32(const GeneratorModel& m, std::span<const float> z, const TransformSequence& seq) {
  if (z.size() != m.config().d) {
    throw DimensionError("generator: embedding of width " + std::to_string(z.size()) + ", expected " +
                         std::to_string(m.config().d));
  }
  const TransformSequence one[] = {seq};
  const StepBatch sb = make_step_batch(one, 1, m.config().chunks, m.config().k_max);
  const Tensor32 out = forward_impl(EagerContext<float>(m), Tensor32({1, z.size()}, z), sb);
  return {out.data().begin(), out.data().end()};
}

/// Batched double-precision forward; one sequence per row or one shared.
inline Tensor forward_batch(const GeneratorModel& m, const Tensor& zs, std::span<const TransformSequence> seqs) {
  if (zs.rank() != 2) throw DimensionError("generator: batch must be [rows, d]");
  const StepBatch sb = make_step_batch(seqs, zs.dim(0), m.config().chunks, m.config().k_max);
  return forward_impl(EagerContext<double>(m), zs, sb);
}

/// Inference path: one batched forward in 32-bit floats, no tape.
inline Tensor32 augment_batch(const GeneratorModel& m, const Tensor32& zs, std::span<const TransformSequence> seqs) {
  if (zs.rank() != 2) throw DimensionError("augment: batch must be [rows, d]");
  if (zs.dim(1) != m.config().d) {
    throw DimensionError("augment: rows have d=" + std::to_string(zs.dim(1)) + ", generator expects d=" +
                         std::to_string(m.config().d));
  }
  const StepBatch sb = make_step_batch(seqs, zs.dim(0), m.config().chunks, m.config().k_max);
  return forward_impl(EagerContext<float>(m), zs, sb);
}

inline Tensor32 augment_batch(const GeneratorModel& m, const Tensor32& zs, const TransformSequence& shared) {
  return augment_batch(m, zs, std::span<const TransformSequence>(&shared, 1));
}

/// Rows given as separate vectors; they must all share d.
inline Tensor32 augment_batch(const GeneratorModel& m, const std::vector<std::vector<double>>& zs,
                              std::span<const TransformSequence> seqs) {
  if (zs.empty()) throw DimensionError("augment: empty batch");
  Tensor32 x({zs.size(), zs[0].size()});
  for (std::size_t i = 0; i < zs.size(); ++i) {
    if (zs[i].size() != zs[0].size()) throw DimensionError("augment: mixed embedding dimensions in one batch");
    std::copy(zs[i].begin(), zs[i].end(), x.ptr() + i * zs[0].size());
  }
  return augment_batch(m, x, seqs);
}

}  // namespace latentaug::generator

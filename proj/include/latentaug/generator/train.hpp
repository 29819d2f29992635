#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "latentaug/core/error.hpp"
#include "latentaug/core/rng.hpp"
#include "latentaug/encoder/invariance.hpp"
#include "latentaug/encoder/toy_encoder.hpp"
#include "latentaug/generator/forward.hpp"
#include "latentaug/tensorcore/optim.hpp"

namespace latentaug::generator {

using encoder::SequenceSampler;
using encoder::ToyEncoder;
using patchlab::Patch;

struct LossTerms {
  double reconstruction = 0;
  double identity = 0;
  double total = 0;
};

// Reconstruction and identity passes share one forward over 2B rows:
// rows [0, B) carry `seqs` with target `zbar`, rows [B, 2B) carry their
// identity sequences with target `z`.
struct LossBatch {
  Tensor inputs;   // [2B, d]
  Tensor targets;  // [2B, d]
  std::vector<TransformSequence> seqs;
  std::size_t rows() const { return inputs.dim(0) / 2; }
};

inline LossBatch make_loss_batch(const Tensor& z, const Tensor& zbar, std::span<const TransformSequence> seqs) {
  if (z.shape() != zbar.shape() || z.rank() != 2) {
    throw DimensionError("loss: z " + tensorcore::shape_string(z.shape()) + " and target " +
                         tensorcore::shape_string(zbar.shape()) + " differ");
  }
  if (seqs.size() != z.dim(0)) throw DimensionError("loss: one sequence per row required");
  LossBatch b;
  b.inputs = tensorcore::concat(std::vector<Tensor>{z, z}, 0);
  b.targets = tensorcore::concat(std::vector<Tensor>{zbar, z}, 0);
  b.seqs.assign(seqs.begin(), seqs.end());
  for (const auto& s : seqs) b.seqs.push_back(patchlab::identity_sequence(s));
  return b;
}

/// Mean over rows of ||rho(z, seq) - zbar|| plus lambda_id times the mean of
/// ||rho(z, id(seq)) - z||, on the tape.
inline tensorcore::Var loss_on_tape(const TapedContext& c, const LossBatch& b, tensorcore::Var* reconstruction = nullptr,
                                    tensorcore::Var* identity = nullptr) {
  using namespace tensorcore;
  const GeneratorConfig& cfg = c.model().config();
  const StepBatch sb = make_step_batch(b.seqs, b.inputs.dim(0), cfg.chunks, cfg.k_max);
  const Var out = forward_impl(c, c.constant(b.inputs), sb);
  const Var norms = row_norm(sub(out, c.constant(b.targets)));
  const std::size_t n = b.rows();
  const Var rec = mean(slice(norms, 0, 0, n));
  const Var idt = mean(slice(norms, 0, n, 2 * n));
  if (reconstruction) *reconstruction = rec;
  if (identity) *identity = idt;
  return add(rec, scale(idt, cfg.lambda_id));
}

/// Eager evaluation of the same loss.
inline LossTerms loss_terms(const GeneratorModel& m, const Tensor& z, const Tensor& zbar,
                            std::span<const TransformSequence> seqs) {
  const LossBatch b = make_loss_batch(z, zbar, seqs);
  const Tensor out = forward_batch(m, b.inputs, b.seqs);
  const Tensor norms = tensorcore::row_norm(tensorcore::sub(out, b.targets));
  LossTerms t;
  const std::size_t n = b.rows();
  for (std::size_t i = 0; i < n; ++i) {
    t.reconstruction += norms[i] / double(n);
    t.identity += norms[n + i] / double(n);
  }
  t.total = t.reconstruction + m.config().lambda_id * t.identity;
  return t;
}

/// Loss for a single patch and sequence, encoding through `enc`.
inline double loss(const GeneratorModel& m, const Patch& x, const TransformSequence& seq, const ToyEncoder& enc) {
  const Patch pair[] = {x, patchlab::apply_sequence(x, seq)};
  const Tensor zz = enc.encode_batch(pair);
  const Tensor z = tensorcore::slice(zz, 0, 0, 1);
  const Tensor zbar = tensorcore::slice(zz, 0, 1, 2);
  return loss_terms(m, z, zbar, std::span<const TransformSequence>(&seq, 1)).total;
}

// Precomputed (z, sequence, encode(tau(x))) triples. Each patch contributes
// `views` sampled sequences.
struct TrainingSet {
  Tensor z;
  Tensor target;
  std::vector<TransformSequence> seqs;
  std::size_t size() const { return seqs.size(); }
};

inline TrainingSet build_training_set(const ToyEncoder& enc, std::span<const Patch> patches,
                                      const SequenceSampler& sampler, std::size_t views, Rng& rng) {
  if (patches.empty() || views == 0) throw ContractError("training set needs patches and at least one view");
  const std::size_t d = enc.dim();
  const std::size_t n = patches.size() * views;
  TrainingSet ts{Tensor({n, d}), Tensor({n, d}), {}};
  ts.seqs.reserve(n);
  const Tensor z = enc.encode_batch(patches);
  constexpr std::size_t kBlock = 256;
  std::vector<Patch> aug;
  std::size_t row = 0, flushed = 0;
  auto flush = [&] {
    if (aug.empty()) return;
    const Tensor za = enc.encode_batch(aug);
    std::copy(za.data().begin(), za.data().end(), ts.target.ptr() + flushed * d);
    flushed += aug.size();
    aug.clear();
  };
  for (std::size_t i = 0; i < patches.size(); ++i) {
    for (std::size_t v = 0; v < views; ++v, ++row) {
      TransformSequence s = sampler(rng);
      aug.push_back(patchlab::apply_sequence(patches[i], s));
      ts.seqs.push_back(std::move(s));
      std::copy_n(z.ptr() + i * d, d, ts.z.ptr() + row * d);
      if (aug.size() == kBlock) flush();
    }
  }
  flush();
  return ts;
}

struct TrainOptions {
  std::size_t steps = 4000;
  std::size_t batch = 64;
  tensorcore::AdamWConfig optimizer{.lr = 1e-3, .weight_decay = 1e-5};
  // Called after every step with (step index, batch loss).
  std::function<void(std::size_t, double)> on_step;
};

struct TrainResult {
  GeneratorModel model;
  std::vector<double> loss_curve;
};

/// Minibatch AdamW on the batch-mean loss. Batches walk a fresh permutation
/// of the training set each epoch.
inline TrainResult train_generator(const GeneratorConfig& cfg, const TrainingSet& data, const TrainOptions& opt,
                                   Rng& rng) {
  cfg.validate();
  if (data.size() == 0) throw ContractError("train_generator: empty training set");
  if (data.z.dim(1) != cfg.d) {
    throw DimensionError("train_generator: embeddings have d=" + std::to_string(data.z.dim(1)) + ", config d=" +
                         std::to_string(cfg.d));
  }
  if (opt.batch == 0) throw ContractError("train_generator: batch size must be positive");
  Rng init_rng = rng.split();
  TrainResult res{GeneratorModel::initialized(cfg, init_rng), {}};
  tensorcore::AdamW adam(opt.optimizer);
  const std::size_t d = cfg.d;
  const std::size_t batch = std::min(opt.batch, data.size());
  std::vector<std::size_t> perm(data.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t cursor = data.size();

  std::vector<Tensor*> params;
  for (auto& p : res.model.params()) params.push_back(&p.value);

  for (std::size_t step = 0; step < opt.steps; ++step) {
    Tensor z({batch, d}), zbar({batch, d});
    std::vector<TransformSequence> seqs;
    for (std::size_t i = 0; i < batch; ++i) {
      if (cursor == data.size()) {
        rng.shuffle(perm);
        cursor = 0;
      }
      const std::size_t r = perm[cursor++];
      std::copy_n(data.z.ptr() + r * d, d, z.ptr() + i * d);
      std::copy_n(data.target.ptr() + r * d, d, zbar.ptr() + i * d);
      seqs.push_back(data.seqs[r]);
    }
    const LossBatch lb = make_loss_batch(z, zbar, seqs);
    tensorcore::Tape tape;
    const TapedContext ctx(tape, res.model);
    const tensorcore::Var l = loss_on_tape(ctx, lb);
    const double value = l.value().item();
    if (!std::isfinite(value)) throw TrainingError("generator loss diverged", step);
    tape.backward(l);
    std::vector<const Tensor*> grads;
    for (const auto& v : ctx.vars()) grads.push_back(&tape.grad(v));
    adam.step(params, grads);
    res.loss_curve.push_back(value);
    if (opt.on_step) opt.on_step(step, value);
  }
  return res;
}

}  // namespace latentaug::generator

#pragma once

// Attention-based MIL pooling with a gated scorer:
//   score_i = w . (tanh(V h_i + bV) * sigmoid(U h_i + bU))
//   a = softmax(score), pooled = sum_i a_i h_i, logits = pooled Wc + bc.
// The linear variant scores with w . (V h_i) and no bias, so scores are
// positively homogeneous in the embeddings.

#include <cmath>
#include <vector>

#include "latentaug/core/error.hpp"
#include "latentaug/core/rng.hpp"
#include "latentaug/tensorcore/autodiff.hpp"
#include "latentaug/tensorcore/ops.hpp"

namespace latentaug::mil {

using tensorcore::Tape;
using tensorcore::Tensor;
using tensorcore::Var;

enum class Scorer { kGated, kLinear };

struct AbmilConfig {
  std::size_t d = 128;
  std::size_t hidden = 64;
  Scorer scorer = Scorer::kGated;
};

enum AbmilParam : std::size_t { kV, kBV, kU, kBU, kW, kWc, kBc, kAbmilParamCount };

struct AbmilModel {
  AbmilConfig cfg;
  std::vector<Tensor> params;  // indexed by AbmilParam

  static AbmilModel initialized(const AbmilConfig& cfg, Rng& rng) {
    AbmilModel m{cfg, {}};
    const std::size_t d = cfg.d, h = cfg.hidden;
    const tensorcore::Shape shapes[kAbmilParamCount] = {{d, h}, {h}, {d, h}, {h}, {h, 1}, {d, 2}, {2}};
    for (const auto& s : shapes) m.params.emplace_back(s);
    for (AbmilParam p : {kV, kU, kW, kWc}) {
      const double a = 1.0 / std::sqrt(double(m.params[p].dim(0)));
      for (double& v : m.params[p].data()) v = rng.uniform(-a, a);
    }
    return m;
  }

  friend bool operator==(const AbmilModel& a, const AbmilModel& b) { return a.params == b.params; }
};

struct AbmilOutput {
  Tensor logits;     // [2]
  Tensor attention;  // [M]
};

template <class V, class P>
V abmil_scores(const V& h, const P& p, Scorer scorer) {
  using namespace tensorcore;
  if (scorer == Scorer::kLinear) return matmul(matmul(h, p(kV)), p(kW));
  const auto gate_t = tanh(add_row(matmul(h, p(kV)), p(kBV)));
  const auto gate_s = sigmoid(add_row(matmul(h, p(kU)), p(kBU)));
  return matmul(mul(gate_t, gate_s), p(kW));
}

inline void check_bag(const Tensor& h, const AbmilConfig& cfg) {
  if (h.empty() || h.rank() != 2 || h.dim(0) == 0) throw ContractError("abmil: empty bag");
  if (h.dim(1) != cfg.d) {
    throw DimensionError("abmil: bag width " + std::to_string(h.dim(1)) + " differs from d=" + std::to_string(cfg.d));
  }
}

inline AbmilOutput abmil_forward(const AbmilModel& m, const Tensor& h) {
  using namespace tensorcore;
  check_bag(h, m.cfg);
  auto p = [&](AbmilParam i) -> const Tensor& { return m.params[i]; };
  const Tensor scores = abmil_scores(h, p, m.cfg.scorer).reshaped({1, h.dim(0)});
  const Tensor a = softmax(scores, 1);
  const Tensor pooled = matmul(a, h);
  AbmilOutput out;
  out.logits = add_row(matmul(pooled, m.params[kWc]), m.params[kBc]).reshaped({2});
  out.attention = a.reshaped({h.dim(0)});
  return out;
}

/// Cross-entropy of one bag on the tape; `vars` are the model parameters.
inline Var abmil_loss(Tape& tape, const std::vector<Var>& vars, const AbmilConfig& cfg, const Tensor& h, int label) {
  using namespace tensorcore;
  check_bag(h, cfg);
  auto p = [&](AbmilParam i) { return vars[i]; };
  const Var x = tape.constant(h);
  const Var scores = reshape(abmil_scores(x, p, cfg.scorer), {1, h.dim(0)});
  const Var pooled = matmul(softmax(scores, 1), x);
  const Var logits = add_row(matmul(pooled, p(kWc)), p(kBc));
  return cross_entropy(logits, {static_cast<std::size_t>(label)});
}

/// Probability of class 1.
inline double positive_probability(const Tensor& logits) {
  const double m = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - m), e1 = std::exp(logits[1] - m);
  return e1 / (e0 + e1);
}

}  // namespace latentaug::mil

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "latentaug/core/error.hpp"
#include "latentaug/core/rng.hpp"
#include "latentaug/mil/abmil.hpp"
#include "latentaug/mil/augment.hpp"
#include "latentaug/mil/bags.hpp"
#include "latentaug/tensorcore/optim.hpp"

namespace latentaug::mil {

/// Rank-based AUC (Mann-Whitney U); tied scores count one half.
inline double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DimensionError("auc: scores and labels differ in length");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double n_pos = 0, n_neg = 0, rank_sum = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double avg_rank = (double(i) + double(j - 1)) / 2.0 + 1.0;  // ties share their mean rank
    for (std::size_t k = i; k < j; ++k) {
      if (labels[idx[k]] == 1) {
        rank_sum += avg_rank;
        n_pos += 1;
      } else {
        n_neg += 1;
      }
    }
    i = j;
  }
  if (n_pos == 0 || n_neg == 0) throw MetricError("auc: both classes must be present");
  return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg);
}

inline double balanced_accuracy(std::span<const int> predicted, std::span<const int> labels) {
  double tp = 0, tn = 0, pos = 0, neg = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) {
      pos += 1;
      tp += predicted[i] == 1;
    } else {
      neg += 1;
      tn += predicted[i] == 0;
    }
  }
  if (pos == 0 || neg == 0) throw MetricError("balanced accuracy: both classes must be present");
  return 0.5 * (tp / pos + tn / neg);
}

struct MilHyper {
  double lr = 1e-4;
  double weight_decay = 1e-5;
  std::size_t accumulation = 4;
  std::size_t patience = 30;
  std::size_t max_epochs = 200;
  std::size_t hidden = 64;
  Scorer scorer = Scorer::kGated;
};

struct Evaluation;

// Called after every epoch with (epoch index, current model, validation evaluation).
using EpochHook = std::function<void(std::size_t, const AbmilModel&, const Evaluation&)>;

struct MilData {
  std::vector<const Bag*> train;  // bootstrap pool, duplicates allowed
  std::vector<const Bag*> val;
  std::vector<const Bag*> test;
};

struct MilResult {
  AbmilModel model;
  double test_auc = 0;
  double val_balanced_accuracy = 0;
  std::size_t epochs_ran = 0;
  std::size_t best_epoch = 0;
  std::size_t train_bags = 0;
};

struct Evaluation {
  double balanced_accuracy = 0;
  double loss = 0;
  std::vector<double> scores;
  std::vector<int> labels;
};

inline Evaluation evaluate(const AbmilModel& m, std::span<const Bag* const> bags) {
  Evaluation e;
  std::vector<int> pred;
  for (const Bag* b : bags) {
    const AbmilOutput o = abmil_forward(m, b->embeddings);
    const double p1 = positive_probability(o.logits);
    e.scores.push_back(p1);
    e.labels.push_back(b->label);
    pred.push_back(o.logits[1] > o.logits[0] ? 1 : 0);
    e.loss -= std::log(std::max(b->label == 1 ? p1 : 1.0 - p1, 1e-300)) / double(bags.size());
  }
  e.balanced_accuracy = balanced_accuracy(pred, e.labels);
  return e;
}

inline std::size_t bags_for_fraction(std::size_t pool, double fraction) {
  if (!(fraction > 0.0) || fraction > 1.0) throw ParameterError("data fraction must be in (0, 1]");
  return static_cast<std::size_t>(std::ceil(fraction * double(pool) - 1e-9));
}

/// Cross-entropy training, one bag per step, gradients averaged over
/// `accumulation` bags per AdamW update. Early stopping on validation
/// balanced accuracy (ties go to the lower validation loss); the best model
/// is scored on the test bags.
inline MilResult train_mil(const MilData& data, Strategy strategy, double fraction, const MilHyper& hyper,
                           const AugmentContext& aug, Rng& rng, const EpochHook& on_epoch = {}) {
  const std::size_t n = bags_for_fraction(data.train.size(), fraction);
  if (n == 0 || data.val.empty() || data.test.empty()) throw ContractError("train_mil: empty fold");
  if (needs_generator(strategy) && !aug.generator) {
    throw DependencyError("strategy " + std::string(strategy_name(strategy)) + " requires a trained generator");
  }
  const std::vector<const Bag*> train(data.train.begin(), data.train.begin() + std::ptrdiff_t(n));
  AbmilConfig cfg;
  cfg.d = train.front()->dim();
  cfg.hidden = hyper.hidden;
  cfg.scorer = hyper.scorer;
  Rng init_rng = rng.split();
  Rng aug_rng = rng.split();
  MilResult res;
  res.train_bags = n;
  res.model = AbmilModel::initialized(cfg, init_rng);
  tensorcore::AdamW adam({.lr = hyper.lr, .weight_decay = hyper.weight_decay});

  std::vector<Tensor*> params;
  for (auto& p : res.model.params) params.push_back(&p);
  std::vector<Tensor> acc;
  for (const auto& p : res.model.params) acc.emplace_back(p.shape());
  std::vector<const Tensor*> acc_ptrs;
  for (const auto& a : acc) acc_ptrs.push_back(&a);
  std::size_t pending = 0;
  auto flush = [&] {
    if (pending == 0) return;
    for (auto& a : acc)
      for (double& v : a.data()) v /= double(pending);
    adam.step(params, acc_ptrs);
    for (auto& a : acc) a.fill(0.0);
    pending = 0;
  };

  AbmilModel best = res.model;
  double best_ba = -1, best_loss = 0;
  std::size_t since_best = 0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < hyper.max_epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t i : order) {
      const Bag& b = *train[i];
      const AugmentedBag ab = augment_bag(b, strategy, aug, aug_rng);
      Tape tape;
      std::vector<Var> vars;
      for (const auto& p : res.model.params) vars.push_back(tape.variable(p));
      const Var l = abmil_loss(tape, vars, cfg, ab.embeddings, b.label);
      if (!std::isfinite(l.value().item())) throw TrainingError("MIL loss diverged", epoch);
      tape.backward(l);
      for (std::size_t k = 0; k < vars.size(); ++k) tensorcore::detail::axpy(acc[k], tape.grad(vars[k]));
      if (++pending == hyper.accumulation) flush();
    }
    flush();
    res.epochs_ran = epoch + 1;
    const Evaluation v = evaluate(res.model, data.val);
    if (on_epoch) on_epoch(epoch, res.model, v);
    if (v.balanced_accuracy > best_ba || (v.balanced_accuracy == best_ba && v.loss < best_loss)) {
      best_ba = v.balanced_accuracy;
      best_loss = v.loss;
      best = res.model;
      res.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= hyper.patience) {
      break;
    }
  }
  res.model = best;
  res.val_balanced_accuracy = best_ba;
  const Evaluation t = evaluate(best, data.test);
  res.test_auc = auc(t.scores, t.labels);
  return res;
}

}  // namespace latentaug::mil

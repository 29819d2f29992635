#pragma once

// The experiment as a whole: slides, splits, generator data, MIL folds.
// All randomness derives from the root seed in the config.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "latentaug/cli/config.hpp"
#include "latentaug/core/csv.hpp"
#include "latentaug/core/error.hpp"
#include "latentaug/core/rng.hpp"
#include "latentaug/encoder/invariance.hpp"
#include "latentaug/encoder/toy_encoder.hpp"
#include "latentaug/generator/train.hpp"
#include "latentaug/mil/augment.hpp"
#include "latentaug/mil/bags.hpp"
#include "latentaug/mil/train.hpp"

namespace latentaug::cli {

using patchlab::Patch;

// Seed-path tags for the independent random streams.
enum SeedTag : std::uint64_t {
  kSeedGeneratorPatches = 1,
  kSeedGeneratorTraining,
  kSeedEvalPatches,
  kSeedEval,
  kSeedNoiseCalibration,
  kSeedMil,
  kSeedBench,
};

class Experiment {
 public:
  explicit Experiment(RunConfig cfg)
      : cfg_(std::move(cfg)),
        seed_(cfg_.u64("seed")),
        enc_(encoder_config(cfg_)),
        plan_(mil::make_splits(seed_, cfg_.count("data.slides"))) {
    slide_cfg_.stain_strength = cfg_.num("data.stain_strength");
    slide_cfg_.stain_k_max = cfg_.count("data.stain_k_max");
    for (std::uint64_t i = 0; i < cfg_.count("data.slides"); ++i) slides_.push_back(mil::make_slide(seed_, i, slide_cfg_));
    gen_config().validate();
  }

  static encoder::EncoderConfig encoder_config(const RunConfig& c) {
    encoder::EncoderConfig e;
    e.seed = c.u64("encoder.seed");
    e.dim = c.count("encoder.dim");
    e.hidden = c.count("encoder.hidden");
    return e;
  }

  const RunConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t seed_for(SeedTag tag, std::uint64_t sub = 0) const { return derive_seed(seed_, {tag, sub}); }
  const encoder::ToyEncoder& encoder() const { return enc_; }
  const std::vector<mil::SlideSpec>& slides() const { return slides_; }
  const mil::SplitPlan& plan() const { return plan_; }

  generator::GeneratorConfig gen_config() const {
    generator::GeneratorConfig g;
    g.d = cfg_.count("encoder.dim");
    g.chunks = cfg_.count("gen.chunks");
    g.blocks = cfg_.count("gen.blocks");
    g.heads = cfg_.count("gen.heads");
    g.k_max = cfg_.count("gen.k_max");
    g.ffn_mult = cfg_.num("gen.ffn_mult");
    g.lambda_id = cfg_.num("gen.lambda_id");
    return g;
  }

  encoder::SequenceSampler sampler() const {
    patchlab::SamplerConfig s;
    s.k_max = cfg_.count("sampler.k_max");
    s.kinds = cfg_.kinds("sampler.kinds");
    if (s.k_max > gen_config().k_max) throw UsageError("sampler.k_max exceeds gen.k_max");
    return encoder::catalog_sampler(s);
  }

  /// Sequences used for MIL augmentation: the full catalog, or colour kinds
  /// scaled towards identity by mil.aug_strength.
  encoder::SequenceSampler mil_sampler() const {
    const std::string& which = cfg_.str("mil.aug_sampler");
    if (which == "catalog") return sampler();
    if (which != "stain") throw UsageError("mil.aug_sampler must be stain or catalog");
    mil::SlideConfig a;
    a.stain_strength = cfg_.num("mil.aug_strength");
    a.stain_k_max = std::min(cfg_.count("data.stain_k_max"), gen_config().k_max);
    if (a.stain_strength < 0 || a.stain_strength > 1) throw UsageError("mil.aug_strength must be in [0, 1]");
    return [a](Rng& rng) { return mil::sample_stain(rng, a); };
  }

  generator::TrainOptions train_options() const {
    generator::TrainOptions o;
    o.steps = cfg_.count("gen.steps");
    o.batch = cfg_.count("gen.batch");
    o.optimizer.lr = cfg_.num("gen.lr");
    o.optimizer.weight_decay = cfg_.num("gen.weight_decay");
    return o;
  }

  mil::MilHyper mil_hyper() const {
    mil::MilHyper h;
    h.lr = cfg_.num("mil.lr");
    h.weight_decay = cfg_.num("mil.weight_decay");
    h.accumulation = cfg_.count("mil.accumulation");
    h.patience = cfg_.count("mil.patience");
    h.max_epochs = cfg_.count("mil.max_epochs");
    h.hidden = cfg_.count("mil.hidden");
    const std::string& scorer = cfg_.str("mil.scorer");
    if (scorer == "gated") {
      h.scorer = mil::Scorer::kGated;
    } else if (scorer == "linear") {
      h.scorer = mil::Scorer::kLinear;
    } else {
      throw UsageError("mil.scorer must be gated or linear");
    }
    return h;
  }

  /// Patches the generator may see: drawn from the generator slides only.
  std::vector<std::uint64_t> generator_patch_ids() const {
    Rng rng(seed_for(kSeedGeneratorPatches));
    const auto& g = plan_.generator_slides;
    std::vector<std::uint64_t> ids;
    for (std::size_t i = 0; i < cfg_.count("gen.patches"); ++i) {
      const auto s = g[rng.index(g.size())];
      ids.push_back(mil::patch_id(s, rng.index(slides_[s].size())));
    }
    return ids;
  }

  /// Distinct patches from the held-out slides.
  std::vector<std::uint64_t> heldout_patch_ids(std::size_t n, std::uint64_t stream = 0) const {
    auto all = mil::patch_ids_of(plan_.heldout_slides, slides_);
    std::vector<std::uint64_t> ids(all.begin(), all.end());
    Rng rng(seed_for(kSeedEvalPatches, stream));
    rng.shuffle(ids);
    if (n > ids.size()) throw UsageError("held-out pool has only " + std::to_string(ids.size()) + " patches");
    ids.resize(n);
    return ids;
  }

  std::vector<Patch> render(std::span<const std::uint64_t> ids, std::size_t resolution = 32) const {
    std::vector<Patch> out;
    out.reserve(ids.size());
    for (auto id : ids) out.push_back(mil::render_patch(slides_.at(id >> 16), id & 0xffff, resolution));
    return out;
  }

  generator::TrainResult train_generator(const generator::TrainOptions& opt) const {
    Rng rng(seed_for(kSeedGeneratorTraining));
    const auto patches = render(generator_patch_ids());
    const auto data = generator::build_training_set(enc_, patches, sampler(), cfg_.count("gen.views"), rng);
    return generator::train_generator(gen_config(), data, opt, rng);
  }
  generator::TrainResult train_generator() const { return train_generator(train_options()); }

  /// Bags for every slide; cached as LBAG files when `cache` is non-empty.
  std::vector<mil::Bag> bags(std::size_t resolution = 32, const std::filesystem::path& cache = {}) const {
    std::filesystem::path dir;
    if (!cache.empty()) {
      dir = cache / cfg_.data_fingerprint(resolution);
      std::filesystem::create_directories(dir);
    }
    std::vector<mil::Bag> out;
    for (const auto& s : slides_) {
      const auto file = dir / ("slide_" + std::to_string(s.id) + ".lbag");
      mil::Bag b;
      if (!dir.empty() && std::filesystem::exists(file)) {
        b = mil::load_bag(file);
        b.slide_id = s.id;
        b.positive_fraction = s.positive_fraction;
        b.threshold = s.threshold;
      } else {
        b = mil::encode_slide(s, enc_, resolution);
        if (!dir.empty()) mil::save_bag(file, b);
      }
      out.push_back(std::move(b));
    }
    return out;
  }

  /// p_aug from the config; the generator and noise level are filled in
  /// by the caller.
  mil::AugmentContext augment_context() const {
    mil::AugmentContext c;
    c.sampler = mil_sampler();
    c.p_aug = cfg_.num("mil.p_aug");
    if (c.p_aug < 0 || c.p_aug > 1) throw UsageError("mil.p_aug must be in [0, 1]");
    return c;
  }

  mil::NoiseCalibration calibrate_noise(const std::vector<mil::Bag>& bags, const generator::GeneratorModel& gen) const {
    std::vector<mil::Bag> cal;
    for (std::size_t i = 0; i < cfg_.count("mil.calibration_bags") && i < plan_.generator_slides.size(); ++i) {
      cal.push_back(bags[plan_.generator_slides[i]]);
    }
    Rng rng(seed_for(kSeedNoiseCalibration));
    return mil::calibrate_noise(cal, gen, mil_sampler(), rng);
  }

  mil::MilData fold_data(const std::vector<mil::Bag>& bags, std::size_t fold) const {
    if (fold >= plan_.folds.size()) throw UsageError("fold " + std::to_string(fold) + " does not exist");
    const auto& f = plan_.folds[fold];
    mil::MilData d;
    for (auto id : f.train) d.train.push_back(&bags[id]);
    for (auto id : f.val) d.val.push_back(&bags[id]);
    for (auto id : f.test) d.test.push_back(&bags[id]);
    return d;
  }

 private:
  RunConfig cfg_;
  std::uint64_t seed_;
  encoder::ToyEncoder enc_;
  mil::SlideConfig slide_cfg_;
  std::vector<mil::SlideSpec> slides_;
  mil::SplitPlan plan_;
};

// ---- results rows ----

struct ResultRow {
  std::size_t fold = 0;
  std::string strategy;
  double fraction = 0;
  std::size_t resolution = 32;
  std::uint64_t seed = 0;
  double auc = 0;
  std::size_t epochs_ran = 0;
  std::size_t best_epoch = 0;
  std::size_t train_bags = 0;
  double wall_seconds = 0;
  std::string fingerprint;
};

inline const std::vector<std::string>& results_header() {
  static const std::vector<std::string> h = {"fold",      "strategy",   "data_fraction", "resolution",
                                             "seed",      "auc",        "epochs_ran",    "best_epoch",
                                             "train_bags", "wall_seconds", "fingerprint"};
  return h;
}

inline std::string result_line(const ResultRow& r) {
  char frac[16];
  std::snprintf(frac, sizeof(frac), "%.1f", r.fraction);
  return csv::join({std::to_string(r.fold), r.strategy, frac, std::to_string(r.resolution), std::to_string(r.seed),
                    csv::num(r.auc), std::to_string(r.epochs_ran), std::to_string(r.best_epoch),
                    std::to_string(r.train_bags), csv::num(r.wall_seconds), r.fingerprint}) +
         '\n';
}

/// Appends one line per row, writing the header first for a new file.
inline void append_results(const std::filesystem::path& path, std::span<const ResultRow> rows) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw UsageError("cannot append to " + path.string());
  if (fresh) out << csv::join(results_header()) << '\n';
  for (const auto& r : rows) {
    out << result_line(r);
    out.flush();
  }
}

/// Trains and tests one (fold, strategy) cell. The MIL stream depends on the
/// fold only, so strategies in a fold start from the same initialization.
inline ResultRow run_mil_fold(const Experiment& exp, const std::vector<mil::Bag>& bags, std::size_t fold,
                              mil::Strategy strategy, double fraction, const mil::AugmentContext& ctx,
                              std::size_t resolution = 32) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(exp.seed_for(kSeedMil, fold));
  const mil::MilResult r = mil::train_mil(exp.fold_data(bags, fold), strategy, fraction, exp.mil_hyper(), ctx, rng);
  ResultRow row;
  row.fold = fold;
  row.strategy = std::string(mil::strategy_name(strategy));
  row.fraction = fraction;
  row.resolution = resolution;
  row.seed = exp.seed();
  row.auc = r.test_auc;
  row.epochs_ran = r.epochs_ran;
  row.best_epoch = r.best_epoch;
  row.train_bags = r.train_bags;
  row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  row.fingerprint = exp.config().fingerprint();
  return row;
}

}  // namespace latentaug::cli

// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [--only 1,4,9] [--work DIR] [--config FILE] [--generator FILE]
//
// Criteria 3-5, 7-10 and 12 share one generator trained with the default
// configuration; it is trained on first use. --generator loads saved weights
// instead, in which case the identity criterion cannot time training and
// fails.

#include "CLI11.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "latentaug/cli/config.hpp"
#include "latentaug/cli/pipeline.hpp"
#include "latentaug/eval/bench.hpp"
#include "latentaug/eval/protocols.hpp"
#include "latentaug/generator/train.hpp"
#include "latentaug/mil/abmil.hpp"
#include "latentaug/mil/augment.hpp"
#include "latentaug/patchlab/sampler.hpp"
#include "latentaug/patchlab/synth.hpp"
#include "latentaug/patchlab/transforms.hpp"
#include "support/gradcheck.hpp"
#include "support/op_cases.hpp"

namespace fs = std::filesystem;
using namespace latentaug;
using patchlab::Patch;
using patchlab::TransformKind;
using patchlab::TransformSequence;
using patchlab::TransformStep;
using tensorcore::Tape;
using tensorcore::Tensor;
using tensorcore::Var;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Shared state: the default experiment and its trained generator.
struct World {
  cli::Experiment exp;
  fs::path work;
  std::optional<generator::TrainResult> trained;
  double train_seconds = 0;
  std::vector<mil::Bag> bags32;
  std::optional<generator::GeneratorModel> loaded;

  const generator::GeneratorModel& gen() {
    if (loaded) return *loaded;
    if (!trained) {
      const auto t0 = std::chrono::steady_clock::now();
      trained = exp.train_generator();
      train_seconds = seconds_since(t0);
      trained->model.save(work / "generator.haug");
      std::printf("  (generator trained in %.1f s, final batch loss %.4f)\n", train_seconds, trained->loss_curve.back());
      std::fflush(stdout);
    }
    return trained->model;
  }
  const std::vector<mil::Bag>& bags() {
    if (bags32.empty()) bags32 = exp.bags(32, work / "cache");
    return bags32;
  }
  std::vector<std::uint64_t> pool() const { return exp.heldout_patch_ids(500); }
};

// ---- 1: gradients ----

Outcome gradients() {
  double op_worst = 0, gen_worst = 0, abmil_worst = 0;
  std::string worst_op;
  for (const auto& c : testing::op_cases()) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(derive_seed(seed, {0x09}));
      std::vector<Tensor> inputs;
      for (const auto& s : c.shapes) inputs.push_back(testing::random_tensor(s, rng));
      const double e = testing::gradcheck(c.build, inputs);
      if (e > op_worst) op_worst = e, worst_op = c.name;
    }
  }
  generator::GeneratorConfig cfg;
  cfg.d = 8;
  cfg.chunks = 2;
  cfg.blocks = 2;
  cfg.heads = 2;
  cfg.k_max = 3;
  cfg.ffn_mult = 2.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(derive_seed(seed, {0x6e}));
    generator::GeneratorModel m(cfg);
    for (auto& p : m.params())
      for (double& v : p.value.data()) v = rng.uniform(-0.5, 0.5);
    const Tensor z = testing::random_tensor({3, cfg.d}, rng), zbar = testing::random_tensor({3, cfg.d}, rng);
    std::vector<TransformSequence> seqs;
    for (int i = 0; i < 3; ++i) seqs.push_back(patchlab::sample_sequence(rng, cfg.k_max));
    const auto lb = generator::make_loss_batch(z, zbar, seqs);
    std::vector<Tensor> inputs;
    for (const auto& p : m.params()) inputs.push_back(p.value);
    gen_worst = std::max(gen_worst, testing::gradcheck(
                                        [&](Tape& t, const std::vector<Var>& v) {
                                          return generator::loss_on_tape(generator::TapedContext(t, m, v), lb);
                                        },
                                        inputs));
  }
  for (mil::Scorer s : {mil::Scorer::kGated, mil::Scorer::kLinear}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(derive_seed(seed, {0xab}));
      const mil::AbmilConfig c{6, 4, s};
      mil::AbmilModel m = mil::AbmilModel::initialized(c, rng);
      for (auto& p : m.params)
        for (double& v : p.data()) v = rng.uniform(-0.8, 0.8);
      const Tensor h = testing::random_tensor({5, 6}, rng);
      const int label = int(seed % 2);
      abmil_worst = std::max(abmil_worst, testing::gradcheck(
                                              [&](Tape& t, const std::vector<Var>& v) {
                                                return mil::abmil_loss(t, v, c, h, label);
                                              },
                                              m.params));
    }
  }
  return {op_worst <= 1e-4 && gen_worst <= 1e-3 && abmil_worst <= 1e-3,
          fmt("%zu ops x 20 seeds worst %.2e (%s, tol 1e-4); generator %.2e, abmil %.2e (tol 1e-3)",
              testing::op_cases().size(), op_worst, worst_op.c_str(), gen_worst, abmil_worst)};
}

// ---- 2: transform algebra ----

Outcome transform_laws() {
  std::size_t checks = 0, failures = 0;
  auto check = [&](bool ok) {
    ++checks;
    if (!ok) ++failures;
  };
  auto in_range = [](const Patch& p) {
    return std::all_of(p.pixels().begin(), p.pixels().end(), [](float v) { return std::isfinite(v) && v >= 0 && v <= 1; });
  };
  const auto fh = TransformStep::flip(patchlab::FlipAxis::kHorizontal);
  const auto fv = TransformStep::flip(patchlab::FlipAxis::kVertical);
  const auto r90 = TransformStep::rotate(90);
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    Patch p(32, 32);
    if (i % 2) {
      p = patchlab::synth_patch(5000 + i, i % 4 == 1, 32);
    } else {
      for (float& v : p.pixels()) v = float(rng.uniform());
    }
    for (TransformKind k : patchlab::kAllKinds) {
      check(patchlab::apply_transform(p, TransformStep::identity(k)) == p);
      check(in_range(patchlab::apply_transform(p, patchlab::sample_step(rng, k))));
    }
    check(patchlab::apply_transform(patchlab::apply_transform(p, fh), fh) == p);
    check(patchlab::apply_transform(patchlab::apply_transform(p, fv), fv) == p);
    Patch r = p;
    for (int q = 0; q < 4; ++q) r = patchlab::apply_transform(r, r90);
    check(r == p);
    check(patchlab::apply_sequence(p, {{fh, fv}}) == patchlab::apply_transform(p, TransformStep::rotate(180)));
    check(patchlab::apply_transform(patchlab::apply_transform(p, r90), TransformStep::rotate(270)) == p);
    const Patch lo = patchlab::apply_transform(p, TransformStep::erosion());
    const Patch hi = patchlab::apply_transform(p, TransformStep::dilation());
    bool mono = true;
    for (std::size_t j = 0; j < p.size(); ++j) mono &= lo.pixels()[j] <= p.pixels()[j] && p.pixels()[j] <= hi.pixels()[j];
    check(mono);
    for (TransformKind k : patchlab::kAllKinds) {
      const auto& ks = patchlab::spec(k);
      if (ks.discrete) continue;
      for (double v : {ks.lo, ks.hi}) check(in_range(patchlab::apply_transform(p, TransformStep{k, std::vector<double>(ks.param_count, v)})));
    }
  }
  return {failures == 0, fmt("%zu checks over 100 patches, %zu failures", checks, failures)};
}

// ---- 3-5: identity and reconstruction ----

Outcome identity_contract(World& w) {
  const auto& gen = w.gen();
  if (w.loaded) return {false, "generator was loaded, training time not measured"};
  const auto patches = w.exp.render(w.pool());
  const Tensor z = w.exp.encoder().encode_batch(patches);
  Rng rng(w.exp.seed_for(cli::kSeedEval, 7));
  const auto sampler = w.exp.sampler();
  std::vector<TransformSequence> ids;
  for (std::size_t i = 0; i < patches.size(); ++i) ids.push_back(patchlab::identity_sequence(sampler(rng)));
  const Tensor out = eval::generator_predictor(gen)(z, ids, z);
  double s = 0;
  for (std::size_t i = 0; i < patches.size(); ++i) s += tensorcore::cosine(out.row(i), z.row(i));
  const double m = s / double(patches.size());
  return {m >= 0.99 && w.train_seconds <= 600,
          fmt("mean cos %.4f on %zu held-out patches (>= 0.99); train-gen %.0f s (<= 600)", m, patches.size(),
              w.train_seconds)};
}

eval::CosinePair recon_pair(World& w, std::size_t resolution) {
  const auto patches = w.exp.render(w.pool(), resolution);
  Rng rng(w.exp.seed_for(cli::kSeedEval, resolution));
  eval::EvalOptions opt;
  opt.seed = w.exp.seed_for(cli::kSeedEval, 100 + resolution);
  const auto pred = eval::generator_predictor(w.gen());
  return resolution == 64 ? eval::cross_resolution_eval(pred, w.exp.encoder(), patches, w.exp.sampler(), rng, opt)
                          : eval::reconstruction_eval(pred, w.exp.encoder(), patches, w.exp.sampler(), rng, opt);
}

std::string describe(const eval::EvalReport& r) { return fmt("%.4f [%.4f, %.4f]", r.value, r.ci_lo, r.ci_hi); }

Outcome reconstruction_gap(World& w) {
  const auto p = recon_pair(w, 32);
  const double gap = p.reconstruction.value - p.invariance.value;
  const bool ok = gap >= 0.2 && !p.reconstruction.overlaps(p.invariance);
  return {ok, fmt("reconstruction %s vs invariance %s, gap %.4f (>= 0.2, CIs disjoint)",
                  describe(p.reconstruction).c_str(), describe(p.invariance).c_str(), gap)};
}

Outcome cross_resolution(World& w) {
  const auto p = recon_pair(w, 64);
  const double gap = p.reconstruction.value - p.invariance.value;
  return {gap >= 0.1, fmt("64 px: reconstruction %s vs invariance %s, gap %.4f (>= 0.1)",
                          describe(p.reconstruction).c_str(), describe(p.invariance).c_str(), gap)};
}

// ---- 6: chunking at matched parameter count ----

double full_set_loss(const generator::GeneratorModel& m, const generator::TrainingSet& data) {
  constexpr std::size_t kBlock = 512;
  double total = 0;
  for (std::size_t s = 0; s < data.size(); s += kBlock) {
    const std::size_t e = std::min(data.size(), s + kBlock);
    const auto t = generator::loss_terms(m, tensorcore::slice(data.z, 0, s, e), tensorcore::slice(data.target, 0, s, e),
                                         std::span(data.seqs).subspan(s, e - s));
    total += t.total * double(e - s);
  }
  return total / double(data.size());
}

Outcome chunking(World& w) {
  generator::GeneratorConfig c4 = w.exp.gen_config();
  c4.ffn_mult = 6.5;
  generator::GeneratorConfig c1 = w.exp.gen_config();
  c1.chunks = 1;
  c1.blocks = 1;
  c1.heads = 1;
  c1.ffn_mult = 0.0625;
  const std::size_t n4 = generator::GeneratorModel(c4).parameter_count();
  const std::size_t n1 = generator::GeneratorModel(c1).parameter_count();
  generator::TrainOptions opt = w.exp.train_options();
  opt.steps = 2000;
  Rng data_rng(w.exp.seed_for(cli::kSeedGeneratorTraining));
  const auto data = generator::build_training_set(w.exp.encoder(), w.exp.render(w.exp.generator_patch_ids()),
                                                  w.exp.sampler(), w.exp.config().count("gen.views"), data_rng);
  std::size_t wins = 0;
  std::string losses;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    double l[2];
    for (int which = 0; which < 2; ++which) {
      Rng rng(derive_seed(seed, {0xc4}));
      const auto r = generator::train_generator(which ? c1 : c4, data, opt, rng);
      l[which] = full_set_loss(r.model, data);
    }
    wins += l[0] < l[1];
    losses += fmt("%s%.4f/%.4f", seed ? ", " : "", l[0], l[1]);
  }
  return {wins == 3, fmt("C=4 (%zu params) vs C=1 (%zu params), %zu steps: final loss %s; C=4 lower on %zu/3",
                         n4, n1, opt.steps, losses.c_str(), wins)};
}

// ---- 7-8: retrieval and trajectories ----

Outcome retrieval(World& w) {
  const auto patches = w.exp.render(w.exp.heldout_patch_ids(100, 1));
  const auto grid = eval::default_key_grid();
  const auto r = eval::retrieval_eval(eval::generator_predictor(w.gen()), w.exp.encoder(), patches, grid);
  const auto o = eval::retrieval_eval(eval::oracle_predictor(), w.exp.encoder(), patches, grid);
  return {r.accuracy >= 0.8 && o.accuracy == 1.0,
          fmt("top-1 %.4f (%zu/%zu, >= 0.8); oracle %.4f (== 1)", r.accuracy, r.correct, r.queries, o.accuracy)};
}

Outcome trajectories(World& w) {
  const auto patches = w.exp.render(w.exp.heldout_patch_ids(10, 2));
  const auto grid = eval::trajectory_grid(TransformKind::kHue, 9);
  const auto pred = eval::generator_predictor(w.gen());
  double paired = 0, cross = 0;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const auto t = eval::trajectory_export(pred, w.exp.encoder(), patches[i], TransformKind::kHue, grid);
    paired += t.paired_distance() / double(patches.size());
    cross += t.cross_distance() / double(patches.size());
    if (i == 0) std::ofstream(w.work / "trajectory_hue.svg") << eval::trajectory_svg(t);
  }
  return {paired < cross, fmt("hue, 9 points, 10 patches: paired %.4f < cross %.4f", paired, cross)};
}

// ---- 9-10: MIL ----

Outcome mil_sweep(World& w) {
  const auto& bags = w.bags();
  const auto& gen = w.gen();
  const auto cal = w.exp.calibrate_noise(bags, gen);
  if (cal.relative_error() >= 0.1) return {false, fmt("noise calibration off by %.1f%%", 100 * cal.relative_error())};
  mil::AugmentContext ctx = w.exp.augment_context();
  ctx.generator = &gen;
  ctx.noise_sigma = cal.sigma;
  double mean[4] = {};
  std::vector<cli::ResultRow> rows;
  for (std::size_t f = 0; f < mil::kFolds; ++f) {
    for (int s = 0; s < 4; ++s) {
      rows.push_back(cli::run_mil_fold(w.exp, bags, f, mil::kAllStrategies[s], 0.1, ctx));
      mean[s] += rows.back().auc / double(mil::kFolds);
    }
  }
  fs::remove(w.work / "results.csv");
  cli::append_results(w.work / "results.csv", rows);
  const double base = mean[0], noise = mean[1], inst = mean[2], wsi = mean[3];
  const bool ok = wsi >= inst && inst > noise && wsi > base && wsi - base >= 0.01;
  return {ok, fmt("AUC base %.4f noise %.4f inst %.4f wsi %.4f; wsi-base %+.4f (>= 0.01); noise calibration %.2f%%",
                  base, noise, inst, wsi, wsi - base, 100 * cal.relative_error())};
}

Outcome sequence_consistency(World& w) {
  const auto& bags = w.bags();
  mil::AugmentContext ctx = w.exp.augment_context();
  ctx.generator = &w.gen();
  ctx.p_aug = 1.0;
  Rng rng(w.exp.seed_for(cli::kSeedMil, 99));
  std::size_t wsi_bad = 0, eligible = 0, diverse = 0;
  for (const auto& b : bags) {
    const auto a = mil::augment_bag(b, mil::Strategy::kWsi, ctx, rng);
    if (a.sequences.size() != b.size() ||
        std::any_of(a.sequences.begin(), a.sequences.end(), [&](const auto& s) { return !(s == a.sequences.front()); }))
      ++wsi_bad;
    if (b.size() < 10) continue;
    ++eligible;
    const auto in = mil::augment_bag(b, mil::Strategy::kInst, ctx, rng);
    std::set<std::string> distinct;
    for (const auto& s : in.sequences) distinct.insert(s.describe());
    diverse += distinct.size() >= 2;
  }
  const double frac = eligible ? double(diverse) / double(eligible) : 0;
  return {wsi_bad == 0 && frac >= 0.99,
          fmt("wsi: %zu/%zu bags with mixed sequences (== 0); inst: %.4f of %zu bags with >= 2 distinct (>= 0.99)",
              wsi_bad, bags.size(), frac, eligible)};
}

// ---- 11: scaling ----

Outcome scaling(World& w) {
  const std::vector<std::size_t> sizes = {12500, 25000, 50000, 100000};
  eval::BenchOptions opt;
  opt.seed = w.exp.seed_for(cli::kSeedBench);
  const auto rec = eval::bench_throughput(generator::GeneratorModel(w.exp.gen_config()), sizes, opt);
  if (rec.size() != sizes.size()) return {false, fmt("only %zu of %zu batch sizes fit the budget", rec.size(), sizes.size())};
  bool ok = true;
  std::string detail;
  for (std::size_t i = 1; i < rec.size(); ++i) {
    const double t = rec[i].seconds / rec[i - 1].seconds;
    const double m = double(rec[i].peak_bytes) / double(rec[i - 1].peak_bytes);
    ok &= t >= 1.5 && t <= 3.0 && m <= 2.0;
    detail += fmt("%s%zu->%zu time x%.2f mem x%.3f", i > 1 ? "; " : "", rec[i - 1].batch, rec[i].batch, t, m);
  }
  detail += fmt("; 100k rows in %.2f s, peak %.1f MiB", rec.back().seconds, double(rec.back().peak_bytes) / (1 << 20));
  return {ok, detail};
}

// ---- 12-13: persistence and leakage ----

std::vector<char> bytes_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome persistence(World& w) {
  const fs::path dir = w.work / "roundtrip";
  fs::create_directories(dir);
  std::vector<std::string> failed;
  auto twice = [&](const std::string& name, auto save, auto load_and_save) {
    save(dir / (name + ".1"));
    load_and_save(dir / (name + ".1"), dir / (name + ".2"));
    if (bytes_of(dir / (name + ".1")) != bytes_of(dir / (name + ".2"))) failed.push_back(name + " bytes");
  };
  const auto& gen = w.gen();
  twice("haug", [&](const fs::path& p) { gen.save(p); },
        [&](const fs::path& a, const fs::path& b) {
          // Weights are stored at 32-bit precision, so values are compared
          // between two loads; outputs are compared with the trained model.
          const auto g = generator::GeneratorModel::load(a);
          g.save(b);
          if (!(generator::GeneratorModel::load(b) == g)) failed.push_back("haug values");
          Rng rng(12);
          const auto patches = w.exp.render(w.exp.heldout_patch_ids(64, 3));
          const auto z = w.exp.encoder().encode_batch(patches).cast<float>();
          std::vector<TransformSequence> seqs;
          for (std::size_t i = 0; i < patches.size(); ++i) seqs.push_back(w.exp.sampler()(rng));
          if (!(generator::augment_batch(g, z, seqs) == generator::augment_batch(gen, z, seqs)))
            failed.push_back("haug inference");
        });
  twice("lenc", [&](const fs::path& p) { w.exp.encoder().save(p); },
        [&](const fs::path& a, const fs::path& b) {
          const auto e = encoder::ToyEncoder::load(a);
          if (!(e == w.exp.encoder())) failed.push_back("lenc values");
          e.save(b);
        });
  const auto& bag = w.bags().front();
  twice("lbag", [&](const fs::path& p) { mil::save_bag(p, bag); },
        [&](const fs::path& a, const fs::path& b) {
          const auto l = mil::load_bag(a);
          if (!(l.embeddings == bag.embeddings) || l.label != bag.label) failed.push_back("lbag values");
          mil::save_bag(b, l);
        });
  const Patch patch = w.exp.render(w.exp.heldout_patch_ids(1, 4)).front();
  twice("lapx", [&](const fs::path& p) { patchlab::save_patch(p, patch); },
        [&](const fs::path& a, const fs::path& b) {
          const auto l = patchlab::load_patch(a);
          if (!(l == patch)) failed.push_back("lapx values");
          patchlab::save_patch(b, l);
        });
  std::string why;
  for (const auto& f : failed) why += " " + f;
  return {failed.empty(), failed.empty() ? "HAUG, LENC, LBAG, LAPX: values, bytes and generator outputs identical"
                                         : "mismatch:" + why};
}

Outcome leakage(World& w) {
  const auto ids = w.exp.generator_patch_ids();
  const std::set<std::uint64_t> gen(ids.begin(), ids.end());
  std::size_t shared = 0, checked = 0;
  for (const auto& f : w.exp.plan().folds) {
    for (const auto* part : {&f.val, &f.test}) {
      for (auto id : mil::patch_ids_of(*part, w.exp.slides())) {
        ++checked;
        shared += gen.count(id);
      }
    }
  }
  return {shared == 0 && checked > 0,
          fmt("%zu generator patches vs %zu val/test patches over %zu folds: %zu shared", gen.size(), checked,
              w.exp.plan().folds.size(), shared)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::vector<int> only;
  std::string work = "acceptance_work", config, weights;
  app.add_option("--only", only, "criteria to run (default all)")->delimiter(',')->check(CLI::Range(1, 13));
  app.add_option("--work", work, "directory for artifacts");
  app.add_option("--config", config, "config file (defaults otherwise)")->check(CLI::ExistingFile);
  app.add_option("--generator", weights, "reuse saved generator weights")->check(CLI::ExistingFile);
  CLI11_PARSE(app, argc, argv);

  try {
    fs::create_directories(work);
    cli::RunConfig cfg = config.empty() ? cli::RunConfig() : cli::RunConfig::load(config);
    World w{cli::Experiment(cfg), work, {}, 0, {}, {}};
    if (!weights.empty()) w.loaded = generator::GeneratorModel::load(weights);

    struct Criterion {
      const char* name;
      std::function<Outcome()> run;
    };
    const std::vector<Criterion> all = {
        {"gradient integrity", [] { return gradients(); }},
        {"transform algebra", [] { return transform_laws(); }},
        {"identity contract", [&] { return identity_contract(w); }},
        {"reconstruction vs invariance", [&] { return reconstruction_gap(w); }},
        {"cross-resolution", [&] { return cross_resolution(w); }},
        {"chunked vs unchunked", [&] { return chunking(w); }},
        {"transform retrieval", [&] { return retrieval(w); }},
        {"hue trajectories", [&] { return trajectories(w); }},
        {"MIL strategy ordering", [&] { return mil_sweep(w); }},
        {"sequence consistency", [&] { return sequence_consistency(w); }},
        {"throughput scaling", [&] { return scaling(w); }},
        {"persistence", [&] { return persistence(w); }},
        {"leakage", [&] { return leakage(w); }},
    };
    std::size_t failed = 0, ran = 0;
    for (std::size_t i = 0; i < all.size(); ++i) {
      if (!only.empty() && std::find(only.begin(), only.end(), int(i + 1)) == only.end()) continue;
      const auto t0 = std::chrono::steady_clock::now();
      Outcome o;
      try {
        o = all[i].run();
      } catch (const std::exception& e) {
        o = {false, std::string("error: ") + e.what()};
      }
      ++ran;
      failed += !o.pass;
      std::printf("[%s] %2zu %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", i + 1, all[i].name, o.detail.c_str(),
                  seconds_since(t0));
      std::fflush(stdout);
    }
    std::printf("%zu/%zu criteria passed\n", ran - failed, ran);
    return failed ? 1 : 0;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(e.exit_code());
  }
}

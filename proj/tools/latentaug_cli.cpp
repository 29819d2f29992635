// latentaug: train the feature-space augmentation generator, run the MIL
// sweep, evaluate and benchmark. Every command writes its resolved config
// next to its outputs.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "latentaug/cli/config.hpp"
#include "latentaug/cli/pipeline.hpp"
#include "latentaug/eval/bench.hpp"
#include "latentaug/eval/protocols.hpp"
#include "latentaug/eval/table.hpp"

namespace fs = std::filesystem;
using namespace latentaug;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "key = value configuration file");
  cmd->add_option("--seed", c.seed, "root seed (overrides the config)");
  cmd->add_option("--out", c.out, "output directory (overrides the config)");
  cmd->add_option("--set", c.overrides, "extra key=value override, repeatable");
}

cli::RunConfig resolve(const Common& c) {
  cli::RunConfig cfg = c.config_path.empty() ? cli::RunConfig() : cli::RunConfig::load(c.config_path);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) cfg.set("seed", std::to_string(*c.seed));
  if (!c.out.empty()) cfg.set("out", c.out);
  return cfg;
}

fs::path prepare_out(const cli::RunConfig& cfg, const std::string& command) {
  const fs::path out = cfg.str("out");
  fs::create_directories(out);
  std::ofstream(out / (command + ".config")) << cfg.resolved();
  return out;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw UsageError("cannot write " + p.string());
  f << text;
}

generator::GeneratorModel load_generator(const fs::path& out) {
  const fs::path p = out / "generator.haug";
  if (!fs::exists(p)) throw DependencyError("generator weights not found at " + p.string() + "; run train-gen first");
  return generator::GeneratorModel::load(p);
}

int cmd_train_gen(const Common& c) {
  const auto cfg = resolve(c);
  const fs::path out = prepare_out(cfg, "train-gen");
  const cli::Experiment exp(cfg);
  auto opt = exp.train_options();
  opt.on_step = [&](std::size_t step, double loss) {
    if ((step + 1) % 500 == 0) std::fprintf(stderr, "step %zu loss %.6f\n", step + 1, loss);
  };
  const auto res = exp.train_generator(opt);
  res.model.save(out / "generator.haug");
  csv::Table curve{{"step", "loss"}, {}};
  for (std::size_t i = 0; i < res.loss_curve.size(); ++i) curve.rows.push_back({std::to_string(i), csv::num(res.loss_curve[i])});
  write_text(out / "gen_loss.csv", csv::to_string(curve));
  std::printf("wrote %s (%zu parameters, %zu steps)\n", (out / "generator.haug").c_str(), res.model.parameter_count(),
              res.loss_curve.size());
  return 0;
}

int cmd_train_mil(const Common& c, const std::string& strategy_name, const std::string& fraction_text,
                  std::size_t resolution) {
  const auto strategy = mil::strategy_from_name(strategy_name);
  if (!strategy) throw UsageError("unknown strategy '" + strategy_name + "'");
  if (fraction_text != "0.1" && fraction_text != "1.0") throw UsageError("--fraction must be 0.1 or 1.0");
  const double fraction = fraction_text == "0.1" ? 0.1 : 1.0;
  const auto cfg = resolve(c);
  const fs::path out = prepare_out(cfg, "train-mil");
  const cli::Experiment exp(cfg);

  std::optional<generator::GeneratorModel> gen;
  if (mil::needs_generator(*strategy)) gen = load_generator(out);
  const auto bags = exp.bags(resolution, out / "bags");
  auto ctx = exp.augment_context();
  if (gen) ctx.generator = &*gen;
  if (*strategy == mil::Strategy::kNoise) {
    ctx.noise_sigma = cfg.num("mil.noise_sigma");
    if (ctx.noise_sigma <= 0) {
      if (!fs::exists(out / "generator.haug")) {
        throw DependencyError("noise needs mil.noise_sigma > 0 or generator weights to calibrate against");
      }
      const auto cal = exp.calibrate_noise(bags, load_generator(out));
      ctx.noise_sigma = cal.sigma;
      std::fprintf(stderr, "noise sigma %.6g (displacement %.4f, relative error %.4f)\n", cal.sigma,
                   cal.generator_displacement, cal.relative_error());
    }
  }
  for (std::size_t fold : cfg.counts("mil.folds")) {
    const auto row = cli::run_mil_fold(exp, bags, fold, *strategy, fraction, ctx, resolution);
    cli::append_results(out / "results.csv", std::span(&row, 1));
    std::printf("fold %zu %s auc %.4f epochs %zu\n", fold, row.strategy.c_str(), row.auc, row.epochs_ran);
  }
  return 0;
}

eval::EvalOptions eval_options(const cli::Experiment& exp, std::uint64_t stream) {
  eval::EvalOptions o;
  o.resamples = exp.config().count("eval.resamples");
  o.seed = exp.seed_for(cli::kSeedEval, stream);
  o.fingerprint = exp.config().fingerprint();
  return o;
}

int cmd_eval(const Common& c, const std::string& which) {
  static const std::vector<std::string> known = {"recon", "invariance", "retrieval", "trajectories", "cross-res"};
  if (std::find(known.begin(), known.end(), which) == known.end()) throw UsageError("unknown evaluation '" + which + "'");
  const auto cfg = resolve(c);
  const fs::path out = prepare_out(cfg, "eval-" + which);
  const cli::Experiment exp(cfg);
  const auto gen = load_generator(out);
  const auto predict = eval::generator_predictor(gen);
  const auto& enc = exp.encoder();

  if (which == "recon" || which == "invariance" || which == "cross-res") {
    const std::size_t res = which == "cross-res" ? 64 : 32;
    const auto patches = exp.render(exp.heldout_patch_ids(cfg.count("eval.patches")), res);
    Rng rng(exp.seed_for(cli::kSeedEval, res));
    const auto pair = res == 64 ? eval::cross_resolution_eval(predict, enc, patches, exp.sampler(), rng, eval_options(exp, res))
                                : eval::reconstruction_eval(predict, enc, patches, exp.sampler(), rng, eval_options(exp, res));
    std::vector<eval::EvalReport> reports;
    if (which != "invariance") reports.push_back(pair.reconstruction);
    if (which != "recon") reports.push_back(pair.invariance);
    const std::string name = which == "cross-res" ? "eval_cross_res.csv" : "eval_" + which + ".csv";
    write_text(out / name, eval::reports_csv(reports));
    for (const auto& r : reports) {
      std::printf("%s@%zu %.4f [%.4f, %.4f] n=%zu\n", r.metric.c_str(), r.resolution, r.value, r.ci_lo, r.ci_hi, r.n);
    }
  } else if (which == "retrieval") {
    const auto patches = exp.render(exp.heldout_patch_ids(cfg.count("eval.retrieval_patches"), 1));
    const auto grid = eval::default_key_grid();
    const auto r = eval::retrieval_eval(predict, enc, patches, grid);
    csv::Table t{{"accuracy", "correct", "queries", "grid_size", "grid", "fingerprint"}, {}};
    std::string desc;
    for (const auto& s : grid) desc += (desc.empty() ? "" : " ") + s.describe();
    t.rows.push_back({csv::num(r.accuracy), std::to_string(r.correct), std::to_string(r.queries),
                      std::to_string(r.grid_size), desc, cfg.fingerprint()});
    write_text(out / "eval_retrieval.csv", csv::to_string(t));
    std::printf("retrieval top-1 %.4f (%zu/%zu, grid %zu)\n", r.accuracy, r.correct, r.queries, r.grid_size);
  } else {
    const auto patches = exp.render(exp.heldout_patch_ids(cfg.count("eval.trajectory_patches"), 2));
    const std::size_t points = cfg.count("eval.trajectory_points");
    for (const auto& name : cfg.list("eval.trajectory_kinds")) {
      const auto kind = patchlab::kind_from_name(name);
      if (!kind) throw UsageError("unknown transform kind '" + name + "'");
      const auto grid = eval::trajectory_grid(*kind, points);
      for (std::size_t p = 0; p < patches.size(); ++p) {
        const auto t = eval::trajectory_export(predict, enc, patches[p], *kind, grid);
        const std::string stem = "trajectory_" + name + (patches.size() > 1 ? "_" + std::to_string(p) : "");
        write_text(out / (stem + ".svg"), eval::trajectory_svg(t));
        write_text(out / (stem + ".csv"), eval::trajectory_csv(t));
        std::printf("%s: paired %.4f cross %.4f\n", stem.c_str(), t.paired_distance(), t.cross_distance());
      }
    }
  }
  return 0;
}

int cmd_bench(const Common& c, const std::vector<std::size_t>& sizes_flag) {
  const auto cfg = resolve(c);
  const fs::path out = prepare_out(cfg, "bench");
  const cli::Experiment exp(cfg);
  const auto gen = load_generator(out);
  const std::vector<std::size_t> sizes = sizes_flag.empty() ? cfg.counts("bench.batch_sizes") : sizes_flag;
  eval::BenchOptions opt;
  opt.mem_budget = std::int64_t(cfg.count("bench.mem_budget_mb")) << 20;
  opt.repeats = cfg.count("bench.repeats");
  opt.seed = exp.seed_for(cli::kSeedBench);
  const auto recs = eval::bench_throughput(gen, sizes, opt);
  write_text(out / "bench.csv", eval::bench_csv(recs));
  write_text(out / "bench.svg", eval::bench_svg(recs));
  for (const auto& r : recs) {
    std::printf("batch %zu: %.4f s, %.0f rows/s, peak %.1f MiB\n", r.batch, r.seconds, r.throughput,
                double(r.peak_bytes) / (1 << 20));
  }
  if (recs.size() < sizes.size()) {
    std::fprintf(stderr, "stopped after %zu of %zu batch sizes: memory budget\n", recs.size(), sizes.size());
    return static_cast<int>(ExitCode::kNumeric);
  }
  return 0;
}

int cmd_table(const std::string& results, const std::string& out_path) {
  std::ifstream in(results);
  if (!in) throw UsageError("cannot read " + results);
  const auto t = eval::strategy_table(csv::read(in));
  const std::string text = eval::strategy_table_csv(t);
  if (out_path.empty()) {
    std::fputs(text.c_str(), stdout);
  } else {
    write_text(out_path, text);
  }
  for (const auto& k : t.missing) {
    std::fprintf(stderr, "missing cell: %s fraction %s resolution %s\n", k.strategy.c_str(), k.fraction.c_str(),
                 k.resolution.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latentaug: feature-space augmentation for multiple-instance learning"};
  app.require_subcommand(1);

  Common gen_c, mil_c, eval_c, retr_c, traj_c, bench_c;
  auto* train_gen = app.add_subcommand("train-gen", "train the generator; writes generator.haug and gen_loss.csv");
  add_common(train_gen, gen_c);

  auto* train_mil = app.add_subcommand("train-mil", "run the MIL folds for one strategy; appends to results.csv");
  add_common(train_mil, mil_c);
  std::string strategy = "base", fraction = "0.1";
  std::size_t resolution = 32;
  train_mil->add_option("--strategy", strategy, "base, noise, inst or wsi")
      ->check(CLI::IsMember({"base", "noise", "inst", "wsi"}));
  train_mil->add_option("--fraction", fraction, "training data fraction: 0.1 or 1.0");
  train_mil->add_option("--resolution", resolution, "patch resolution of the bags: 32 or 64")
      ->check(CLI::IsMember({32, 64}));

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a trained generator");
  add_common(eval_cmd, eval_c);
  std::string which;
  eval_cmd->add_option("which", which, "recon, invariance, retrieval, trajectories or cross-res")->required();

  auto* retrieve = app.add_subcommand("retrieve", "same as eval retrieval");
  add_common(retrieve, retr_c);
  auto* trajectories = app.add_subcommand("trajectories", "same as eval trajectories");
  add_common(trajectories, traj_c);

  auto* bench = app.add_subcommand("bench", "time the 32-bit inference path over batch sizes");
  add_common(bench, bench_c);
  std::vector<std::size_t> batch_sizes;
  bench->add_option("--batch-sizes", batch_sizes, "ascending batch sizes")->delimiter(',');

  auto* table = app.add_subcommand("table", "aggregate results.csv into mean and std per cell");
  std::string results, table_out;
  table->add_option("results", results, "results CSV")->required();
  table->add_option("-o,--output", table_out, "write the table here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
  }

  try {
    if (*train_gen) return cmd_train_gen(gen_c);
    if (*train_mil) return cmd_train_mil(mil_c, strategy, fraction, resolution);
    if (*eval_cmd) return cmd_eval(eval_c, which);
    if (*retrieve) return cmd_eval(retr_c, "retrieval");
    if (*trajectories) return cmd_eval(traj_c, "trajectories");
    if (*bench) return cmd_bench(bench_c, batch_sizes);
    if (*table) return cmd_table(results, table_out);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(ExitCode::kInternal);
  }
  return 0;
}

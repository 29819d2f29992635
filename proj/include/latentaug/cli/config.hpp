#pragma once

// key = value run configuration. Every key has a default; unknown keys are
// rejected so that typos cannot silently fall back to defaults.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "latentaug/core/csv.hpp"
#include "latentaug/core/error.hpp"
#include "latentaug/eval/report.hpp"
#include "latentaug/patchlab/transforms.hpp"

namespace latentaug::cli {

inline const std::map<std::string, std::string>& config_defaults() {
  static const std::map<std::string, std::string> d = {
      {"seed", "42"},
      {"out", "runs/default"},
      // frozen encoder
      {"encoder.seed", "42"},
      {"encoder.dim", "128"},
      {"encoder.hidden", "512"},
      // generator architecture and training
      {"gen.chunks", "4"},
      {"gen.blocks", "4"},
      {"gen.heads", "4"},
      {"gen.k_max", "4"},
      {"gen.ffn_mult", "4"},
      {"gen.lambda_id", "1"},
      {"gen.steps", "4000"},
      {"gen.batch", "64"},
      {"gen.lr", "0.001"},
      {"gen.weight_decay", "1e-05"},
      {"gen.patches", "2000"},
      {"gen.views", "4"},
      // transform sampler used for training and augmentation
      {"sampler.k_max", "4"},
      {"sampler.kinds", "all"},
      // synthetic slides and splits
      {"data.slides", "400"},
      {"data.stain_strength", "0.1"},
      {"data.stain_k_max", "3"},
      // MIL
      {"mil.lr", "0.001"},
      {"mil.weight_decay", "1e-05"},
      {"mil.accumulation", "4"},
      {"mil.patience", "30"},
      {"mil.max_epochs", "200"},
      {"mil.hidden", "64"},
      {"mil.p_aug", "0.75"},
      {"mil.aug_sampler", "stain"},
      {"mil.aug_strength", "0.1"},
      {"mil.scorer", "gated"},
      {"mil.folds", "0,1,2,3,4"},
      {"mil.noise_sigma", "0"},
      {"mil.calibration_bags", "20"},
      // evaluation
      {"eval.patches", "1000"},
      {"eval.resamples", "1000"},
      {"eval.retrieval_patches", "100"},
      {"eval.trajectory_patches", "1"},
      {"eval.trajectory_kinds", "hue,hed"},
      {"eval.trajectory_points", "9"},
      {"bench.batch_sizes", "12500,25000,50000,100000"},
      {"bench.mem_budget_mb", "4096"},
      {"bench.repeats", "1"},
  };
  return d;
}

class RunConfig {
 public:
  RunConfig() : values_(config_defaults()) {}

  static RunConfig parse(std::istream& in, const std::string& origin = "config") {
    RunConfig c;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto eq = line.find('=');
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      if (eq == std::string::npos) {
        throw UsageError(origin + ":" + std::to_string(lineno) + ": expected key = value");
      }
      c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return c;
  }

  static RunConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read config " + path.string());
    return parse(in, path.string());
  }

  void set(const std::string& key, const std::string& value) {
    if (!values_.count(key)) throw UsageError("unknown config key '" + key + "'");
    values_[key] = value;
  }

  const std::string& str(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw UsageError("unknown config key '" + key + "'");
    return it->second;
  }
  double num(const std::string& key) const {
    try {
      return csv::parse_double(str(key));
    } catch (const UsageError&) {
      throw UsageError("config key '" + key + "' is not a number: '" + str(key) + "'");
    }
  }
  std::size_t count(const std::string& key) const {
    const double v = num(key);
    if (v < 0 || v != double(std::uint64_t(v))) {
      throw UsageError("config key '" + key + "' must be a non-negative integer");
    }
    return static_cast<std::size_t>(v);
  }
  std::uint64_t u64(const std::string& key) const {
    const std::string& s = str(key);
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw UsageError("config key '" + key + "' must be an unsigned integer");
    }
  }
  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    for (auto& s : csv::split(str(key)))
      if (!trim(s).empty()) out.push_back(trim(s));
    return out;
  }
  std::vector<std::size_t> counts(const std::string& key) const {
    std::vector<std::size_t> out;
    for (const auto& s : list(key)) {
      const double v = csv::parse_double(s);
      if (v < 0 || v != double(std::uint64_t(v))) throw UsageError("config key '" + key + "' lists a non-integer");
      out.push_back(static_cast<std::size_t>(v));
    }
    return out;
  }

  std::vector<patchlab::TransformKind> kinds(const std::string& key) const {
    if (str(key) == "all") return {patchlab::kAllKinds.begin(), patchlab::kAllKinds.end()};
    std::vector<patchlab::TransformKind> out;
    for (const auto& n : list(key)) {
      const auto k = patchlab::kind_from_name(n);
      if (!k) throw UsageError("config key '" + key + "' names unknown transform '" + n + "'");
      out.push_back(*k);
    }
    if (out.empty()) throw UsageError("config key '" + key + "' is empty");
    return out;
  }

  /// Every key, sorted, one per line.
  std::string resolved() const {
    std::ostringstream s;
    for (const auto& [k, v] : values_) s << k << " = " << v << '\n';
    return s.str();
  }

  /// Hash of everything except the output directory.
  std::string fingerprint() const {
    std::ostringstream s;
    for (const auto& [k, v] : values_)
      if (k != "out") s << k << '=' << v << '\n';
    return eval::fingerprint(s.str());
  }

  /// Hash of the keys that determine the synthetic bags.
  std::string data_fingerprint(std::size_t resolution) const {
    std::ostringstream s;
    for (const char* k : {"seed", "encoder.seed", "encoder.dim", "encoder.hidden", "data.slides", "data.stain_strength",
                          "data.stain_k_max"})
      s << k << '=' << str(k) << '\n';
    s << "resolution=" << resolution << '\n';
    return eval::fingerprint(s.str());
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

}  // namespace latentaug::cli

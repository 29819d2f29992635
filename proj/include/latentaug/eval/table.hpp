#pragma once

// Aggregation of MIL result rows into mean +- std per
// (strategy, data fraction, resolution), plus gains over Noise.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "latentaug/core/csv.hpp"

namespace latentaug::eval {

struct CellKey {
  std::string strategy;
  std::string fraction;
  std::string resolution;
  auto operator<=>(const CellKey&) const = default;
};

struct Cell {
  std::size_t n = 0;
  double mean = 0;
  std::optional<double> std;  // absent with fewer than two folds
};

struct StrategyTable {
  std::map<CellKey, Cell> cells;
  std::vector<CellKey> missing;       // expected cells with no rows
  std::vector<CellKey> single_fold;   // cells whose std is absent
  std::map<CellKey, double> gain_over_noise;  // keyed by the non-Noise strategy
};

inline StrategyTable strategy_table(const csv::Table& results) {
  const std::size_t c_strategy = results.column("strategy");
  const std::size_t c_fraction = results.column("data_fraction");
  const std::size_t c_resolution = results.column("resolution");
  const std::size_t c_auc = results.column("auc");
  std::map<CellKey, std::vector<double>> values;
  std::vector<std::string> strategies, fractions, resolutions;
  auto note = [](std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
  };
  for (const auto& row : results.rows) {
    CellKey k{row.at(c_strategy), row.at(c_fraction), row.at(c_resolution)};
    values[k].push_back(csv::parse_double(row.at(c_auc)));
    note(strategies, k.strategy);
    note(fractions, k.fraction);
    note(resolutions, k.resolution);
  }
  StrategyTable t;
  for (const auto& s : strategies) {
    for (const auto& f : fractions) {
      for (const auto& r : resolutions) {
        const CellKey k{s, f, r};
        const auto it = values.find(k);
        if (it == values.end()) {
          t.missing.push_back(k);
          continue;
        }
        const auto& v = it->second;
        Cell c;
        c.n = v.size();
        for (double x : v) c.mean += x;
        c.mean /= double(c.n);
        if (c.n >= 2) {
          double ss = 0;
          for (double x : v) ss += (x - c.mean) * (x - c.mean);
          c.std = std::sqrt(ss / double(c.n - 1));
        } else {
          t.single_fold.push_back(k);
        }
        t.cells[k] = c;
      }
    }
  }
  for (const auto& [k, c] : t.cells) {
    if (k.strategy == "noise") continue;
    const auto noise = t.cells.find(CellKey{"noise", k.fraction, k.resolution});
    if (noise != t.cells.end()) t.gain_over_noise[k] = c.mean - noise->second.mean;
  }
  return t;
}

inline std::string strategy_table_csv(const StrategyTable& t) {
  csv::Table out{{"strategy", "data_fraction", "resolution", "n", "mean", "std", "gain_over_noise", "flag"}, {}};
  for (const auto& [k, c] : t.cells) {
    const auto g = t.gain_over_noise.find(k);
    out.rows.push_back({k.strategy, k.fraction, k.resolution, std::to_string(c.n), csv::num(c.mean),
                        c.std ? csv::num(*c.std) : "", g != t.gain_over_noise.end() ? csv::num(g->second) : "",
                        c.std ? "" : "single_fold"});
  }
  for (const auto& k : t.missing) out.rows.push_back({k.strategy, k.fraction, k.resolution, "0", "", "", "", "missing"});
  return csv::to_string(out);
}

}  // namespace latentaug::eval

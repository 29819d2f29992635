#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "latentaug/core/csv.hpp"
#include "latentaug/core/error.hpp"
#include "latentaug/core/rng.hpp"

namespace latentaug::eval {

inline constexpr std::size_t kMinResamples = 1000;

struct EvalOptions {
  std::size_t resamples = kMinResamples;
  std::uint64_t seed = 0;       // drives the bootstrap only
  std::string fingerprint;      // of the resolved config that produced the inputs
};

struct EvalReport {
  std::string metric;
  double value = 0;
  double ci_lo = 0;
  double ci_hi = 0;
  std::size_t n = 0;
  std::size_t resamples = 0;
  std::size_t resolution = 32;
  std::string fingerprint;

  bool overlaps(const EvalReport& o) const { return ci_lo <= o.ci_hi && o.ci_lo <= ci_hi; }
};

inline double mean_of(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x;
  return s / double(v.size());
}

// Linear interpolation between order statistics.
inline double quantile_sorted(std::span<const double> sorted, double q) {
  const double pos = q * double(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - double(lo)) * (sorted[hi] - sorted[lo]);
}

/// Mean with a 95% percentile-bootstrap interval. The point estimate is the
/// plain sample mean, so it does not depend on the resample count.
inline EvalReport bootstrap_report(std::string metric, std::span<const double> samples, const EvalOptions& opt) {
  if (samples.empty()) throw ContractError("bootstrap over an empty sample");
  if (opt.resamples < kMinResamples) {
    throw ParameterError("bootstrap needs at least " + std::to_string(kMinResamples) + " resamples");
  }
  EvalReport r;
  r.metric = std::move(metric);
  r.value = mean_of(samples);
  r.n = samples.size();
  r.resamples = opt.resamples;
  r.fingerprint = opt.fingerprint;
  Rng rng(derive_seed(opt.seed, {0xb007}));
  std::vector<double> means(opt.resamples);
  for (double& m : means) {
    double s = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) s += samples[rng.index(samples.size())];
    m = s / double(samples.size());
  }
  std::sort(means.begin(), means.end());
  r.ci_lo = std::min(quantile_sorted(means, 0.025), r.value);
  r.ci_hi = std::max(quantile_sorted(means, 0.975), r.value);
  return r;
}

inline const std::vector<std::string>& report_header() {
  static const std::vector<std::string> h = {"metric", "value", "ci_lo", "ci_hi", "n", "resamples", "resolution",
                                             "fingerprint"};
  return h;
}

inline std::vector<std::string> report_row(const EvalReport& r) {
  return {r.metric, csv::num(r.value), csv::num(r.ci_lo), csv::num(r.ci_hi), std::to_string(r.n),
          std::to_string(r.resamples), std::to_string(r.resolution), r.fingerprint};
}

inline std::string reports_csv(std::span<const EvalReport> reports) {
  csv::Table t{report_header(), {}};
  for (const auto& r : reports) t.rows.push_back(report_row(r));
  return csv::to_string(t);
}

// FNV-1a over the text; used to tag outputs with the config that made them.
inline std::string fingerprint(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace latentaug::eval

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "latentaug/core/csv.hpp"
#include "latentaug/core/error.hpp"
#include "latentaug/core/rng.hpp"
#include "latentaug/generator/forward.hpp"
#include "latentaug/patchlab/sampler.hpp"
#include "latentaug/tensorcore/autodiff.hpp"
#include "latentaug/tensorcore/memory.hpp"

namespace latentaug::eval {

struct BenchRecord {
  std::size_t batch = 0;
  double seconds = 0;
  std::int64_t peak_bytes = 0;  // tensor high-water mark above the inputs
  double throughput = 0;        // rows per second
  std::size_t workers = 1;
  std::uint64_t tape_nodes = 0;  // autodiff nodes created during the pass; always 0
};

struct BenchOptions {
  std::int64_t mem_budget = std::int64_t(4) << 30;
  std::size_t repeats = 1;  // best-of timing
  std::uint64_t seed = 0;
};

/// Times one 32-bit forward pass per batch size, all rows sharing one
/// sampled sequence (a whole slide augmented at once). A batch size whose
/// peak, extrapolated linearly from the previous one, would exceed the
/// budget ends the run; if the first size itself exceeds it, that is a
/// CapacityError.
inline std::vector<BenchRecord> bench_throughput(const generator::GeneratorModel& m, std::span<const std::size_t> batch_sizes,
                                                 const BenchOptions& opt = {}) {
  if (batch_sizes.empty()) throw UsageError("bench: no batch sizes");
  for (std::size_t i = 0; i < batch_sizes.size(); ++i) {
    if (batch_sizes[i] == 0) throw UsageError("bench: batch sizes must be positive");
    if (i && batch_sizes[i] <= batch_sizes[i - 1]) throw UsageError("bench: batch sizes must be strictly ascending");
  }
  using clock = std::chrono::steady_clock;
  Rng rng(derive_seed(opt.seed, {0xbe7c4}));
  const auto seq = patchlab::sample_sequence(rng, m.config().k_max);
  const std::size_t d = m.config().d;
  std::vector<BenchRecord> out;
  for (std::size_t b : batch_sizes) {
    if (!out.empty()) {
      const double per_row = double(out.back().peak_bytes) / double(out.back().batch);
      if (per_row * double(b) > double(opt.mem_budget)) break;
    }
    tensorcore::Tensor32 z({b, d});
    for (float& v : z.data()) v = float(rng.normal(0.0, 1.0));
    BenchRecord r;
    r.batch = b;
    r.seconds = 1e300;
    for (std::size_t rep = 0; rep < std::max<std::size_t>(opt.repeats, 1); ++rep) {
      const std::int64_t base = tensorcore::MemoryStats::current();
      tensorcore::MemoryStats::reset_peak();
      const std::uint64_t nodes = tensorcore::Tape::nodes_created();
      const auto t0 = clock::now();
      const tensorcore::Tensor32 za = generator::augment_batch(m, z, seq);
      const double s = std::chrono::duration<double>(clock::now() - t0).count();
      r.peak_bytes = std::max(r.peak_bytes, tensorcore::MemoryStats::peak() - base);
      r.tape_nodes += tensorcore::Tape::nodes_created() - nodes;
      r.seconds = std::min(r.seconds, s);
    }
    r.throughput = double(b) / r.seconds;
    if (r.peak_bytes > opt.mem_budget) {
      if (out.empty()) {
        throw CapacityError("bench: batch " + std::to_string(b) + " needs " + std::to_string(r.peak_bytes) +
                            " bytes, over the budget of " + std::to_string(opt.mem_budget));
      }
      break;
    }
    out.push_back(r);
  }
  return out;
}

inline std::string bench_csv(std::span<const BenchRecord> recs) {
  csv::Table t{{"batch", "seconds", "peak_bytes", "throughput", "workers"}, {}};
  for (const auto& r : recs) {
    t.rows.push_back({std::to_string(r.batch), csv::num(r.seconds), std::to_string(r.peak_bytes), csv::num(r.throughput),
                      std::to_string(r.workers)});
  }
  return csv::to_string(t);
}

/// Log-log plot of wall time against batch size.
inline std::string bench_svg(std::span<const BenchRecord> recs) {
  constexpr double kW = 520, kH = 400, kPad = 50;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << kPad << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">"
    << "forward time vs batch size (log-log)</text>\n";
  if (!recs.empty()) {
    double lx0 = 1e300, lx1 = -1e300, ly0 = 1e300, ly1 = -1e300;
    for (const auto& r : recs) {
      lx0 = std::min(lx0, std::log10(double(r.batch)));
      lx1 = std::max(lx1, std::log10(double(r.batch)));
      ly0 = std::min(ly0, std::log10(r.seconds));
      ly1 = std::max(ly1, std::log10(r.seconds));
    }
    const double sx = std::max(lx1 - lx0, 1e-9), sy = std::max(ly1 - ly0, 1e-9);
    auto px = [&](double b) { return kPad + (std::log10(b) - lx0) / sx * (kW - 2 * kPad); };
    auto py = [&](double t) { return kH - kPad - (std::log10(t) - ly0) / sy * (kH - 2 * kPad); };
    s << "<line x1=\"" << kPad << "\" y1=\"" << kH - kPad << "\" x2=\"" << kW - kPad << "\" y2=\"" << kH - kPad
      << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << kPad << "\" y1=\"" << kPad << "\" x2=\"" << kPad << "\" y2=\"" << kH - kPad
      << "\" stroke=\"black\"/>\n";
    s << "<polyline fill=\"none\" stroke=\"#1f77b4\" points=\"";
    for (const auto& r : recs) s << px(double(r.batch)) << ',' << py(r.seconds) << ' ';
    s << "\"/>\n";
    for (const auto& r : recs) {
      s << "<circle cx=\"" << px(double(r.batch)) << "\" cy=\"" << py(r.seconds) << "\" r=\"4\" fill=\"#1f77b4\"/>\n";
      s << "<text x=\"" << px(double(r.batch)) << "\" y=\"" << kH - kPad + 16
        << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">" << r.batch << "</text>\n";
    }
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace latentaug::eval

#pragma once

// Reconstruction / invariance cosines, augmented-embedding retrieval and
// PCA trajectories. Every protocol talks to the generator through a
// Predictor so the harness can be calibrated with an oracle.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "latentaug/core/csv.hpp"
#include "latentaug/core/error.hpp"
#include "latentaug/core/rng.hpp"
#include "latentaug/encoder/invariance.hpp"
#include "latentaug/eval/report.hpp"
#include "latentaug/generator/forward.hpp"

namespace latentaug::eval {

using patchlab::Patch;
using patchlab::TransformKind;
using patchlab::TransformSequence;
using patchlab::TransformStep;
using tensorcore::Tensor;

/// Predicts augmented embeddings for rows of `z`, one sequence per row.
/// `zbar`, the encodings of the truly augmented images, is only there for
/// the oracle; real predictors must ignore it.
using Predictor = std::function<Tensor(const Tensor& z, std::span<const TransformSequence> seqs, const Tensor& zbar)>;

inline Predictor generator_predictor(const generator::GeneratorModel& m) {
  return [&m](const Tensor& z, std::span<const TransformSequence> seqs, const Tensor&) {
    return generator::augment_batch(m, z.cast<float>(), seqs).cast<double>();
  };
}

inline Predictor oracle_predictor() {
  return [](const Tensor&, std::span<const TransformSequence>, const Tensor& zbar) { return zbar; };
}

inline std::size_t common_resolution(std::span<const Patch> patches) {
  if (patches.empty()) throw ContractError("evaluation needs at least one patch");
  const std::size_t r = patches.front().width();
  for (const Patch& p : patches)
    if (p.width() != r || p.height() != r) throw ContractError("evaluation patches must share one square resolution");
  return r;
}

struct CosinePair {
  EvalReport reconstruction;  // cos(generated, true augmented)
  EvalReport invariance;      // cos(original, true augmented)
};

/// One sampled sequence per patch; both metrics are computed against the
/// same truly augmented embeddings, so the two reports share a pool.
inline CosinePair reconstruction_eval(const Predictor& predict, const encoder::ToyEncoder& enc,
                                      std::span<const Patch> patches, const encoder::SequenceSampler& sampler, Rng& rng,
                                      const EvalOptions& opt = {}) {
  const std::size_t res = common_resolution(patches);
  constexpr std::size_t kBlock = 256;
  std::vector<double> rec, inv;
  for (std::size_t start = 0; start < patches.size(); start += kBlock) {
    const auto block = patches.subspan(start, std::min(kBlock, patches.size() - start));
    std::vector<TransformSequence> seqs;
    std::vector<Patch> aug;
    for (const Patch& p : block) {
      seqs.push_back(sampler(rng));
      aug.push_back(patchlab::apply_sequence(p, seqs.back()));
    }
    const Tensor z = enc.encode_batch(block);
    const Tensor zbar = enc.encode_batch(aug);
    const Tensor zhat = predict(z, seqs, zbar);
    for (std::size_t i = 0; i < block.size(); ++i) {
      rec.push_back(tensorcore::cosine(zhat.row(i), zbar.row(i)));
      inv.push_back(tensorcore::cosine(z.row(i), zbar.row(i)));
    }
  }
  EvalOptions inv_opt = opt;
  inv_opt.seed = derive_seed(opt.seed, {1});
  CosinePair out{bootstrap_report("reconstruction", rec, opt), bootstrap_report("invariance", inv, inv_opt)};
  out.reconstruction.resolution = out.invariance.resolution = res;
  return out;
}

/// Same metrics on 64-px patches, with a generator trained at 32 px.
inline CosinePair cross_resolution_eval(const Predictor& predict, const encoder::ToyEncoder& enc,
                                        std::span<const Patch> patches64, const encoder::SequenceSampler& sampler,
                                        Rng& rng, const EvalOptions& opt = {}) {
  if (common_resolution(patches64) != 64) throw ContractError("cross-resolution evaluation expects 64-px patches");
  return reconstruction_eval(predict, enc, patches64, sampler, rng, opt);
}

// ---- retrieval ----

/// Hue and contrast at four strengths each, blur and erosion: ten keys.
/// Hue stops at +-0.4 because shifts of +0.5 and -0.5 are the same half-turn
/// and would make two keys identical.
inline std::vector<TransformStep> default_key_grid() {
  std::vector<TransformStep> g;
  for (double h : {-0.4, -0.2, 0.2, 0.4}) g.push_back(TransformStep::hue(h));
  for (double c : {0.5, 0.75, 1.25, 1.5}) g.push_back(TransformStep::contrast(c));
  g.push_back(TransformStep::blur());
  g.push_back(TransformStep::erosion());
  return g;
}

struct RetrievalResult {
  double accuracy = 0;
  std::size_t queries = 0;
  std::size_t correct = 0;
  std::size_t grid_size = 0;
};

/// For each patch and each grid entry, the query is the predicted embedding
/// of that transform; keys are the encodings of every truly transformed
/// image. A query is correct when its nearest key (cosine) is its own entry.
inline RetrievalResult retrieval_eval(const Predictor& predict, const encoder::ToyEncoder& enc,
                                      std::span<const Patch> patches, std::span<const TransformStep> grid) {
  if (grid.size() < 2) throw ContractError("retrieval needs a key grid of at least 2 entries");
  common_resolution(patches);
  RetrievalResult r;
  r.grid_size = grid.size();
  std::vector<TransformSequence> seqs;
  for (const TransformStep& s : grid) seqs.push_back(TransformSequence{{s}});
  for (const Patch& p : patches) {
    std::vector<Patch> keyed;
    for (const auto& s : seqs) keyed.push_back(patchlab::apply_sequence(p, s));
    const Tensor keys = enc.encode_batch(keyed);
    const std::vector<double> z0 = enc.encode(p);
    Tensor z({grid.size(), z0.size()});
    for (std::size_t i = 0; i < grid.size(); ++i) std::copy(z0.begin(), z0.end(), z.ptr() + i * z0.size());
    const Tensor q = predict(z, seqs, keys);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      std::size_t best = 0;
      double best_cos = -2;
      for (std::size_t k = 0; k < grid.size(); ++k) {
        const double c = tensorcore::cosine(q.row(i), keys.row(k));
        if (c > best_cos) {
          best_cos = c;
          best = k;
        }
      }
      r.correct += best == i;
      ++r.queries;
    }
  }
  r.accuracy = double(r.correct) / double(r.queries);
  return r;
}

// ---- trajectories ----

/// Eigen-decomposition of a small symmetric matrix by cyclic Jacobi
/// rotations. Returns eigenvalues descending with matching column vectors.
inline void symmetric_eigen(std::vector<double> a, std::size_t n, std::vector<double>& values,
                            std::vector<double>& vectors) {
  vectors.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) vectors[i * n + i] = 1.0;
  auto A = [&](std::size_t i, std::size_t j) -> double& { return a[i * n + j]; };
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += A(i, j) * A(i, j);
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(A(p, q)) < 1e-300) continue;
        const double theta = (A(q, q) - A(p, p)) / (2 * A(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = A(k, p), akq = A(k, q);
          A(k, p) = c * akp - s * akq;
          A(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = A(p, k), aqk = A(q, k);
          A(p, k) = c * apk - s * aqk;
          A(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = vectors[k * n + p], vkq = vectors[k * n + q];
          vectors[k * n + p] = c * vkp - s * vkq;
          vectors[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return A(x, x) > A(y, y); });
  std::vector<double> sorted_vec(n * n);
  values.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    values[j] = A(order[j], order[j]);
    for (std::size_t k = 0; k < n; ++k) sorted_vec[k * n + j] = vectors[k * n + order[j]];
  }
  vectors = std::move(sorted_vec);
}

/// Projects rows of `x` [n, d] onto the top-2 principal components of the
/// centred rows. Components come from the full d x d covariance; each is
/// signed so that its first nonzero loading is positive.
inline Tensor pca2(const Tensor& x) {
  const std::size_t n = x.dim(0), d = x.dim(1);
  Tensor c = x;
  for (std::size_t j = 0; j < d; ++j) {
    double m = 0;
    for (std::size_t i = 0; i < n; ++i) m += c.at(i, j);
    m /= double(n);
    for (std::size_t i = 0; i < n; ++i) c.at(i, j) -= m;
  }
  std::vector<double> cov(d * d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = a; b < d; ++b) cov[a * d + b] += c.at(i, a) * c.at(i, b);
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a; b < d; ++b) cov[b * d + a] = cov[a * d + b] /= double(n - 1);
  std::vector<double> vals, vecs;
  symmetric_eigen(std::move(cov), d, vals, vecs);
  Tensor out({n, 2});
  for (std::size_t k = 0; k < 2 && k < d; ++k) {
    double sign = 1;
    for (std::size_t a = 0; a < d; ++a) {
      if (std::abs(vecs[a * d + k]) > 1e-12) {
        sign = vecs[a * d + k] > 0 ? 1 : -1;
        break;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0;
      for (std::size_t a = 0; a < d; ++a) s += c.at(i, a) * vecs[a * d + k];
      out.at(i, k) = sign * s;
    }
  }
  return out;
}

struct Trajectory {
  TransformKind kind = TransformKind::kHue;
  std::vector<double> grid;
  Tensor truth;      // [n, 2]
  Tensor generated;  // [n, 2]

  static double dist(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
    return std::hypot(a.at(i, 0) - b.at(j, 0), a.at(i, 1) - b.at(j, 1));
  }
  // Mean distance between generated and true points at the same parameter.
  double paired_distance() const {
    double s = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) s += dist(generated, i, truth, i);
    return s / double(grid.size());
  }
  // Mean distance between generated and true points at different parameters.
  double cross_distance() const {
    double s = 0;
    for (std::size_t i = 0; i < grid.size(); ++i)
      for (std::size_t j = 0; j < grid.size(); ++j)
        if (i != j) s += dist(generated, i, truth, j);
    return s / double(grid.size() * (grid.size() - 1));
  }
};

/// Step of a continuous kind at grid value v; multi-parameter kinds (HED)
/// set every parameter to v.
inline TransformStep grid_step(TransformKind kind, double v) {
  const auto& s = patchlab::spec(kind);
  TransformStep st{kind, std::vector<double>(s.param_count, v)};
  st.validate();
  return st;
}

/// `points` evenly spaced values over the kind's full range.
inline std::vector<double> trajectory_grid(TransformKind kind, std::size_t points) {
  const auto& ks = patchlab::spec(kind);
  std::vector<double> grid;
  for (std::size_t i = 0; i < points; ++i) {
    grid.push_back(points == 1 ? ks.identity : ks.lo + (ks.hi - ks.lo) * double(i) / double(points - 1));
  }
  return grid;
}

inline Trajectory trajectory_export(const Predictor& predict, const encoder::ToyEncoder& enc, const Patch& patch,
                                    TransformKind kind, std::span<const double> grid) {
  if (patchlab::spec(kind).discrete) throw ContractError("trajectories need a continuous transform kind");
  if (grid.size() < 3) throw ContractError("trajectory grid needs at least 3 points");
  const std::size_t n = grid.size();
  std::vector<TransformSequence> seqs;
  std::vector<Patch> aug;
  for (double v : grid) {
    seqs.push_back(TransformSequence{{grid_step(kind, v)}});
    aug.push_back(patchlab::apply_sequence(patch, seqs.back()));
  }
  const Tensor zbar = enc.encode_batch(aug);
  const std::vector<double> z0 = enc.encode(patch);
  const std::size_t d = z0.size();
  Tensor z({n, d});
  for (std::size_t i = 0; i < n; ++i) std::copy(z0.begin(), z0.end(), z.ptr() + i * d);
  const Tensor zhat = predict(z, seqs, zbar);
  Tensor both({2 * n, d});
  std::copy(zbar.data().begin(), zbar.data().end(), both.ptr());
  std::copy(zhat.data().begin(), zhat.data().end(), both.ptr() + n * d);
  const Tensor xy = pca2(both);
  Trajectory t;
  t.kind = kind;
  t.grid.assign(grid.begin(), grid.end());
  t.truth = Tensor({n, 2});
  t.generated = Tensor({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < 2; ++k) {
      t.truth.at(i, k) = xy.at(i, k);
      t.generated.at(i, k) = xy.at(n + i, k);
    }
  }
  return t;
}

inline std::string trajectory_csv(const Trajectory& t) {
  csv::Table tab{{"kind", "param", "series", "pc1", "pc2"}, {}};
  const std::string kind(patchlab::kind_name(t.kind));
  for (const auto& [name, pts] : {std::pair{"true", &t.truth}, std::pair{"generated", &t.generated}}) {
    for (std::size_t i = 0; i < t.grid.size(); ++i) {
      tab.rows.push_back({kind, csv::num(t.grid[i]), name, csv::num(pts->at(i, 0)), csv::num(pts->at(i, 1))});
    }
  }
  return csv::to_string(tab);
}

/// Two polylines: circles for the true trajectory, squares for the
/// generated one.
inline std::string trajectory_svg(const Trajectory& t) {
  constexpr double kSize = 480, kPad = 40;
  double lo_x = 1e300, hi_x = -1e300, lo_y = 1e300, hi_y = -1e300;
  for (const Tensor* pts : {&t.truth, &t.generated}) {
    for (std::size_t i = 0; i < t.grid.size(); ++i) {
      lo_x = std::min(lo_x, pts->at(i, 0));
      hi_x = std::max(hi_x, pts->at(i, 0));
      lo_y = std::min(lo_y, pts->at(i, 1));
      hi_y = std::max(hi_y, pts->at(i, 1));
    }
  }
  const double span = std::max({hi_x - lo_x, hi_y - lo_y, 1e-12});
  auto px = [&](double x) { return kPad + (x - lo_x) / span * (kSize - 2 * kPad); };
  auto py = [&](double y) { return kSize - kPad - (y - lo_y) / span * (kSize - 2 * kPad); };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize << "\" height=\"" << kSize << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << kPad << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">"
    << patchlab::kind_name(t.kind) << ": circles = true, squares = generated</text>\n";
  const char* colours[2] = {"#1f77b4", "#d62728"};
  int series = 0;
  for (const Tensor* pts : {&t.truth, &t.generated}) {
    s << "<polyline fill=\"none\" stroke=\"" << colours[series] << "\" points=\"";
    for (std::size_t i = 0; i < t.grid.size(); ++i) s << px(pts->at(i, 0)) << ',' << py(pts->at(i, 1)) << ' ';
    s << "\"/>\n";
    for (std::size_t i = 0; i < t.grid.size(); ++i) {
      const double x = px(pts->at(i, 0)), y = py(pts->at(i, 1));
      if (series == 0) {
        s << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"5\" fill=\"" << colours[0] << "\"/>\n";
      } else {
        s << "<rect x=\"" << x - 4 << "\" y=\"" << y - 4 << "\" width=\"8\" height=\"8\" fill=\"" << colours[1]
          << "\"/>\n";
      }
    }
    ++series;
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace latentaug::eval

#pragma once

// Parameters of the latent augmentation generator and their "HAUG" file
// format.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "latentaug/core/binary_io.hpp"
#include "latentaug/core/error.hpp"
#include "latentaug/core/rng.hpp"
#include "latentaug/patchlab/transforms.hpp"
#include "latentaug/tensorcore/tensor.hpp"

namespace latentaug::generator {

using tensorcore::Shape;
using tensorcore::Tensor;

struct GeneratorConfig {
  std::size_t d = 128;
  std::size_t chunks = 4;
  std::size_t blocks = 4;
  std::size_t heads = 4;
  std::size_t k_max = 4;
  double ffn_mult = 4.0;
  double lambda_id = 1.0;

  std::size_t width() const { return d / chunks; }
  std::size_t ffn_hidden() const {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(ffn_mult * double(width()))));
  }

  void validate() const {
    if (d == 0 || chunks == 0 || blocks == 0 || heads == 0 || k_max == 0) {
      throw DimensionError("generator config: d, chunks, blocks, heads and k_max must be positive");
    }
    if (d % chunks != 0) {
      throw DimensionError("generator config: d=" + std::to_string(d) + " is not divisible by C=" + std::to_string(chunks));
    }
    if (width() % heads != 0) {
      throw DimensionError("generator config: chunk width " + std::to_string(width()) + " is not divisible by " +
                           std::to_string(heads) + " heads");
    }
    if (k_max > patchlab::kNumKinds) throw DimensionError("generator config: k_max exceeds the transform catalog");
    if (!(ffn_mult > 0) || !std::isfinite(ffn_mult)) throw DimensionError("generator config: ffn_mult must be positive");
    if (!(lambda_id >= 0) || !std::isfinite(lambda_id)) throw ParameterError("generator config: lambda_id must be >= 0");
  }

  friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

// Tensor order inside a model. Per-block tensors repeat in this order.
enum BlockParam : std::size_t {
  kLn1Gain, kLn1Bias, kWq, kBq, kWk, kBk, kWv, kBv, kWo, kBo, kLn2Gain, kLn2Bias, kFf1W, kFf1B, kFf2W, kFf2B,
  kBlockParamCount
};
inline constexpr const char* kBlockParamNames[kBlockParamCount] = {
    "ln1.gain", "ln1.bias", "attn.wq", "attn.bq", "attn.wk", "attn.bk", "attn.wv", "attn.bv",
    "attn.wo",  "attn.bo",  "ln2.gain", "ln2.bias", "ffn.w1", "ffn.b1", "ffn.w2", "ffn.b2"};
enum HeadParam : std::size_t { kHeadW1, kHeadB1, kHeadW2, kHeadB2, kHeadParamCount };

inline constexpr std::uint32_t kGeneratorFormatVersion = 1;

class GeneratorModel {
 public:
  struct Named {
    std::string name;
    Tensor value;
    friend bool operator==(const Named&, const Named&) = default;
  };

  GeneratorModel() = default;

  /// Builds every tensor with its shape; all values zero.
  explicit GeneratorModel(const GeneratorConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    const std::size_t w = cfg.width(), f = cfg.ffn_hidden(), d = cfg.d;
    for (const auto& s : patchlab::kKindSpecs) add("phi." + std::string(s.name), {s.encoded_dim(), w});
    add("order", {cfg.k_max, w});
    for (std::size_t j = 0; j < cfg.blocks; ++j) {
      const std::string p = "block" + std::to_string(j) + ".";
      const Shape shapes[kBlockParamCount] = {{w}, {w}, {w, w}, {w}, {w, w}, {w}, {w, w}, {w},
                                              {w, w}, {w}, {w}, {w}, {w, f}, {f}, {f, w}, {w}};
      for (std::size_t i = 0; i < kBlockParamCount; ++i) add(p + kBlockParamNames[i], shapes[i]);
    }
    add("head.w1", {d, 2 * d});
    add("head.b1", {2 * d});
    add("head.w2", {2 * d, d});
    add("head.b2", {d});
  }

  /// Fan-in scaled uniform weights, zero biases, unit layer-norm gains and
  /// zero order embeddings.
  static GeneratorModel initialized(const GeneratorConfig& cfg, Rng& rng) {
    GeneratorModel m(cfg);
    auto uniform = [&](Tensor& t) {
      const double a = 1.0 / std::sqrt(double(t.dim(0)));
      for (double& v : t.data()) v = rng.uniform(-a, a);
    };
    for (std::size_t k = 0; k < patchlab::kNumKinds; ++k) uniform(m.params_[m.phi_index(k)].value);
    for (std::size_t j = 0; j < cfg.blocks; ++j) {
      for (BlockParam p : {kWq, kWk, kWv, kWo, kFf1W, kFf2W}) uniform(m.block(j, p));
      m.block(j, kLn1Gain).fill(1.0);
      m.block(j, kLn2Gain).fill(1.0);
    }
    uniform(m.head(kHeadW1));
    uniform(m.head(kHeadW2));
    return m;
  }

  const GeneratorConfig& config() const { return cfg_; }
  std::size_t size() const { return params_.size(); }
  const std::vector<Named>& params() const { return params_; }
  std::vector<Named>& params() { return params_; }

  std::size_t phi_index(std::size_t kind) const { return kind; }
  std::size_t order_index() const { return patchlab::kNumKinds; }
  std::size_t block_index(std::size_t j, BlockParam p) const { return patchlab::kNumKinds + 1 + j * kBlockParamCount + p; }
  std::size_t head_index(HeadParam p) const { return patchlab::kNumKinds + 1 + cfg_.blocks * kBlockParamCount + p; }

  Tensor& block(std::size_t j, BlockParam p) { return params_[block_index(j, p)].value; }
  Tensor& head(HeadParam p) { return params_[head_index(p)].value; }
  Tensor& order() { return params_[order_index()].value; }
  Tensor& phi(patchlab::TransformKind k) { return params_[phi_index(std::size_t(k))].value; }
  const Tensor& order() const { return params_[order_index()].value; }
  const Tensor& phi(patchlab::TransformKind k) const { return params_[phi_index(std::size_t(k))].value; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  /// Copy with every value rounded to 32-bit precision (what a save/load
  /// cycle yields).
  GeneratorModel rounded_f32() const {
    GeneratorModel m = *this;
    for (auto& p : m.params_)
      for (double& v : p.value.data()) v = static_cast<double>(static_cast<float>(v));
    return m;
  }

  friend bool operator==(const GeneratorModel& a, const GeneratorModel& b) {
    return a.cfg_ == b.cfg_ && a.params_ == b.params_;
  }

  // ---- "HAUG" serialization ----
  void write(io::Writer& w) const {
    w.magic("HAUG");
    w.u32(kGeneratorFormatVersion);
    for (std::size_t v : {cfg_.d, cfg_.chunks, cfg_.blocks, cfg_.heads, cfg_.k_max}) w.u32(static_cast<std::uint32_t>(v));
    w.f64(cfg_.ffn_mult);
    w.f64(cfg_.lambda_id);
    w.u32(static_cast<std::uint32_t>(patchlab::kNumKinds));
    for (const auto& s : patchlab::kKindSpecs) {
      w.str(s.name);
      w.u32(static_cast<std::uint32_t>(s.encoded_dim()));
    }
    w.u32(static_cast<std::uint32_t>(params_.size()));
    for (const auto& p : params_) {
      w.str(p.name);
      w.u32(static_cast<std::uint32_t>(p.value.rank()));
      for (std::size_t s : p.value.shape()) w.u32(static_cast<std::uint32_t>(s));
    }
    for (const auto& p : params_) w.f32_array<double>(p.value.data());
  }

  static GeneratorModel read(io::Reader& r) {
    r.expect_magic("HAUG");
    r.expect_version(kGeneratorFormatVersion);
    std::size_t at = r.offset();
    GeneratorConfig cfg;
    cfg.d = r.u32();
    cfg.chunks = r.u32();
    cfg.blocks = r.u32();
    cfg.heads = r.u32();
    cfg.k_max = r.u32();
    cfg.ffn_mult = r.f64();
    cfg.lambda_id = r.f64();
    try {
      cfg.validate();
    } catch (const Error& e) {
      throw FormatError(std::string("invalid generator manifest: ") + e.what(), at);
    }
    GeneratorModel m(cfg);
    at = r.offset();
    if (r.u32() != patchlab::kNumKinds) throw FormatError("transform table size does not match this build", at);
    for (const auto& s : patchlab::kKindSpecs) {
      at = r.offset();
      const std::string name = r.str();
      const std::uint32_t dim = r.u32();
      if (name != s.name || dim != s.encoded_dim()) {
        throw FormatError("transform table entry '" + name + "' does not match '" + std::string(s.name) + "'", at);
      }
    }
    at = r.offset();
    if (r.u32() != m.params_.size()) throw FormatError("tensor count does not match the manifest", at);
    for (const auto& p : m.params_) {
      at = r.offset();
      const std::string name = r.str();
      const std::size_t rank = r.u32();
      Shape shape;
      for (std::size_t i = 0; i < rank && i < 8; ++i) shape.push_back(r.u32());
      if (name != p.name || shape != p.value.shape()) {
        throw FormatError("tensor '" + name + "' does not match expected '" + p.name + "' " +
                              tensorcore::shape_string(p.value.shape()),
                          at);
      }
    }
    for (auto& p : m.params_) {
      r.require_available(p.value.size() * sizeof(float), "generator weights");
      auto values = r.f32_array<double>(p.value.size());
      std::copy(values.begin(), values.end(), p.value.data().begin());
    }
    return m;
  }

  void save(const std::filesystem::path& path) const {
    io::Writer w;
    write(w);
    w.save(path);
  }

  static GeneratorModel load(const std::filesystem::path& path) {
    io::Reader r = io::Reader::from_file(path);
    GeneratorModel m = read(r);
    r.expect_end();
    return m;
  }

 private:
  void add(std::string name, Shape shape) { params_.push_back({std::move(name), Tensor(std::move(shape))}); }

  GeneratorConfig cfg_;
  std::vector<Named> params_;
};

}  // namespace latentaug::generator

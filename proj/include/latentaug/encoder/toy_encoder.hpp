#pragma once

// A frozen stand-in for a foundation-model patch encoder.
//
// Two affine layers with a tanh between them map a normalized 32x32 RGB
// patch to a d-dimensional embedding. 64 px patches are 2x2 average-pooled
// to 32 px first. The first layer's weights are seeded random mixtures of a
// low-frequency 2-D cosine basis per channel, so the embedding describes
// coarse colour layout: class-separable (nuclei density shifts the colour
// balance) and sensitive to geometric and colour transforms.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <span>
#include <vector>

#include "latentaug/core/binary_io.hpp"
#include "latentaug/core/error.hpp"
#include "latentaug/core/rng.hpp"
#include "latentaug/patchlab/patch.hpp"
#include "latentaug/tensorcore/ops.hpp"

namespace latentaug::encoder {

using patchlab::Patch;
using tensorcore::Tensor;

struct EncoderConfig {
  std::uint64_t seed = 42;
  std::size_t dim = 128;
  std::size_t hidden = 512;
  std::size_t side = 32;
  std::size_t frequencies = 4;  // cosine basis is frequencies x frequencies per channel
};

inline constexpr std::uint32_t kEncoderFormatVersion = 1;

class ToyEncoder {
 public:
  // Per-channel normalization applied before the first layer.
  static constexpr std::array<double, 3> kChannelMean = {0.80, 0.50, 0.70};
  static constexpr std::array<double, 3> kChannelStd = {0.12, 0.15, 0.10};

  explicit ToyEncoder(const EncoderConfig& cfg = {}) : seed_(cfg.seed) {
    if (cfg.dim == 0 || cfg.hidden == 0 || cfg.side == 0) throw ContractError("encoder dimensions must be positive");
    const std::size_t side = cfg.side;
    const std::size_t in = side * side * 3;
    w1_ = Tensor({in, cfg.hidden});
    b1_ = Tensor({cfg.hidden});
    w2_ = Tensor({cfg.hidden, cfg.dim});
    b2_ = Tensor({cfg.dim});
    side_ = side;

    Rng rng(derive_seed(cfg.seed, {0xe1c0de}));
    const std::size_t f = cfg.frequencies;
    // orthonormal 1-D DCT-II basis
    std::vector<double> basis(f * side);
    for (std::size_t u = 0; u < f; ++u)
      for (std::size_t x = 0; x < side; ++x)
        basis[u * side + x] = (u == 0 ? std::sqrt(1.0 / side) : std::sqrt(2.0 / side)) *
                              std::cos(std::numbers::pi * (double(x) + 0.5) * double(u) / double(side));
    const double coef_scale = 1.0 / std::sqrt(double(f * f * 3)) / 6.0;
    std::vector<double> a(3 * f * f);
    for (std::size_t j = 0; j < cfg.hidden; ++j) {
      for (double& v : a) v = rng.normal(0.0, coef_scale);
      for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x)
          for (std::size_t c = 0; c < 3; ++c) {
            double w = 0;
            for (std::size_t v = 0; v < f; ++v)
              for (std::size_t u = 0; u < f; ++u) w += a[(c * f + v) * f + u] * basis[v * side + y] * basis[u * side + x];
            w1_.at((y * side + x) * 3 + c, j) = round_f32(w);
          }
      b1_[j] = round_f32(rng.normal(0.0, 0.1));
    }
    const double w2_scale = 1.0 / std::sqrt(double(cfg.hidden));
    for (double& v : w2_.data()) v = round_f32(rng.normal(0.0, w2_scale));
  }

  std::size_t dim() const { return w2_.dim(1); }
  std::size_t hidden() const { return w1_.dim(1); }
  std::size_t side() const { return side_; }
  std::uint64_t seed() const { return seed_; }

  /// Row-major [n, d] embeddings of `patches`.
  Tensor encode_batch(std::span<const Patch> patches) const {
    if (patches.empty()) throw ContractError("encode: no patches");
    Tensor x({patches.size(), side_ * side_ * 3});
    for (std::size_t i = 0; i < patches.size(); ++i) fill_input(patches[i], x.row(i));
    Tensor h = tensorcore::tanh(tensorcore::add_row(tensorcore::matmul(x, w1_), b1_));
    return tensorcore::add_row(tensorcore::matmul(h, w2_), b2_);
  }

  std::vector<double> encode(const Patch& p) const {
    Tensor z = encode_batch(std::span<const Patch>(&p, 1));
    return {z.data().begin(), z.data().end()};
  }

  const Tensor& w1() const { return w1_; }
  const Tensor& b1() const { return b1_; }
  const Tensor& w2() const { return w2_; }
  const Tensor& b2() const { return b2_; }

  friend bool operator==(const ToyEncoder& a, const ToyEncoder& b) {
    return a.seed_ == b.seed_ && a.side_ == b.side_ && a.w1_ == b.w1_ && a.b1_ == b.b1_ && a.w2_ == b.w2_ &&
           a.b2_ == b.b2_;
  }

  // ---- "LENC" serialization ----
  void write(io::Writer& w) const {
    w.magic("LENC");
    w.u32(kEncoderFormatVersion);
    w.u64(seed_);
    w.u32(static_cast<std::uint32_t>(side_));
    w.u32(static_cast<std::uint32_t>(w1_.dim(0)));
    w.u32(static_cast<std::uint32_t>(w1_.dim(1)));
    w.u32(static_cast<std::uint32_t>(w2_.dim(1)));
    for (const Tensor* t : {&w1_, &b1_, &w2_, &b2_}) w.f32_array<double>(t->data());
  }

  static ToyEncoder read(io::Reader& r) {
    r.expect_magic("LENC");
    r.expect_version(kEncoderFormatVersion);
    ToyEncoder e(Empty{});
    e.seed_ = r.u64();
    const std::size_t at = r.offset();
    e.side_ = r.u32();
    const std::size_t in = r.u32(), hidden = r.u32(), dim = r.u32();
    if (e.side_ == 0 || hidden == 0 || dim == 0 || in != e.side_ * e.side_ * 3) {
      throw FormatError("inconsistent encoder layer shapes", at);
    }
    r.require_available((in * hidden + hidden + hidden * dim + dim) * sizeof(float), "encoder weights");
    e.w1_ = Tensor({in, hidden}, r.f32_array<double>(in * hidden));
    e.b1_ = Tensor({hidden}, r.f32_array<double>(hidden));
    e.w2_ = Tensor({hidden, dim}, r.f32_array<double>(hidden * dim));
    e.b2_ = Tensor({dim}, r.f32_array<double>(dim));
    return e;
  }

  void save(const std::filesystem::path& path) const {
    io::Writer w;
    write(w);
    w.save(path);
  }

  static ToyEncoder load(const std::filesystem::path& path) {
    io::Reader r = io::Reader::from_file(path);
    ToyEncoder e = read(r);
    r.expect_end();
    return e;
  }

 private:
  struct Empty {};
  explicit ToyEncoder(Empty) {}

  // Weights are kept at 32-bit precision so the file format is lossless.
  static double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

  void fill_input(const Patch& p, std::span<double> out) const {
    if (p.height() == side_ && p.width() == side_) {
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = (p.pixels()[i] - kChannelMean[i % 3]) / kChannelStd[i % 3];
    } else if (p.height() == 2 * side_ && p.width() == 2 * side_) {
      for (std::size_t y = 0; y < side_; ++y)
        for (std::size_t x = 0; x < side_; ++x)
          for (std::size_t c = 0; c < 3; ++c) {
            const double v = (double(p.at(2 * y, 2 * x, c)) + p.at(2 * y, 2 * x + 1, c) + p.at(2 * y + 1, 2 * x, c) +
                              p.at(2 * y + 1, 2 * x + 1, c)) /
                             4.0;
            out[(y * side_ + x) * 3 + c] = (v - kChannelMean[c]) / kChannelStd[c];
          }
    } else {
      throw ContractError("encode: unsupported patch resolution " + std::to_string(p.height()) + "x" +
                          std::to_string(p.width()) + " (expected " + std::to_string(side_) + " or " +
                          std::to_string(2 * side_) + ")");
    }
  }

  std::uint64_t seed_ = 0;
  std::size_t side_ = 0;
  Tensor w1_, b1_, w2_, b2_;
};

}  // namespace latentaug::encoder

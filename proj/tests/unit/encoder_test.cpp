#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "latentaug/encoder/invariance.hpp"
#include "latentaug/encoder/toy_encoder.hpp"
#include "latentaug/patchlab/synth.hpp"

namespace latentaug::encoder {
namespace {

using patchlab::TransformSequence;
using patchlab::TransformStep;

std::vector<Patch> patches(std::size_t n, std::uint64_t offset = 0, std::size_t res = 32) {
  std::vector<Patch> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(patchlab::synth_patch(offset + i, int(i % 2), res));
  return out;
}

const ToyEncoder& shared_encoder() {
  static const ToyEncoder enc;
  return enc;
}

TEST(ToyEncoder, FrozenAndDeterministic) {
  const auto ps = patches(4);
  const auto& enc = shared_encoder();
  EXPECT_EQ(enc.encode(ps[0]), enc.encode(ps[0]));
  EXPECT_TRUE(ToyEncoder() == enc);
  EncoderConfig other;
  other.seed = 7;
  EXPECT_FALSE(ToyEncoder(other) == enc);
  const auto z = enc.encode(ps[1]);
  EXPECT_EQ(z.size(), 128u);
  for (double v : z) EXPECT_TRUE(std::isfinite(v));
}

TEST(ToyEncoder, BatchRowsMatchSingleEncodes) {
  const auto ps = patches(9);
  const auto& enc = shared_encoder();
  const Tensor z = enc.encode_batch(ps);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto zi = enc.encode(ps[i]);
    EXPECT_TRUE(std::equal(zi.begin(), zi.end(), z.row(i).begin()));
  }
}

TEST(ToyEncoder, ResolutionContract) {
  const auto& enc = shared_encoder();
  EXPECT_NO_THROW(enc.encode(patchlab::synth_patch(1, 0, 64)));
  EXPECT_THROW(enc.encode(Patch(48, 48)), ContractError);
  EXPECT_THROW(enc.encode(Patch(32, 64)), ContractError);
}

TEST(ToyEncoder, SixtyFourPixelsPoolToThirtyTwo) {
  // A 64 px patch built by 2x2 pixel replication of a 32 px patch must
  // encode exactly like the 32 px patch.
  const Patch lo = patchlab::synth_patch(3, 1, 32);
  Patch hi(64, 64);
  for (std::size_t y = 0; y < 64; ++y)
    for (std::size_t x = 0; x < 64; ++x)
      for (std::size_t c = 0; c < 3; ++c) hi.at(y, x, c) = lo.at(y / 2, x / 2, c);
  const auto a = shared_encoder().encode(lo), b = shared_encoder().encode(hi);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(ToyEncoder, NotInvariantToHue) {
  const auto ps = patches(100);
  const auto& enc = shared_encoder();
  double sum = 0;
  for (const Patch& p : ps) {
    const auto z = enc.encode(p);
    const auto zh = enc.encode(patchlab::apply_transform(p, TransformStep::hue(0.4)));
    sum += tensorcore::cosine(std::span<const double>(z), std::span<const double>(zh));
  }
  EXPECT_LT(sum / 100.0, 0.9);
}

// Logistic regression on standardized embeddings, trained on 1500 patches
// and scored on 500 unseen ones.
TEST(ToyEncoder, LinearProbeSeparatesClasses) {
  const std::size_t n = 2000, n_train = 1500;
  const auto ps = patches(n, 50000);
  const Tensor z = shared_encoder().encode_batch(ps);
  const std::size_t d = z.cols();

  std::vector<double> mu(d, 0), sd(d, 0), mean0(d, 0), mean1(d, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      mu[j] += z.at(i, j) / double(n);
      (i % 2 ? mean1 : mean0)[j] += z.at(i, j) / double(n / 2);
    }
  double gap = 0;
  for (std::size_t j = 0; j < d; ++j) gap += (mean1[j] - mean0[j]) * (mean1[j] - mean0[j]);
  EXPECT_GT(std::sqrt(gap), 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) sd[j] += (z.at(i, j) - mu[j]) * (z.at(i, j) - mu[j]) / double(n);
  std::vector<double> x(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) x[i * d + j] = (z.at(i, j) - mu[j]) / (std::sqrt(sd[j]) + 1e-12);

  std::vector<double> w(d, 0.0);
  double b = 0;
  for (int it = 0; it < 2000; ++it) {
    std::vector<double> g(d, 0.0);
    double gb = 0;
    for (std::size_t i = 0; i < n_train; ++i) {
      double s = b;
      for (std::size_t j = 0; j < d; ++j) s += w[j] * x[i * d + j];
      const double e = 1.0 / (1.0 + std::exp(-s)) - double(i % 2);
      gb += e;
      for (std::size_t j = 0; j < d; ++j) g[j] += e * x[i * d + j];
    }
    for (std::size_t j = 0; j < d; ++j) w[j] -= g[j] / double(n_train);
    b -= gb / double(n_train);
  }
  std::size_t correct = 0;
  for (std::size_t i = n_train; i < n; ++i) {
    double s = b;
    for (std::size_t j = 0; j < d; ++j) s += w[j] * x[i * d + j];
    correct += (s > 0) == (i % 2 == 1);
  }
  EXPECT_GE(double(correct) / double(n - n_train), 0.90);
}

TEST(EncoderInvariance, IdentitySamplerGivesOne) {
  const auto ps = patches(100);
  Rng rng(1);
  const SequenceSampler id = [](Rng& r) {
    return patchlab::identity_sequence(patchlab::sample_sequence(r, 4));
  };
  EXPECT_DOUBLE_EQ(encoder_invariance(shared_encoder(), ps, id, rng), 1.0);
}

TEST(EncoderInvariance, FullCatalogBelowGate) {
  const auto ps = patches(400, 9000);
  Rng rng(2);
  const double m = encoder_invariance(shared_encoder(), ps, catalog_sampler(), rng);
  EXPECT_LE(m, 0.7);
  EXPECT_GT(m, -1.0);
}

TEST(EncoderInvariance, FixedSequenceCosinesVary) {
  const auto ps = patches(100);
  const TransformSequence fixed{{TransformStep::hue(0.2), TransformStep::flip(patchlab::FlipAxis::kHorizontal)}};
  Rng rng(3);
  const auto c = invariance_cosines(shared_encoder(), ps, [&](Rng&) { return fixed; }, rng);
  double m = 0, v = 0;
  for (double x : c) m += x / double(c.size());
  for (double x : c) v += (x - m) * (x - m) / double(c.size());
  EXPECT_GT(std::sqrt(v), 0.0);
}

TEST(EncoderInvariance, NeedsOneHundredPatches) {
  const auto ps = patches(99);
  Rng rng(4);
  EXPECT_THROW(encoder_invariance(shared_encoder(), ps, catalog_sampler(), rng), ContractError);
}

TEST(EncoderFile, RoundTripAndErrors) {
  const auto dir = std::filesystem::temp_directory_path() / "latentaug_encoder_test";
  const auto& enc = shared_encoder();
  enc.save(dir / "enc.lenc");
  const ToyEncoder back = ToyEncoder::load(dir / "enc.lenc");
  EXPECT_TRUE(back == enc);
  const Patch p = patchlab::synth_patch(11, 1, 32);
  EXPECT_EQ(back.encode(p), enc.encode(p));

  io::Writer w;
  enc.write(w);
  auto bytes = w.bytes();
  bytes.resize(bytes.size() - 1);
  io::Reader truncated(bytes);
  EXPECT_THROW(ToyEncoder::read(truncated), FormatError);
  auto bumped = w.bytes();
  bumped[4] = 9;
  io::Reader r2(bumped);
  try {
    ToyEncoder::read(r2);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("unsupported version"), std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace latentaug::encoder

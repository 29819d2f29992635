#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "latentaug/patchlab/patch.hpp"
#include "latentaug/patchlab/sampler.hpp"
#include "latentaug/patchlab/synth.hpp"
#include "latentaug/patchlab/transforms.hpp"

namespace latentaug::patchlab {
namespace {

Patch noise_patch(std::uint64_t seed, std::size_t side = 32) {
  Rng rng(seed);
  Patch p(side, side);
  for (float& v : p.pixels()) v = static_cast<float>(rng.uniform());
  return p;
}

// Synthetic scenes and uniform noise, alternating.
Patch test_patch(int i) { return i % 2 ? synth_patch(1000 + i, i % 4 == 1, 32) : noise_patch(i); }

TEST(Synth, DeterministicAndSeedSensitive) {
  EXPECT_EQ(synth_patch(7, 0, 32), synth_patch(7, 0, 32));
  EXPECT_NE(synth_patch(7, 0, 32), synth_patch(8, 0, 32));
  Patch hi = synth_patch(7, 0, 64);
  EXPECT_EQ(hi.height(), 64u);
  EXPECT_THROW(synth_patch(7, 0, 48), ContractError);
}

TEST(Synth, ClassOneHasMoreBlobs) {
  double sum0 = 0, sum1 = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const auto n0 = synth_scene(s, 0).nuclei.size();
    const auto n1 = synth_scene(s, 1).nuclei.size();
    EXPECT_GE(n0, 5u);
    EXPECT_LE(n1, 20u);
    sum0 += double(n0);
    sum1 += double(n1);
  }
  EXPECT_GE(sum1 / 1000 - sum0 / 1000, kBlobCountMargin);
}

TEST(Synth, PixelsInUnitRange) {
  Patch p = synth_patch(3, 1, 64);
  for (float v : p.pixels()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(Transforms, TableMatchesCatalog) {
  EXPECT_EQ(spec(TransformKind::kHue).lo, -0.5);
  EXPECT_EQ(spec(TransformKind::kHue).hi, 0.5);
  for (auto k : {TransformKind::kBrightness, TransformKind::kContrast, TransformKind::kSaturation, TransformKind::kGamma}) {
    EXPECT_EQ(spec(k).lo, 0.5);
    EXPECT_EQ(spec(k).hi, 1.5);
  }
  EXPECT_EQ(spec(TransformKind::kCrop).encoded_dim(), 6u);
  EXPECT_EQ(spec(TransformKind::kFlip).encoded_dim(), 3u);
  EXPECT_EQ(spec(TransformKind::kRotate).encoded_dim(), 4u);
  EXPECT_EQ(spec(TransformKind::kBlur).encoded_dim(), 2u);
  EXPECT_EQ(spec(TransformKind::kHed).encoded_dim(), 6u);
}

TEST(Transforms, IdentityPointIsExactForEveryKind) {
  for (int i = 0; i < 100; ++i) {
    const Patch p = test_patch(i);
    for (TransformKind k : kAllKinds) EXPECT_EQ(apply_transform(p, TransformStep::identity(k)), p) << kind_name(k);
  }
}

TEST(Transforms, GammaOneAndBrightnessExample) {
  Patch p = test_patch(3);
  EXPECT_EQ(apply_transform(p, TransformStep::gamma(1.0)), p);
  Patch half(4, 4, 0.5f);
  Patch out = apply_transform(half, TransformStep::brightness(1.5));
  for (float v : out.pixels()) EXPECT_EQ(v, 0.75f);
}

TEST(Transforms, GroupLaws) {
  const auto fh = TransformStep::flip(FlipAxis::kHorizontal);
  const auto fv = TransformStep::flip(FlipAxis::kVertical);
  const auto r90 = TransformStep::rotate(90);
  for (int i = 0; i < 50; ++i) {
    const Patch p = test_patch(i);
    EXPECT_EQ(apply_transform(apply_transform(p, fh), fh), p);
    EXPECT_EQ(apply_transform(apply_transform(p, fv), fv), p);
    Patch r = p;
    for (int q = 0; q < 4; ++q) r = apply_transform(r, r90);
    EXPECT_EQ(r, p);
    EXPECT_EQ(apply_sequence(p, {{fh, fv}}), apply_transform(p, TransformStep::rotate(180)));
    EXPECT_EQ(apply_transform(apply_transform(p, r90), TransformStep::rotate(270)), p);
  }
}

TEST(Transforms, MorphologyIsMonotone) {
  for (int i = 0; i < 100; ++i) {
    const Patch p = test_patch(i);
    const Patch lo = apply_transform(p, TransformStep::erosion());
    const Patch hi = apply_transform(p, TransformStep::dilation());
    for (std::size_t j = 0; j < p.size(); ++j) {
      ASSERT_LE(lo.pixels()[j], p.pixels()[j]);
      ASSERT_LE(p.pixels()[j], hi.pixels()[j]);
    }
  }
}

TEST(Transforms, RandomParametersStayInRange) {
  Rng rng(17);
  for (int i = 0; i < 100; ++i) {
    const Patch p = test_patch(i);
    for (TransformKind k : kAllKinds) {
      const Patch out = apply_transform(p, sample_step(rng, k));
      for (float v : out.pixels()) {
        ASSERT_TRUE(std::isfinite(v)) << kind_name(k);
        ASSERT_GE(v, 0.0f) << kind_name(k);
        ASSERT_LE(v, 1.0f) << kind_name(k);
      }
    }
  }
}

TEST(Transforms, ExtremeParametersStayInRange) {
  const Patch black(8, 8, 0.0f), white(8, 8, 1.0f);
  for (const Patch& p : {black, white, test_patch(1)}) {
    for (const auto& st : {TransformStep::hed({0.05, 0.05, 0.05, 0.05, 0.05, 0.05}),
                           TransformStep::hed({-0.05, -0.05, -0.05, -0.05, -0.05, -0.05}), TransformStep::gamma(0.5),
                           TransformStep::contrast(1.5), TransformStep::saturation(1.5), TransformStep::hue(-0.5)}) {
      const Patch out = apply_transform(p, st);
      for (float v : out.pixels()) {
        ASSERT_TRUE(std::isfinite(v));
        ASSERT_GE(v, 0.0f);
        ASSERT_LE(v, 1.0f);
      }
    }
  }
}

TEST(Transforms, OutOfRangeParameterNamesKindAndRange) {
  try {
    apply_transform(test_patch(0), TransformStep::hue(0.7));
    FAIL();
  } catch (const ParameterError& e) {
    EXPECT_NE(std::string(e.what()).find("hue"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("-0.5"), std::string::npos);
  }
  EXPECT_THROW(apply_transform(test_patch(0), TransformStep{TransformKind::kCrop, {6.0}}), ParameterError);
  EXPECT_THROW(apply_transform(test_patch(0), TransformStep{TransformKind::kHed, {0.0}}), ParameterError);
  EXPECT_THROW(TransformStep::rotate(45), ParameterError);
}

TEST(Transforms, EncodingRoundTrip) {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    for (TransformKind k : kAllKinds) {
      const TransformStep st = sample_step(rng, k);
      const auto e = st.encode();
      ASSERT_EQ(e.size(), spec(k).encoded_dim());
      for (double v : e) ASSERT_LE(std::abs(v), 1.0 + 1e-12);
      const TransformStep back = TransformStep::decode(k, e);
      for (std::size_t j = 0; j < st.param.size(); ++j) ASSERT_NEAR(back.param[j], st.param[j], 1e-9);
    }
  }
}

TEST(Transforms, IdentityEncodings) {
  for (TransformKind k : kAllKinds) {
    const auto e = TransformStep::identity(k).encode();
    if (spec(k).discrete) {
      EXPECT_EQ(e.back(), 1.0) << kind_name(k);
      EXPECT_EQ(std::count(e.begin(), e.end(), 0.0), std::ptrdiff_t(e.size() - 1));
    } else {
      for (double v : e) EXPECT_EQ(v, 0.0) << kind_name(k);
    }
  }
}

TEST(Sequence, ComposedIdentitiesAndOrder) {
  const Patch p = synth_patch(11, 1, 32);
  EXPECT_EQ(apply_sequence(p, {{TransformStep::hue(0.0), TransformStep::gamma(1.0)}}), p);
  const Patch a = apply_sequence(p, {{TransformStep::brightness(1.5), TransformStep::gamma(0.5)}});
  const Patch b = apply_sequence(p, {{TransformStep::gamma(0.5), TransformStep::brightness(1.5)}});
  EXPECT_GT(max_abs_diff(a, b), 1e-3f);
}

TEST(Sequence, RejectsRepeatsAndEmpty) {
  const Patch p = test_patch(0);
  const TransformSequence repeated{{TransformStep::hue(0.1), TransformStep::hue(0.2)}};
  EXPECT_NO_THROW(apply_sequence(p, repeated));
  EXPECT_THROW(repeated.validate_distinct(), ParameterError);
  EXPECT_THROW(apply_sequence(p, {}), ParameterError);
}

TEST(Sequence, IdentitySequence) {
  const TransformSequence s{{TransformStep::hue(0.3)}};
  EXPECT_EQ(identity_sequence(s), (TransformSequence{{TransformStep::hue(0.0)}}));
  Rng rng(21);
  for (int i = 0; i < 50; ++i) {
    const Patch p = test_patch(i);
    const TransformSequence seq = sample_sequence(rng, 4);
    const TransformSequence id = identity_sequence(seq);
    ASSERT_EQ(id.size(), seq.size());
    for (std::size_t j = 0; j < id.size(); ++j) {
      EXPECT_EQ(id.steps[j].kind, seq.steps[j].kind);
      EXPECT_EQ(id.steps[j].encode(), TransformStep::identity(seq.steps[j].kind).encode());
    }
    EXPECT_EQ(apply_sequence(p, id), p);
  }
}

TEST(Sampler, SingleStepWhenKMaxIsOne) {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_sequence(rng, 1).size(), 1u);
}

TEST(Sampler, KindFrequenciesAreUniform) {
  Rng rng(2);
  constexpr int kDraws = 10000;
  std::array<int, kNumKinds> counts{};
  std::array<int, 4> lengths{};
  double total_steps = 0;
  for (int i = 0; i < kDraws; ++i) {
    const auto seq = sample_sequence(rng, 3);
    ++lengths[seq.size()];
    total_steps += double(seq.size());
    for (const auto& st : seq.steps) ++counts[static_cast<std::size_t>(st.kind)];
    seq.validate_distinct();
  }
  // each kind appears in a draw with probability E[K]/12, E[K] = 2
  const double p = 2.0 / 12.0;
  const double mean = kDraws * p;
  const double sd = std::sqrt(kDraws * p * (1 - p));
  for (std::size_t k = 0; k < kNumKinds; ++k) EXPECT_LE(std::abs(counts[k] - mean), 3 * sd) << k;
  EXPECT_EQ(lengths[0], 0);
  EXPECT_NEAR(total_steps / kDraws, 2.0, 0.05);
}

TEST(Sampler, HueParametersInRange) {
  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    const auto st = sample_step(rng, TransformKind::kHue);
    ASSERT_GE(st.param[0], -0.5);
    ASSERT_LE(st.param[0], 0.5);
  }
}

TEST(Sampler, DeterministicGivenSeed) {
  Rng a(9), b(9);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_sequence(a, 4), sample_sequence(b, 4));
}

TEST(PatchFile, RoundTripAndErrors) {
  const auto dir = std::filesystem::temp_directory_path() / "latentaug_patch_test";
  const Patch p = synth_patch(5, 1, 32);
  save_patch(dir / "p.lapx", p);
  EXPECT_EQ(load_patch(dir / "p.lapx"), p);

  io::Writer w;
  write_patch(w, p);
  auto bytes = w.bytes();
  bytes.resize(bytes.size() - 3);
  io::Reader truncated(bytes);
  EXPECT_THROW(read_patch(truncated), FormatError);

  auto bumped = w.bytes();
  bumped[4] = 2;
  io::Reader r2(bumped);
  try {
    read_patch(r2);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("unsupported version"), std::string::npos);
    EXPECT_EQ(e.offset(), 4u);
  }
  auto bad_magic = w.bytes();
  bad_magic[0] = 'X';
  io::Reader r3(bad_magic);
  EXPECT_THROW(read_patch(r3), FormatError);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace latentaug::patchlab

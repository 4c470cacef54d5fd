// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <numeric>
#include <vector>

#include "gradcomp/compressors.h"
#include "gradcomp/error.h"
#include "test_util.h"
#include "gradcomp/half.h"
#include "gradcomp/wire.h"

namespace gradcomp {
namespace {

using testing::CodeOf;

GradientVector RoundTrip(const CompressorKind& kind, const GradientVector& x, std::uint64_t seed = 0) {
  DeterministicRng rng(seed, {0, 0, 0, StreamStage::kTrial});
  return Decompress(Compress(kind, x, rng));
}

GradientVector RandomVector(DeterministicRng& rng, std::size_t d) {
  std::vector<float> v(d);
  for (float& f : v) f = static_cast<float>(rng.NextGaussian());
  return GradientVector(std::move(v));
}

TEST(CompressTest, NoneIsRawFloats) {
  const GradientVector x{1.5f, -2.25f};
  DeterministicRng rng(0);
  const CompressedMessage m = Compress(CompressorKind::None(), x, rng);
  ASSERT_EQ(m.payload.size(), 8u);
  float back[2];
  std::memcpy(back, m.payload.data(), 8);
  EXPECT_EQ(back[0], 1.5f);
  EXPECT_EQ(back[1], -2.25f);
  EXPECT_TRUE(Decompress(m).BitEqual(x));
}

TEST(CompressTest, ScaledSignExample) {
  const GradientVector x{1, -2, 3};
  DeterministicRng rng(0);
  const CompressedMessage m = Compress(CompressorKind::ScaledSign(), x, rng);
  EXPECT_EQ(MessageScale(m), 2.0f);
  EXPECT_EQ(m.payload[4], 0b101);  // bit set = non-negative
  EXPECT_TRUE(Decompress(m).BitEqual(GradientVector{2, -2, 2}));
}

TEST(CompressTest, ScaledSignZeroScale) {
  CompressedMessage m;
  m.kind = CompressorKind::ScaledSign();
  m.original_len = 3;
  m.payload = {0, 0, 0, 0, 0b011};
  EXPECT_TRUE(Decompress(m) == GradientVector::Zeros(3));
}

TEST(CompressTest, TopKExample) {
  const GradientVector x{0.1f, -5, 0.2f, 3};
  DeterministicRng rng(0);
  const CompressedMessage m = Compress(CompressorKind::TopK(2), x, rng);
  EXPECT_EQ(SparseIndices(m), (std::vector<std::uint32_t>{1, 3}));
  EXPECT_TRUE(Decompress(m).BitEqual(GradientVector{0, -5, 0, 3}));
}

TEST(CompressTest, TopKDirectPlacementAndBadIndex) {
  CompressedMessage m = TopK(GradientVector{7, 1}, 1);
  EXPECT_TRUE(Decompress(m).BitEqual(GradientVector{7, 0}));
  CompressedMessage bad = TopK(GradientVector{1, 2, 3, 4}, 1);
  bad.payload[8] = 5;  // index 5 with d = 4
  EXPECT_EQ(CodeOf([&] { Decompress(bad); }), ErrorCode::kMalformedPayload);
}

// Brute force: sort by (|x| desc, index asc) and keep k.
TEST(CompressTest, TopKMatchesSortOracle) {
  DeterministicRng rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t d = 1 + rng.NextBelow(60);
    std::vector<float> v(d);
    // Few distinct magnitudes so ties are common.
    for (float& f : v) f = static_cast<float>(static_cast<int>(rng.NextBelow(5)) - 2);
    const GradientVector x(v);
    const std::uint64_t k = 1 + rng.NextBelow(d);
    std::vector<std::uint32_t> order(d);
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
      return std::fabs(v[a]) > std::fabs(v[b]);
    });
    std::vector<float> want(d, 0.0f);
    for (std::uint64_t i = 0; i < k; ++i) want[order[i]] = v[order[i]];
    for (unsigned threads : {1u, 3u}) {
      DeterministicRng r(0);
      const GradientVector got =
          Decompress(Compress(CompressorKind::TopK(k), x, r, {threads}));
      EXPECT_TRUE(got.BitEqual(GradientVector(want)));
    }
  }
}

TEST(CompressTest, KValidation) {
  const GradientVector x{1, 2, 3};
  DeterministicRng rng(0);
  EXPECT_EQ(CodeOf([&] { Compress(CompressorKind::TopK(4), x, rng); }), ErrorCode::kKTooLarge);
  EXPECT_EQ(CodeOf([&] { Compress(CompressorKind::RandomK(4), x, rng); }), ErrorCode::kKTooLarge);
  EXPECT_EQ(CodeOf([&] { Compress(CompressorKind::LinearDither(1), x, rng); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(CompressorKind::TopKFraction(0.001).ResolveK(10), 1u);
  EXPECT_EQ(CompressorKind::TopKFraction(0.1).ResolveK(1000), 100u);
}

TEST(CompressTest, RandomKFullSelectionIsIdentity) {
  DeterministicRng rng(1);
  const GradientVector x = RandomVector(rng, 37);
  EXPECT_TRUE(RoundTrip(CompressorKind::RandomK(37), x).BitEqual(x));
  EXPECT_TRUE(RoundTrip(CompressorKind::RandomK(5), GradientVector::Zeros(9)) ==
              GradientVector::Zeros(9));
}

TEST(CompressTest, RandomKTwoOutcomeEnumeration) {
  // d = 2, k = 1: C(x) is [2 x0, 0] or [0, 2 x1], each with probability 1/2.
  const GradientVector x{0.75f, -1.5f};
  const GradientVector a{1.5f, 0.0f}, b{0.0f, -3.0f};
  // Probability-weighted expectation of the enumerated outcomes is x.
  for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(0.5 * a[j] + 0.5 * b[j], x[j]);
  int count_a = 0;
  const int trials = 20000;
  for (int t = 0; t < trials; ++t) {
    const GradientVector c = RoundTrip(CompressorKind::RandomK(1), x, t);
    const bool is_a = c.BitEqual(a);
    ASSERT_TRUE(is_a || c.BitEqual(b));
    count_a += is_a;
  }
  EXPECT_NEAR(count_a, trials / 2, 4 * std::sqrt(trials * 0.25));
}

TEST(CompressTest, LinearDitherTwoBitEnumeration) {
  // bits = 2: grid {0, 1}. x = [3, 4], norm 5. Entry j is norm*sign w.p.
  // |x_j|/5, else 0. Four outcomes.
  const GradientVector x{3, 4};
  const double p0 = 0.6, p1 = 0.8;
  std::map<std::pair<float, float>, double> want{{{0, 0}, (1 - p0) * (1 - p1)},
                                                {{5, 0}, p0 * (1 - p1)},
                                                {{0, 5}, (1 - p0) * p1},
                                                {{5, 5}, p0 * p1}};
  double e0 = 0, e1 = 0;
  for (const auto& [v, p] : want) {
    e0 += p * v.first;
    e1 += p * v.second;
  }
  EXPECT_NEAR(e0, 3.0, 1e-12);
  EXPECT_NEAR(e1, 4.0, 1e-12);
  std::map<std::pair<float, float>, int> seen;
  const int trials = 20000;
  for (int t = 0; t < trials; ++t) {
    const GradientVector c = RoundTrip(CompressorKind::LinearDither(2), x, t);
    ASSERT_EQ(want.count({c[0], c[1]}), 1u) << c[0] << "," << c[1];
    ++seen[{c[0], c[1]}];
  }
  for (const auto& [v, p] : want) {
    EXPECT_NEAR(seen[v], p * trials, 4 * std::sqrt(trials * p * (1 - p)) + 1);
  }
}

TEST(CompressTest, DitherEdgeCases) {
  EXPECT_TRUE(RoundTrip(CompressorKind::LinearDither(4), GradientVector::Zeros(5)) ==
              GradientVector::Zeros(5));
  EXPECT_TRUE(RoundTrip(CompressorKind::NaturalDither(4), GradientVector::Zeros(5)) ==
              GradientVector::Zeros(5));
  EXPECT_TRUE(RoundTrip(CompressorKind::NaturalDither(3), GradientVector{-2.5f})
                  .BitEqual(GradientVector{-2.5f}));
  const GradientVector quarter{1.0f, -1.0f, 1.0f, 1.0f};  // ratios 2^-1
  EXPECT_TRUE(RoundTrip(CompressorKind::NaturalDither(3), quarter).BitEqual(quarter));
}

TEST(CompressTest, NaturalDitherStaysOnPowerOfTwoGrid) {
  DeterministicRng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const GradientVector x = RandomVector(rng, 1 + rng.NextBelow(30));
    const double norm = static_cast<float>(L2Norm(x));
    const GradientVector c = RoundTrip(CompressorKind::NaturalDither(4), x, trial);
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (c[j] == 0.0f) continue;
      const double r = std::fabs(c[j]) / norm;
      int e = 0;
      const double m = std::frexp(r, &e);
      EXPECT_NEAR(m, 0.5, 1e-6);
      EXPECT_GE(e, -5);  // levels 2^0 .. 2^-6 for 4 bits
      EXPECT_EQ(std::signbit(c[j]), std::signbit(x[j]));
    }
  }
}

TEST(CompressTest, PayloadSizeFormulas) {
  EXPECT_EQ(PayloadSize(CompressorKind::None(), 10), 40u);
  EXPECT_EQ(PayloadSize(CompressorKind::Fp16(), 10), 20u);
  EXPECT_EQ(PayloadSize(CompressorKind::ScaledSign(), 9), 4u + 2u);
  EXPECT_EQ(PayloadSize(CompressorKind::TopK(3), 10), 8u + 3u * 8u);
  EXPECT_EQ(PayloadSize(CompressorKind::TopK(3, ValuePrecision::kF16), 10), 8u + 3u * 6u);
  EXPECT_EQ(PayloadSize(CompressorKind::LinearDither(3), 10), 4u + 4u);
  EXPECT_EQ(PayloadSize(CompressorKind::NaturalDither(8), 10), 4u + 10u);
  DeterministicRng rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t d = 1 + rng.NextBelow(500);
    const GradientVector x = RandomVector(rng, d);
    for (const CompressorKind& k :
         {CompressorKind::None(), CompressorKind::Fp16(), CompressorKind::ScaledSign(),
          CompressorKind::TopKFraction(0.1), CompressorKind::RandomK(1, ValuePrecision::kF16),
          CompressorKind::LinearDither(5), CompressorKind::NaturalDither(2)}) {
      DeterministicRng r(0);
      const CompressedMessage m = Compress(k, x, r);
      EXPECT_EQ(m.payload.size(), PayloadSize(k.Resolved(d), d));
    }
  }
}

TEST(CompressTest, Fp16OverflowIsNonFinite) {
  DeterministicRng rng(0);
  EXPECT_EQ(CodeOf([&] { Compress(CompressorKind::Fp16(), GradientVector{1e6f}, rng); }),
            ErrorCode::kNonFinite);
  const GradientVector x{1.0f / 3.0f, -7.1f};
  const GradientVector c = RoundTrip(CompressorKind::Fp16(), x);
  EXPECT_EQ(c[0], RoundTripHalf(x[0]));
  EXPECT_EQ(c[1], RoundTripHalf(x[1]));
}

TEST(CompressTest, SameStreamSameOutput) {
  DeterministicRng rng(8);
  const GradientVector x = RandomVector(rng, 5000);
  for (const CompressorKind& k :
       {CompressorKind::RandomKFraction(0.05), CompressorKind::LinearDither(4),
        CompressorKind::NaturalDither(3)}) {
    DeterministicRng a(77, {1, 2, 3, StreamStage::kPush});
    DeterministicRng b = a;
    EXPECT_EQ(Compress(k, x, a), Compress(k, x, b, {4}));
    DeterministicRng c(78, {1, 2, 3, StreamStage::kPush});
    DeterministicRng d(77, {1, 2, 3, StreamStage::kPush});
    EXPECT_NE(Compress(k, x, c), Compress(k, x, d));
  }
}

TEST(ErrorUpdateTest, FusedExamples) {
  const GradientVector q{0.1f, -5, 0.2f, 3};
  const CompressedMessage m = TopK(q, 2);
  EXPECT_TRUE(FusedErrorUpdate(q, m).BitEqual(GradientVector{0.1f, 0, 0.2f, 0}));
  EXPECT_TRUE(FusedErrorUpdate(q, m).BitEqual(NaiveErrorUpdate(q, m)));
  EXPECT_TRUE(FusedErrorUpdate(q, TopK(q, 4)) == GradientVector::Zeros(4));
  EXPECT_EQ(CodeOf([&] { FusedErrorUpdate(q, ScaledSign(q)); }), ErrorCode::kUnsupportedKind);
  EXPECT_FALSE(SupportsFusedErrorUpdate(TopK(q, 2, ValuePrecision::kF16)));
}

TEST(ErrorUpdateTest, FusedMatchesNaiveFuzz) {
  DeterministicRng rng(12);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t d = 1 + rng.NextBelow(200);
    std::vector<float> v(d);
    for (float& f : v) f = rng.NextBelow(4) == 0 ? -0.0f : static_cast<float>(rng.NextGaussian());
    const GradientVector q(v);
    const CompressedMessage m = TopK(q, 1 + rng.NextBelow(d));
    ASSERT_TRUE(FusedErrorUpdate(q, m).BitEqual(NaiveErrorUpdate(q, m)));
  }
}

TEST(DeltaTest, Examples) {
  EXPECT_EQ(DeltaLowerBound(CompressorKind::ScaledSign(), GradientVector{2, -2, 2, 2}), 1.0);
  EXPECT_EQ(DeltaLowerBound(CompressorKind::TopK(5), GradientVector{1, 2, 3, 4, 5}), 1.0);
  const GradientVector x{1, 0, 0, 0};
  const double delta = DeltaLowerBound(CompressorKind::ScaledSign(), x);
  EXPECT_EQ(delta, 0.25);
  const GradientVector c = RoundTrip(CompressorKind::ScaledSign(), x);
  double err = 0;
  for (std::size_t j = 0; j < 4; ++j) err += (c[j] - x[j]) * (c[j] - x[j]);
  EXPECT_DOUBLE_EQ(err, 0.75);
  EXPECT_DOUBLE_EQ(err, (1 - delta) * 1.0);
  EXPECT_EQ(CodeOf([] { DeltaLowerBound(CompressorKind::ScaledSign(), GradientVector::Zeros(3)); }),
            ErrorCode::kZeroVector);
  EXPECT_EQ(CodeOf([] { DeltaLowerBound(CompressorKind::RandomK(1), GradientVector{1}); }),
            ErrorCode::kUnsupportedKind);
}

TEST(DeltaTest, ContractionHoldsOnRandomVectors) {
  DeterministicRng rng(13);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 1 + rng.NextBelow(300);
    const GradientVector x = RandomVector(rng, d);
    const double sq = SquaredL2Norm(x.values());
    for (const CompressorKind& k :
         {CompressorKind::ScaledSign(), CompressorKind::TopK(1 + rng.NextBelow(d))}) {
      const GradientVector c = RoundTrip(k, x);
      double err = 0;
      for (std::size_t j = 0; j < d; ++j) err += std::pow(double(c[j]) - x[j], 2);
      EXPECT_LE(err, (1 - DeltaLowerBound(k, x)) * sq * (1 + 1e-6));
    }
  }
}

TEST(OmegaTest, Examples) {
  const DeterministicRng rng(5);
  const OmegaEstimate full = EmpiricalOmega(CompressorKind::RandomK(3), GradientVector{1, 2, 3}, 50, rng);
  EXPECT_EQ(full.mean_bias, 0.0);
  EXPECT_EQ(full.variance_ratio, 0.0);
  // Each outcome of d = 2, k = 1 on [1, 1] has error 1 + 1 = ||x||^2.
  const OmegaEstimate two = EmpiricalOmega(CompressorKind::RandomK(1), GradientVector{1, 1}, 200, rng);
  EXPECT_DOUBLE_EQ(two.variance_ratio, 1.0);
  // Normalized entries on the grid {0, 1/3, 2/3, 1}: [2, 1, 2] / 3.
  const OmegaEstimate grid =
      EmpiricalOmega(CompressorKind::LinearDither(3), GradientVector{2, 1, 2}, 50, rng);
  EXPECT_NEAR(grid.variance_ratio, 0.0, 1e-12);
  EXPECT_EQ(CodeOf([&] { EmpiricalOmega(CompressorKind::TopK(1), GradientVector{1}, 5, rng); }),
            ErrorCode::kUnsupportedKind);
}

TEST(WireTest, RoundTripAllKinds) {
  DeterministicRng rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t d = 1 + rng.NextBelow(100);
    const GradientVector x = trial % 10 == 0 ? GradientVector::Zeros(d) : RandomVector(rng, d);
    for (const CompressorKind& k :
         {CompressorKind::None(), CompressorKind::Fp16(), CompressorKind::ScaledSign(),
          CompressorKind::TopK(1), CompressorKind::RandomK(d, ValuePrecision::kF16),
          CompressorKind::LinearDither(7), CompressorKind::NaturalDither(5)}) {
      DeterministicRng r(trial);
      const CompressedMessage m = Compress(k, x, r);
      const auto bytes = EncodeFrame(m, 0xdeadbeef);
      ASSERT_EQ(bytes.size(), FrameSize(k.Resolved(d), d));
      const DecodedFrame f = DecodeFrame(bytes);
      EXPECT_EQ(f.tensor_id, 0xdeadbeefu);
      EXPECT_EQ(f.message, m);
    }
  }
}

TEST(WireTest, HeaderLayout) {
  const CompressedMessage m = TopK(GradientVector{1, -3, 2}, 2, ValuePrecision::kF16);
  const auto b = EncodeFrame(m, 0x01020304);
  EXPECT_EQ(b[0], 1);
  EXPECT_EQ(b[1], static_cast<int>(CompressorTag::kTopK));
  EXPECT_EQ(b[2] & 1, 1);
  EXPECT_EQ(b[4], 0x04);
  EXPECT_EQ(b[7], 0x01);
  EXPECT_EQ(b[8], 3);
  EXPECT_EQ(b[16], m.payload.size());
}

TEST(WireTest, MalformedFrames) {
  const auto good = EncodeFrame(ScaledSign(GradientVector{1, -2, 3}), 7);
  auto bad_version = good;
  bad_version[0] = 2;
  EXPECT_EQ(CodeOf([&] { DecodeFrame(bad_version); }), ErrorCode::kUnknownVersion);
  auto bad_id = good;
  bad_id[1] = 99;
  EXPECT_EQ(CodeOf([&] { DecodeFrame(bad_id); }), ErrorCode::kUnknownCompressorId);
  for (std::size_t cut = 0; cut < good.size(); ++cut) {
    const std::vector<std::uint8_t> t(good.begin(), good.begin() + cut);
    try {
      DecodeFrame(t);
      ADD_FAILURE() << "accepted truncation at " << cut;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kMalformedPayload);
      EXPECT_TRUE(e.byte_offset().has_value());
    }
  }
}

}  // namespace
}  // namespace gradcomp

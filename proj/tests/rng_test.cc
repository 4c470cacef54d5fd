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

#include <cmath>
#include <set>

#include "gradcomp/rng.h"

namespace gradcomp {
namespace {

// Known-answer vectors from the Random123 distribution.
TEST(PhiloxTest, KnownAnswers) {
  EXPECT_EQ(Philox4x32({0, 0, 0, 0}, {0, 0}),
            (std::array<std::uint32_t, 4>{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
  EXPECT_EQ(Philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff},
                       {0xffffffff, 0xffffffff}),
            (std::array<std::uint32_t, 4>{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
  EXPECT_EQ(Philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344},
                       {0xa4093822, 0x299f31d0}),
            (std::array<std::uint32_t, 4>{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(DeterministicRngTest, SameCoordinatesSameStream) {
  const StreamCoords c{3, 17, 2, StreamStage::kPush};
  DeterministicRng a(42, c), b(42, c);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.NextU64(), b.NextU64());
  EXPECT_EQ(DeterministicRng(42, c).U64At(57), DeterministicRng(42, c).U64At(57));
}

TEST(DeterministicRngTest, CoordinatesSeparateStreams) {
  std::set<std::uint64_t> first;
  for (std::uint64_t w = 0; w < 4; ++w) {
    for (std::uint64_t it = 0; it < 4; ++it) {
      for (auto stage : {StreamStage::kPush, StreamStage::kPull, StreamStage::kData}) {
        first.insert(DeterministicRng(1, {w, it, 0, stage}).U64At(0));
      }
    }
  }
  EXPECT_EQ(first.size(), 48u);
  EXPECT_NE(DeterministicRng(1).U64At(0), DeterministicRng(2).U64At(0));
}

TEST(DeterministicRngTest, IndexedMatchesSequential) {
  DeterministicRng r(9, {1, 2, 3, StreamStage::kTrial});
  const DeterministicRng copy = r;
  for (std::uint64_t i = 0; i < 50; ++i) EXPECT_EQ(r.NextU64(), copy.U64At(i));
  EXPECT_EQ(r.counter(), 50u);
}

TEST(DeterministicRngTest, UniformBelowAndGaussianMoments) {
  DeterministicRng r(5);
  std::vector<int> hist(7, 0);
  double s = 0, s2 = 0;
  const int n = 70000;
  for (int i = 0; i < n; ++i) {
    const auto k = r.NextBelow(7);
    ASSERT_LT(k, 7u);
    ++hist[k];
    const double u = r.NextUniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    const double g = r.NextGaussian();
    s += g;
    s2 += g * g;
  }
  for (int h : hist) EXPECT_NEAR(h, n / 7, 5 * std::sqrt(n / 7.0));
  EXPECT_NEAR(s / n, 0.0, 0.02);
  EXPECT_NEAR(s2 / n, 1.0, 0.03);
}

}  // namespace
}  // namespace gradcomp

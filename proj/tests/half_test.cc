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
#include <cstring>
#include <limits>

#include "gradcomp/half.h"

namespace gradcomp {
namespace {

// Reference decoder written from the binary16 layout.
double DecodeHalf(std::uint16_t h) {
  const int sign = (h >> 15) ? -1 : 1;
  const int exp = (h >> 10) & 0x1f;
  const int mant = h & 0x3ff;
  if (exp == 0) return sign * std::ldexp(mant, -24);
  if (exp == 31) return mant ? std::nan("") : sign * std::numeric_limits<double>::infinity();
  return sign * std::ldexp(1024 + mant, exp - 25);
}

TEST(HalfTest, KnownValues) {
  EXPECT_EQ(FloatToHalf(0.0f), 0x0000);
  EXPECT_EQ(FloatToHalf(-0.0f), 0x8000);
  EXPECT_EQ(FloatToHalf(1.0f), 0x3c00);
  EXPECT_EQ(FloatToHalf(-2.0f), 0xc000);
  EXPECT_EQ(FloatToHalf(65504.0f), 0x7bff);
  EXPECT_EQ(FloatToHalf(65520.0f), 0x7c00);  // rounds up to inf
  EXPECT_EQ(FloatToHalf(std::ldexp(1.0f, -24)), 0x0001);
  EXPECT_EQ(FloatToHalf(std::ldexp(1.0f, -26)), 0x0000);
  // 1 + 2^-11 is a tie between 1 and 1 + 2^-10; even mantissa wins.
  EXPECT_EQ(FloatToHalf(1.0f + std::ldexp(1.0f, -11)), 0x3c00);
  EXPECT_EQ(FloatToHalf(1.0f + 3 * std::ldexp(1.0f, -11)), 0x3c02);
}

TEST(HalfTest, EveryHalfRoundTrips) {
  for (std::uint32_t h = 0; h < 0x10000; ++h) {
    const auto bits = static_cast<std::uint16_t>(h);
    const float f = HalfToFloat(bits);
    const double want = DecodeHalf(bits);
    if (std::isnan(want)) {
      EXPECT_TRUE(std::isnan(f));
      continue;
    }
    EXPECT_EQ(static_cast<double>(f), want) << h;
    EXPECT_EQ(FloatToHalf(f), bits) << h;
  }
}

TEST(HalfTest, RoundsToNearest) {
  // Brute-force nearest representable half for a sweep of floats.
  for (float x = -70000.0f; x < 70000.0f; x += 12.345f) {
    const float r = RoundTripHalf(x);
    if (std::isinf(r)) {
      EXPECT_GE(std::fabs(x), 65520.0f);
      continue;
    }
    const std::uint16_t h = FloatToHalf(x);
    const double lo = DecodeHalf(static_cast<std::uint16_t>(h - 1));
    const double hi = DecodeHalf(static_cast<std::uint16_t>(h + 1));
    EXPECT_LE(std::fabs(r - x), std::fabs(lo - x) + 1e-9);
    if (!std::isinf(hi)) {
      EXPECT_LE(std::fabs(r - x), std::fabs(hi - x) + 1e-9);
    }
  }
}

}  // namespace
}  // namespace gradcomp

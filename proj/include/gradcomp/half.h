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

#ifndef GRADCOMP_HALF_H_
#define GRADCOMP_HALF_H_

#include <cstdint>

namespace gradcomp {

// IEEE-754 binary32 -> binary16, round-to-nearest-even. Values beyond the
// half range become +/-inf, which callers must treat as non-finite.
std::uint16_t FloatToHalf(float value) noexcept;
float HalfToFloat(std::uint16_t bits) noexcept;

inline float RoundTripHalf(float value) noexcept {
  return HalfToFloat(FloatToHalf(value));
}

}  // namespace gradcomp

#endif  // GRADCOMP_HALF_H_

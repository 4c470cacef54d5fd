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

// Little-endian byte and bit packing helpers shared by the codec sources.

#ifndef GRADCOMP_SRC_BYTES_H_
#define GRADCOMP_SRC_BYTES_H_

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <vector>

namespace gradcomp {
namespace detail {

inline void PutU16(std::uint8_t* p, std::uint16_t v) {
  p[0] = static_cast<std::uint8_t>(v);
  p[1] = static_cast<std::uint8_t>(v >> 8);
}
inline void PutU32(std::uint8_t* p, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}
inline void PutU64(std::uint8_t* p, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}
inline void PutF32(std::uint8_t* p, float v) {
  PutU32(p, std::bit_cast<std::uint32_t>(v));
}

inline std::uint16_t GetU16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline std::uint32_t GetU32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}
inline std::uint64_t GetU64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}
inline float GetF32(const std::uint8_t* p) {
  return std::bit_cast<float>(GetU32(p));
}

// LSB-first code packing of `bits`-wide codes starting at element `first`.
inline void PutCode(std::uint8_t* base, std::size_t index, int bits,
                    std::uint32_t code) {
  std::size_t bit = index * static_cast<std::size_t>(bits);
  for (int b = 0; b < bits; ++b, ++bit) {
    if ((code >> b) & 1u) base[bit >> 3] |= static_cast<std::uint8_t>(1u << (bit & 7));
  }
}
inline std::uint32_t GetCode(const std::uint8_t* base, std::size_t index,
                             int bits) {
  std::size_t bit = index * static_cast<std::size_t>(bits);
  std::uint32_t code = 0;
  for (int b = 0; b < bits; ++b, ++bit) {
    code |= static_cast<std::uint32_t>((base[bit >> 3] >> (bit & 7)) & 1u) << b;
  }
  return code;
}

}  // namespace detail
}  // namespace gradcomp

#endif  // GRADCOMP_SRC_BYTES_H_

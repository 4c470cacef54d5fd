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

#ifndef GRADCOMP_WIRE_H_
#define GRADCOMP_WIRE_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gradcomp/compressors.h"

namespace gradcomp {

/*
 * Frame layout, all integers little-endian:
 *
 *   0      version (= 1)
 *   1      compressor id (CompressorTag)
 *   2      flags: bit0 value precision (1 = F16), bits1-4 dither bits
 *   3      reserved (= 0)
 *   4..7   tensor id (u32)
 *   8..15  original element count d (u64)
 *   16..23 payload length in bytes (u64)
 *   24..   payload
 */
inline constexpr std::uint8_t kWireVersion = 1;
inline constexpr std::size_t kFrameHeaderSize = 24;

struct DecodedFrame {
  std::uint32_t tensor_id = 0;
  CompressedMessage message;
};

std::vector<std::uint8_t> EncodeFrame(const CompressedMessage& msg,
                                      std::uint32_t tensor_id);
// Throws kMalformedPayload (with byte offset), kUnknownVersion or
// kUnknownCompressorId.
DecodedFrame DecodeFrame(std::span<const std::uint8_t> bytes);

inline std::size_t FrameSize(const CompressorKind& resolved_kind,
                             std::size_t d) {
  return kFrameHeaderSize + PayloadSize(resolved_kind, d);
}

}  // namespace gradcomp

#endif  // GRADCOMP_WIRE_H_

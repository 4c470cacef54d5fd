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

#include "gradcomp/wire.h"

#include <string>

#include "bytes.h"

namespace gradcomp {

std::vector<std::uint8_t> EncodeFrame(const CompressedMessage& msg,
                                      std::uint32_t tensor_id) {
  ValidateMessage(msg);
  std::vector<std::uint8_t> out(kFrameHeaderSize + msg.payload.size());
  std::uint8_t* p = out.data();
  p[0] = kWireVersion;
  p[1] = static_cast<std::uint8_t>(msg.kind.tag);
  std::uint8_t flags = 0;
  if (msg.kind.precision == ValuePrecision::kF16) flags |= 0x01;
  if (IsDither(msg.kind.tag)) flags |= static_cast<std::uint8_t>(msg.kind.bits << 1);
  p[2] = flags;
  p[3] = 0;
  detail::PutU32(p + 4, tensor_id);
  detail::PutU64(p + 8, msg.original_len);
  detail::PutU64(p + 16, msg.payload.size());
  std::copy(msg.payload.begin(), msg.payload.end(), p + kFrameHeaderSize);
  return out;
}

DecodedFrame DecodeFrame(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) {
    throw Error(ErrorCode::kMalformedPayload, "empty frame", 0);
  }
  if (bytes[0] != kWireVersion) {
    throw Error(ErrorCode::kUnknownVersion,
                "frame version " + std::to_string(bytes[0]), 0);
  }
  if (bytes.size() < kFrameHeaderSize) {
    throw Error(ErrorCode::kMalformedPayload,
                "truncated header: " + std::to_string(bytes.size()) + " of " +
                    std::to_string(kFrameHeaderSize) + " bytes",
                bytes.size());
  }
  const std::uint8_t* p = bytes.data();
  if (p[1] > static_cast<std::uint8_t>(CompressorTag::kNaturalDither)) {
    throw Error(ErrorCode::kUnknownCompressorId,
                "compressor id " + std::to_string(p[1]), 1);
  }
  DecodedFrame frame;
  CompressorKind& kind = frame.message.kind;
  kind.tag = static_cast<CompressorTag>(p[1]);
  const std::uint8_t flags = p[2];
  const bool f16 = flags & 0x01;
  const int bits = (flags >> 1) & 0x0F;
  if ((flags & 0xE0) != 0) {
    throw Error(ErrorCode::kMalformedPayload, "reserved flag bits set", 2);
  }
  if (f16 && !IsSparse(kind.tag)) {
    throw Error(ErrorCode::kMalformedPayload, "F16 flag on a dense kind", 2);
  }
  if (IsDither(kind.tag) != (bits != 0)) {
    throw Error(ErrorCode::kMalformedPayload, "dither bits field mismatch", 2);
  }
  if (p[3] != 0) {
    throw Error(ErrorCode::kMalformedPayload, "reserved byte is nonzero", 3);
  }
  kind.precision = f16 ? ValuePrecision::kF16 : ValuePrecision::kF32;
  kind.bits = bits;
  frame.tensor_id = detail::GetU32(p + 4);
  frame.message.original_len = detail::GetU64(p + 8);
  const std::uint64_t payload_len = detail::GetU64(p + 16);
  if (payload_len != bytes.size() - kFrameHeaderSize) {
    throw Error(ErrorCode::kMalformedPayload,
                "payload_len " + std::to_string(payload_len) + " but " +
                    std::to_string(bytes.size() - kFrameHeaderSize) +
                    " bytes follow the header",
                payload_len > bytes.size() - kFrameHeaderSize ? bytes.size() : 16);
  }
  frame.message.payload.assign(bytes.begin() + kFrameHeaderSize, bytes.end());
  if (IsSparse(kind.tag) && payload_len >= 8) {
    kind.k_count = detail::GetU64(frame.message.payload.data());
  }
  try {
    ValidateMessage(frame.message);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kMalformedPayload || !e.byte_offset()) throw;
    // Re-anchor payload offsets to the start of the frame.
    throw Error(ErrorCode::kMalformedPayload, e.detail(),
                kFrameHeaderSize + *e.byte_offset());
  }
  return frame;
}

}  // namespace gradcomp

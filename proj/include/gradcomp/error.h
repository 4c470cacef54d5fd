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

#ifndef GRADCOMP_ERROR_H_
#define GRADCOMP_ERROR_H_

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gradcomp {

enum class ErrorCode {
  kNonFinite,
  kEmptyVector,
  kSizeMismatch,
  kEmptyBlock,
  kKTooLarge,
  kInvalidArgument,
  kMalformedPayload,
  kUnknownVersion,
  kUnknownCompressorId,
  kUnsupportedKind,
  kZeroVector,
  kLengthMismatch,
  kWorkerCountMismatch,
  kNonFiniteUpdate,
  kDegenerateParams,
  kNegativeOmega,
  kDeltaOutOfRange,
  kOracleUnavailable,
  kNonPositiveTime,
  kTimeout,
  kTransport,
  kConfig,
};

std::string_view ErrorCodeName(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + what),
        code_(code),
        detail_(what) {}

  Error(ErrorCode code, const std::string& what, std::size_t byte_offset)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + what +
                           " (at byte offset " + std::to_string(byte_offset) +
                           ")"),
        code_(code),
        detail_(what),
        byte_offset_(byte_offset) {}

  ErrorCode code() const noexcept { return code_; }
  // Message without the code prefix or offset suffix.
  const std::string& detail() const noexcept { return detail_; }
  // Set for wire-format errors so tools can point at the bad byte.
  std::optional<std::size_t> byte_offset() const noexcept {
    return byte_offset_;
  }

 private:
  ErrorCode code_;
  std::string detail_;
  std::optional<std::size_t> byte_offset_;
};

}  // namespace gradcomp

#endif  // GRADCOMP_ERROR_H_

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

#include "gradcomp/error.h"

#include <iostream>
#include <mutex>

#include "gradcomp/log.h"

namespace gradcomp {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kEmptyVector: return "EmptyVector";
    case ErrorCode::kSizeMismatch: return "SizeMismatch";
    case ErrorCode::kEmptyBlock: return "EmptyBlock";
    case ErrorCode::kKTooLarge: return "KTooLarge";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kMalformedPayload: return "MalformedPayload";
    case ErrorCode::kUnknownVersion: return "UnknownVersion";
    case ErrorCode::kUnknownCompressorId: return "UnknownCompressorId";
    case ErrorCode::kUnsupportedKind: return "UnsupportedKind";
    case ErrorCode::kZeroVector: return "ZeroVector";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kWorkerCountMismatch: return "WorkerCountMismatch";
    case ErrorCode::kNonFiniteUpdate: return "NonFiniteUpdate";
    case ErrorCode::kDegenerateParams: return "DegenerateParams";
    case ErrorCode::kNegativeOmega: return "NegativeOmega";
    case ErrorCode::kDeltaOutOfRange: return "DeltaOutOfRange";
    case ErrorCode::kOracleUnavailable: return "OracleUnavailable";
    case ErrorCode::kNonPositiveTime: return "NonPositiveTime";
    case ErrorCode::kTimeout: return "TimeoutError";
    case ErrorCode::kTransport: return "TransportError";
    case ErrorCode::kConfig: return "ConfigError";
  }
  return "Unknown";
}

namespace {

std::mutex& SinkMutex() {
  static std::mutex mu;
  return mu;
}

LogSink& Sink() {
  static LogSink sink;
  return sink;
}

}  // namespace

LogSink SetLogSink(LogSink sink) {
  std::lock_guard<std::mutex> lock(SinkMutex());
  LogSink old = std::move(Sink());
  Sink() = std::move(sink);
  return old;
}

void Log(LogLevel level, std::string_view message) {
  std::lock_guard<std::mutex> lock(SinkMutex());
  if (Sink()) {
    Sink()(level, message);
    return;
  }
  const char* tag = level == LogLevel::kInfo      ? "INFO"
                    : level == LogLevel::kWarning ? "WARN"
                                                  : "ERROR";
  std::cerr << "[" << tag << "] " << message << "\n";
}

}  // namespace gradcomp

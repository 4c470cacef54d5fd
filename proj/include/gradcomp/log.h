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

#ifndef GRADCOMP_LOG_H_
#define GRADCOMP_LOG_H_

#include <functional>
#include <string_view>

namespace gradcomp {

enum class LogLevel { kInfo, kWarning, kError };

using LogSink = std::function<void(LogLevel, std::string_view)>;

// Replaces the process-wide sink (default: stderr). Returns the old sink.
LogSink SetLogSink(LogSink sink);
void Log(LogLevel level, std::string_view message);
inline void LogWarning(std::string_view message) {
  Log(LogLevel::kWarning, message);
}

}  // namespace gradcomp

#endif  // GRADCOMP_LOG_H_

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

#ifndef GRADCOMP_VERIFY_H_
#define GRADCOMP_VERIFY_H_

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace gradcomp {

enum class VerifySuite { kCompressors, kProtocol, kBounds, kAll };

VerifySuite ParseVerifySuite(const std::string& name);

struct VerifyOptions {
  std::uint64_t seed = 1;
  // Added to every certified delta before it is used (sabotage hook for
  // checking that the checks can fail).
  double delta_offset = 0.0;
  // Skip the loopback TCP comparison.
  bool skip_tcp = false;
};

struct InvariantResult {
  std::string name;
  std::uint64_t checks = 0;
  std::uint64_t violations = 0;
  // Smallest slack to the invariant's limit; negative on violation.
  double worst_margin = 0.0;
  std::string note;

  bool passed() const noexcept { return checks > 0 && violations == 0; }
};

std::vector<InvariantResult> RunVerifySuite(VerifySuite suite,
                                            const VerifyOptions& opts = {});

// One line per invariant; returns true when all passed.
bool PrintVerifyReport(std::ostream& out, const std::vector<InvariantResult>& results);

}  // namespace gradcomp

#endif  // GRADCOMP_VERIFY_H_

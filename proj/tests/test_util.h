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

#ifndef GRADCOMP_TESTS_TEST_UTIL_H_
#define GRADCOMP_TESTS_TEST_UTIL_H_

#include <gtest/gtest.h>

#include "gradcomp/error.h"

namespace gradcomp::testing {

// Code of the Error thrown by f; fails the test when nothing is thrown.
template <typename F>
ErrorCode CodeOf(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kConfig;
}

}  // namespace gradcomp::testing

#endif  // GRADCOMP_TESTS_TEST_UTIL_H_

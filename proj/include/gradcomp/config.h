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

#ifndef GRADCOMP_CONFIG_H_
#define GRADCOMP_CONFIG_H_

#include <string>

#include "gradcomp/harness.h"

namespace gradcomp {

/*
 * Run configuration as JSON. Every object rejects unknown keys and every
 * value is type-checked; failures throw kConfig naming the offending path.
 * Omitted keys keep their defaults.
 *
 *   {
 *     "problem": {"kind": "logistic", "dim": 100, ...},
 *     "optimizer": "clan",
 *     "lans": {"beta1": 0.9, "lr": {"base": 0.01}, ...},
 *     "nag": {"momentum": 0.9, "lr": {...}},
 *     "aggregation": {"mode": "compressed_ef",
 *                     "compressor": {"kind": "top_k", "k_fraction": 0.1},
 *                     "size_threshold_bytes": 0, "n_workers": 4, ...},
 *     "batch": 64, "steps": 2000, "seed": 1,
 *     "transport": "inproc", "record_timings": false, "threads": 1
 *   }
 *
 * "aggregation.use_ef" (bool) is accepted as a shorthand: true selects
 * compressed_ef, false compressed, unless a conflicting "mode" is given.
 */
RunConfig ParseRunConfig(const std::string& json_text);
RunConfig LoadRunConfig(const std::string& path);

// Fully resolved configuration; parsing it back yields an equal run.
std::string RunConfigToJson(const RunConfig& cfg);

CompressorKind ParseCompressorSpec(const std::string& json_text);
std::string CompressorKindToJson(const CompressorKind& kind);

}  // namespace gradcomp

#endif  // GRADCOMP_CONFIG_H_

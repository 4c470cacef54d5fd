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

#ifndef GRADCOMP_COMPRESSORS_H_
#define GRADCOMP_COMPRESSORS_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gradcomp/core.h"
#include "gradcomp/rng.h"

namespace gradcomp {

// Numeric values are the wire compressor ids.
enum class CompressorTag : std::uint8_t {
  kNone = 0,
  kFp16 = 1,
  kScaledSign = 2,
  kTopK = 3,
  kRandomK = 4,
  kLinearDither = 5,
  kNaturalDither = 6,
};

enum class ValuePrecision : std::uint8_t { kF32 = 0, kF16 = 1 };

std::string CompressorTagName(CompressorTag tag);
// Accepts the names produced by CompressorTagName (case-insensitive).
CompressorTag ParseCompressorTag(const std::string& name);

inline bool IsSparse(CompressorTag t) {
  return t == CompressorTag::kTopK || t == CompressorTag::kRandomK;
}
inline bool IsDither(CompressorTag t) {
  return t == CompressorTag::kLinearDither || t == CompressorTag::kNaturalDither;
}
// Unbiased (omega) compressors; NONE and FP16 are excluded.
inline bool IsUnbiased(CompressorTag t) {
  return t == CompressorTag::kRandomK || IsDither(t);
}
// Deterministic contractive (delta-approximate) compressors.
inline bool IsBiased(CompressorTag t) {
  return t == CompressorTag::kScaledSign || t == CompressorTag::kTopK;
}

/*!
 * \brief Compressor selection plus its parameters.
 *
 * Sparse kinds carry either an absolute k or a fraction of d. A fraction f
 * resolves to max(1, floor(f * d)). Dither kinds carry a bit budget that
 * includes the sign bit.
 */
struct CompressorKind {
  CompressorTag tag = CompressorTag::kNone;
  std::uint64_t k_count = 0;
  double k_fraction = 0.0;
  int bits = 0;
  ValuePrecision precision = ValuePrecision::kF32;

  static CompressorKind None() { return {}; }
  static CompressorKind Fp16() { return {CompressorTag::kFp16}; }
  static CompressorKind ScaledSign() { return {CompressorTag::kScaledSign}; }
  static CompressorKind TopK(std::uint64_t k,
                             ValuePrecision p = ValuePrecision::kF32) {
    return {CompressorTag::kTopK, k, 0.0, 0, p};
  }
  static CompressorKind TopKFraction(double f,
                                     ValuePrecision p = ValuePrecision::kF32) {
    return {CompressorTag::kTopK, 0, f, 0, p};
  }
  static CompressorKind RandomK(std::uint64_t k,
                                ValuePrecision p = ValuePrecision::kF32) {
    return {CompressorTag::kRandomK, k, 0.0, 0, p};
  }
  static CompressorKind RandomKFraction(double f,
                                        ValuePrecision p = ValuePrecision::kF32) {
    return {CompressorTag::kRandomK, 0, f, 0, p};
  }
  static CompressorKind LinearDither(int bits) {
    return {CompressorTag::kLinearDither, 0, 0.0, bits};
  }
  static CompressorKind NaturalDither(int bits) {
    return {CompressorTag::kNaturalDither, 0, 0.0, bits};
  }

  // Resolved k for a tensor of d elements (sparse kinds only).
  std::uint64_t ResolveK(std::size_t d) const;
  // The same kind with k pinned to ResolveK(d).
  CompressorKind Resolved(std::size_t d) const;
  // Throws kInvalidArgument when parameters are out of range.
  void Validate() const;
  std::string ToString() const;

  bool operator==(const CompressorKind&) const = default;
};

/*!
 * \brief Encoded gradient: kind, element count and payload bytes.
 *
 * The payload layout per kind is the wire layout (see wire.h). Sparse kinds
 * always carry a resolved k_count.
 */
struct CompressedMessage {
  CompressorKind kind;
  std::uint64_t original_len = 0;
  std::vector<std::uint8_t> payload;

  bool operator==(const CompressedMessage&) const = default;
};

// Closed-form payload size in bytes for a resolved kind and d elements.
std::size_t PayloadSize(const CompressorKind& kind, std::size_t d);

// Levels in the dither grid: s = 2^(bits-1) - 1 (linear steps, or natural
// nonzero power-of-two levels).
inline std::uint32_t DitherLevels(int bits) {
  return (1u << (bits - 1)) - 1u;
}

struct CompressOptions {
  // Worker threads for the data-parallel kinds. Output is identical for any
  // value: work is split on fixed index ranges.
  unsigned threads = 1;
};

CompressedMessage Compress(const CompressorKind& kind, const GradientVector& x,
                           DeterministicRng& rng,
                           const CompressOptions& opts = {});
GradientVector Decompress(const CompressedMessage& msg,
                          const CompressOptions& opts = {});

CompressedMessage CompressNone(const GradientVector& x);
CompressedMessage CompressFp16(const GradientVector& x);
CompressedMessage ScaledSign(const GradientVector& x);
CompressedMessage TopK(const GradientVector& x, std::uint64_t k,
                       ValuePrecision precision = ValuePrecision::kF32);
CompressedMessage RandomK(const GradientVector& x, std::uint64_t k,
                          DeterministicRng& rng,
                          ValuePrecision precision = ValuePrecision::kF32);
CompressedMessage LinearDither(const GradientVector& x, int bits,
                               DeterministicRng& rng);
CompressedMessage NaturalDither(const GradientVector& x, int bits,
                                DeterministicRng& rng);

// Structural checks on the payload; throws kMalformedPayload.
void ValidateMessage(const CompressedMessage& msg);

// Sparse payload accessors (kind must be TOP_K or RANDOM_K).
std::vector<std::uint32_t> SparseIndices(const CompressedMessage& msg);
// Scale for SCALED_SIGN, l2 norm for the dither kinds.
float MessageScale(const CompressedMessage& msg);

// q - Decompress(msg), one float subtraction per entry.
GradientVector NaiveErrorUpdate(const GradientVector& q,
                                const CompressedMessage& msg);

/*!
 * \brief Residual q - C(q) for a sparse message built from q, in O(k).
 *
 * Copies q and zeroes the transmitted indices. Valid only when the
 * transmitted values equal q at those indices: TOP_K with F32 values, or
 * RANDOM_K with k == d. Other kinds throw kUnsupportedKind and callers use
 * NaiveErrorUpdate instead. The result is bit-identical to the naive path.
 */
GradientVector FusedErrorUpdate(const GradientVector& q,
                                const CompressedMessage& msg);
bool SupportsFusedErrorUpdate(const CompressedMessage& msg);

/*!
 * \brief Certified delta for the biased compressors.
 *
 * SCALED_SIGN: ||x||_1^2 / (d ||x||_2^2). TOP_K: k / d. Either way
 * ||C(x) - x||^2 <= (1 - delta) ||x||^2.
 */
double DeltaLowerBound(const CompressorKind& kind, const GradientVector& x);

struct OmegaEstimate {
  double mean_bias = 0.0;       // ||mean_t C_t(x) - x||
  double variance_ratio = 0.0;  // mean_t ||C_t(x) - x||^2 / ||x||^2
};

// Monte Carlo over `trials` streams derived from rng (stage kTrial).
OmegaEstimate EmpiricalOmega(const CompressorKind& kind,
                             const GradientVector& x, std::size_t trials,
                             const DeterministicRng& rng);

}  // namespace gradcomp

#endif  // GRADCOMP_COMPRESSORS_H_

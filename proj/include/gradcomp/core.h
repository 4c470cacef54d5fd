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

#ifndef GRADCOMP_CORE_H_
#define GRADCOMP_CORE_H_

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include "gradcomp/error.h"

namespace gradcomp {

/*!
 * \brief Dense, finite, non-empty vector of 32-bit gradient entries.
 *
 * The length is fixed at construction and every entry is checked to be
 * finite. Instances are immutable; arithmetic produces new vectors.
 */
class GradientVector {
 public:
  explicit GradientVector(std::vector<float> values);
  GradientVector(std::initializer_list<float> values);
  explicit GradientVector(std::span<const float> values);

  static GradientVector Zeros(std::size_t d);
  // Rounds each double to float; throws kNonFinite on overflow or NaN.
  static GradientVector FromDoubles(std::span<const double> values);

  std::size_t size() const noexcept { return values_.size(); }
  float operator[](std::size_t i) const { return values_[i]; }
  std::span<const float> values() const noexcept { return values_; }
  const float* data() const noexcept { return values_.data(); }
  std::vector<double> ToDoubles() const;

  // Bitwise equality, so +0 and -0 differ.
  bool BitEqual(const GradientVector& other) const noexcept;
  bool operator==(const GradientVector& other) const noexcept {
    return values_ == other.values_;
  }

 private:
  std::vector<float> values_;
};

/// Half-open index range [offset, offset + size).
struct Block {
  std::size_t offset = 0;
  std::size_t size = 0;
  std::size_t end() const noexcept { return offset + size; }
};

class BlockPartition {
 public:
  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t block_count() const noexcept { return blocks_.size(); }
  const Block& block(std::size_t b) const { return blocks_.at(b); }
  const std::vector<Block>& blocks() const noexcept { return blocks_; }
  std::vector<std::size_t> sizes() const;

  // Block view of x; x.size() must equal dimension().
  std::span<const float> View(const GradientVector& x, std::size_t b) const;
  GradientVector Slice(const GradientVector& x, std::size_t b) const;
  // Inverse of Slice over all blocks, in block order.
  GradientVector Concat(std::span<const GradientVector> parts) const;

 private:
  friend BlockPartition MakePartition(std::size_t d,
                                      std::span<const std::size_t> sizes);
  std::size_t dimension_ = 0;
  std::vector<Block> blocks_;
};

BlockPartition MakePartition(std::size_t d, std::span<const std::size_t> sizes);
inline BlockPartition MakePartition(std::size_t d,
                                    std::initializer_list<std::size_t> sizes) {
  return MakePartition(d, std::span<const std::size_t>(sizes.begin(),
                                                       sizes.size()));
}

// Norms accumulate in 64-bit over fixed-size chunks summed in index order,
// so the result does not depend on how callers split the work.
double L1Norm(std::span<const float> x);
double L2Norm(std::span<const float> x);
double SquaredL2Norm(std::span<const float> x);
double LInfNorm(std::span<const float> x);
inline double L1Norm(const GradientVector& x) { return L1Norm(x.values()); }
inline double L2Norm(const GradientVector& x) { return L2Norm(x.values()); }
inline double LInfNorm(const GradientVector& x) { return LInfNorm(x.values()); }

// Elementwise float arithmetic (one rounding per entry).
GradientVector Add(const GradientVector& a, const GradientVector& b);
GradientVector Subtract(const GradientVector& a, const GradientVector& b);

// Number of elements in each fixed reduction chunk used by the norms.
inline constexpr std::size_t kReductionChunk = 1 << 14;

}  // namespace gradcomp

#endif  // GRADCOMP_CORE_H_

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

#include "gradcomp/core.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

namespace gradcomp {
namespace {

void CheckFinite(std::span<const float> values) {
  if (values.empty()) {
    throw Error(ErrorCode::kEmptyVector, "gradient vector must have d > 0");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw Error(ErrorCode::kNonFinite,
                  "entry " + std::to_string(i) + " is not finite");
    }
  }
}

template <typename Op>
double ChunkedSum(std::span<const float> x, Op op) {
  double total = 0.0;
  for (std::size_t begin = 0; begin < x.size(); begin += kReductionChunk) {
    const std::size_t end = std::min(x.size(), begin + kReductionChunk);
    double partial = 0.0;
    for (std::size_t i = begin; i < end; ++i) partial += op(x[i]);
    total += partial;
  }
  return total;
}

}  // namespace

GradientVector::GradientVector(std::vector<float> values)
    : values_(std::move(values)) {
  CheckFinite(values_);
}

GradientVector::GradientVector(std::initializer_list<float> values)
    : values_(values) {
  CheckFinite(values_);
}

GradientVector::GradientVector(std::span<const float> values)
    : values_(values.begin(), values.end()) {
  CheckFinite(values_);
}

GradientVector GradientVector::Zeros(std::size_t d) {
  return GradientVector(std::vector<float>(d, 0.0f));
}

GradientVector GradientVector::FromDoubles(std::span<const double> values) {
  std::vector<float> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = static_cast<float>(values[i]);
  }
  return GradientVector(std::move(out));
}

std::vector<double> GradientVector::ToDoubles() const {
  return std::vector<double>(values_.begin(), values_.end());
}

bool GradientVector::BitEqual(const GradientVector& other) const noexcept {
  return values_.size() == other.values_.size() &&
         std::memcmp(values_.data(), other.values_.data(),
                     values_.size() * sizeof(float)) == 0;
}

std::vector<std::size_t> BlockPartition::sizes() const {
  std::vector<std::size_t> out;
  out.reserve(blocks_.size());
  for (const auto& b : blocks_) out.push_back(b.size);
  return out;
}

std::span<const float> BlockPartition::View(const GradientVector& x,
                                            std::size_t b) const {
  if (x.size() != dimension_) {
    throw Error(ErrorCode::kLengthMismatch,
                "vector length " + std::to_string(x.size()) +
                    " does not match partition dimension " +
                    std::to_string(dimension_));
  }
  const Block& blk = blocks_.at(b);
  return x.values().subspan(blk.offset, blk.size);
}

GradientVector BlockPartition::Slice(const GradientVector& x,
                                     std::size_t b) const {
  return GradientVector(View(x, b));
}

GradientVector BlockPartition::Concat(
    std::span<const GradientVector> parts) const {
  if (parts.size() != blocks_.size()) {
    throw Error(ErrorCode::kSizeMismatch, "expected one part per block");
  }
  std::vector<float> out;
  out.reserve(dimension_);
  for (std::size_t b = 0; b < parts.size(); ++b) {
    if (parts[b].size() != blocks_[b].size) {
      throw Error(ErrorCode::kLengthMismatch,
                  "part " + std::to_string(b) + " has the wrong length");
    }
    out.insert(out.end(), parts[b].values().begin(), parts[b].values().end());
  }
  return GradientVector(std::move(out));
}

BlockPartition MakePartition(std::size_t d,
                             std::span<const std::size_t> sizes) {
  BlockPartition p;
  std::size_t offset = 0;
  for (std::size_t s : sizes) {
    if (s == 0) throw Error(ErrorCode::kEmptyBlock, "block of size 0");
    p.blocks_.push_back(Block{offset, s});
    offset += s;
  }
  if (offset != d || sizes.empty()) {
    throw Error(ErrorCode::kSizeMismatch,
                "block sizes sum to " + std::to_string(offset) +
                    ", expected " + std::to_string(d));
  }
  p.dimension_ = d;
  return p;
}

double L1Norm(std::span<const float> x) {
  return ChunkedSum(x, [](float v) { return std::fabs(static_cast<double>(v)); });
}

double SquaredL2Norm(std::span<const float> x) {
  return ChunkedSum(x, [](float v) {
    const double dv = v;
    return dv * dv;
  });
}

double L2Norm(std::span<const float> x) { return std::sqrt(SquaredL2Norm(x)); }

double LInfNorm(std::span<const float> x) {
  double m = 0.0;
  for (float v : x) m = std::max(m, std::fabs(static_cast<double>(v)));
  return m;
}

GradientVector Add(const GradientVector& a, const GradientVector& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kLengthMismatch, "Add: length mismatch");
  }
  std::vector<float> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return GradientVector(std::move(out));
}

GradientVector Subtract(const GradientVector& a, const GradientVector& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kLengthMismatch, "Subtract: length mismatch");
  }
  std::vector<float> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return GradientVector(std::move(out));
}

}  // namespace gradcomp

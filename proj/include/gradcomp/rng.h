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

#ifndef GRADCOMP_RNG_H_
#define GRADCOMP_RNG_H_

#include <array>
#include <cstdint>

namespace gradcomp {

enum class StreamStage : std::uint8_t {
  kPush = 0,
  kPull = 1,
  kData = 2,
  kInit = 3,
  kTrial = 4,
  kNoise = 5,
};

struct StreamCoords {
  std::uint64_t worker = 0;
  std::uint64_t iteration = 0;
  std::uint64_t tensor = 0;
  StreamStage stage = StreamStage::kPush;
};

/*!
 * \brief Counter-based random stream (Philox4x32-10).
 *
 * The stream key is a hash of the seed and the stream coordinates. Draw i of
 * a stream is a pure function of (key, i), so U64At(i) can be evaluated in any
 * order from any thread. The sequential Next* helpers advance a private
 * counter; instances are meant to be owned by one caller and copied freely.
 */
class DeterministicRng {
 public:
  explicit DeterministicRng(std::uint64_t seed = 0);
  DeterministicRng(std::uint64_t seed, const StreamCoords& coords);

  // A fresh stream keyed by (seed, coords); the counter starts at zero.
  DeterministicRng Derive(const StreamCoords& coords) const {
    return DeterministicRng(seed_, coords);
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t U64At(std::uint64_t index) const noexcept;
  // Uniform double in [0, 1) with 53 random bits.
  double UniformAt(std::uint64_t index) const noexcept {
    return static_cast<double>(U64At(index) >> 11) * 0x1.0p-53;
  }

  // Marks n draws as consumed by an indexed (U64At) user.
  void Advance(std::uint64_t n) noexcept { counter_ += n; }

  std::uint64_t NextU64() noexcept { return U64At(counter_++); }
  double NextUniform() noexcept { return UniformAt(counter_++); }
  // Unbiased integer in [0, bound), bound > 0.
  std::uint64_t NextBelow(std::uint64_t bound) noexcept;
  double NextGaussian() noexcept;

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

std::uint64_t SplitMix64(std::uint64_t x) noexcept;

// Raw Philox4x32-10 block function.
std::array<std::uint32_t, 4> Philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key) noexcept;

}  // namespace gradcomp

#endif  // GRADCOMP_RNG_H_

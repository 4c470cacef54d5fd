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

#ifndef GRADCOMP_OPTIMIZERS_H_
#define GRADCOMP_OPTIMIZERS_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gradcomp/core.h"
#include "gradcomp/protocol.h"

namespace gradcomp {

enum class LrDecay { kConstant, kInverseSqrt };

/*!
 * \brief Learning rate eta_t for step t >= 1.
 *
 * Explicit values win when present (the last one repeats). Otherwise
 * base * min(1, t / warmup_steps), optionally divided by sqrt(t - warmup)
 * after warmup.
 */
struct LrSchedule {
  double base = 1e-3;
  std::size_t warmup_steps = 0;
  LrDecay decay = LrDecay::kConstant;
  std::vector<double> values;

  double At(std::uint64_t t) const;
  void Validate() const;
};

struct LansConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-6;
  double weight_decay = 0.0;
  LrSchedule lr;
  double alpha_l = 0.01;
  double alpha_u = 10.0;
  // Unset means one block spanning the whole vector.
  std::optional<BlockPartition> partition;

  void Validate() const;
  BlockPartition PartitionFor(std::size_t d) const;
};

// Trust-ratio scaling: clamp(z, alpha_l, alpha_u).
double Phi(const LansConfig& cfg, double z);

/*!
 * \brief First and second moments of one LANS replica.
 *
 * Moments are kept in double so the bias-corrected first moment of step 1
 * rounds back to the aggregated gradient exactly.
 */
struct LansState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 1;  // number of the next step

  static LansState Fresh(std::size_t d);
  bool operator==(const LansState&) const = default;
};

struct LansStepInfo {
  std::vector<double> m_hat;
  std::vector<double> v_hat;
  double lr = 0.0;
  std::vector<double> phi;           // per block
  std::vector<double> update_norms;  // per block ||x_{t+1,b} - x_{t,b}||
  // Per block eta * alpha_u plus the float rounding slack of x_{t+1}.
  std::vector<double> update_bounds;
  bool WithinBounds() const;
};

// One LANS step on the aggregated gradient g. Throws kLengthMismatch or
// kNonFiniteUpdate; the state is unchanged when it throws.
GradientVector LansStep(const LansConfig& cfg, LansState& state,
                        const GradientVector& x, const GradientVector& g,
                        LansStepInfo* info = nullptr);

// Aggregation mode paired with a compressor family: biased kinds use error
// feedback, unbiased kinds and FP16 do not, NONE is full precision.
AggregationMode DefaultModeFor(const CompressorKind& kind);

// Tensor list for a cluster that carries one tensor per block.
std::vector<TensorSpec> BlockTensors(const BlockPartition& partition);

/*!
 * \brief One synchronous aggregation of flat per-worker gradients.
 *
 * Each block travels as its own tensor (id = block index); the cluster must
 * have been built from BlockTensors(partition).
 */
GradientVector AggregateFlat(Cluster& cluster, const BlockPartition& partition,
                             std::uint64_t iteration,
                             std::span<const GradientVector> worker_grads,
                             RoundResult* round = nullptr);

/*!
 * \brief One CLAN iteration: aggregate, then a LANS step on every replica.
 *
 * states[i] and params[i] belong to worker i. After the step every replica
 * must hold bit-identical parameters, otherwise kInvalidArgument is thrown.
 */
GradientVector ClanIteration(const LansConfig& cfg, std::span<LansState> states,
                             std::span<GradientVector> params, Cluster& cluster,
                             std::uint64_t iteration,
                             std::span<const GradientVector> worker_grads,
                             RoundResult* round = nullptr,
                             LansStepInfo* info = nullptr);

struct NagConfig {
  double momentum = 0.9;
  LrSchedule lr;

  void Validate() const;
};

struct NagState {
  std::vector<double> velocity;
  std::uint64_t t = 1;

  static NagState Fresh(std::size_t d);
};

// v <- mu v + g; x <- x - eta (g + mu v).
GradientVector NagStep(const NagConfig& cfg, NagState& state,
                       const GradientVector& x, const GradientVector& g);

}  // namespace gradcomp

#endif  // GRADCOMP_OPTIMIZERS_H_

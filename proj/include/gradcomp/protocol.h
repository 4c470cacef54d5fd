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

#ifndef GRADCOMP_PROTOCOL_H_
#define GRADCOMP_PROTOCOL_H_

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gradcomp/compressors.h"
#include "gradcomp/core.h"
#include "gradcomp/rng.h"

namespace gradcomp {

enum class AggregationMode { kFullPrecision, kCompressed, kCompressedEf };
enum class ShardPolicy { kModulo, kWeighted };

std::string AggregationModeName(AggregationMode mode);
AggregationMode ParseAggregationMode(const std::string& name);

inline constexpr std::uint64_t kDefaultSizeThreshold = 1 << 20;

struct AggregationConfig {
  AggregationMode mode = AggregationMode::kFullPrecision;
  CompressorKind compressor;
  // Tensors whose raw FP32 size is below this travel uncompressed.
  std::uint64_t size_threshold_bytes = kDefaultSizeThreshold;
  std::uint32_t shard_count = 1;
  std::uint32_t n_workers = 1;
  ShardPolicy shard_policy = ShardPolicy::kModulo;
  // Simulated devices per worker for the FP16 intra-node stage; 1 disables it.
  std::uint32_t local_devices = 1;

  void Validate() const;
};

// How one tensor travels in a round.
struct TensorRoute {
  AggregationMode mode = AggregationMode::kFullPrecision;
  CompressorKind kind;  // resolved for the tensor's d
  bool bypassed = false;  // below the size threshold
};

TensorRoute RouteTensor(const AggregationConfig& cfg, std::size_t d);

std::uint32_t AssignShard(std::uint32_t tensor_id, std::uint32_t shard_count);

struct TensorSpec {
  std::uint32_t id = 0;
  std::size_t size = 0;  // elements
};

/*!
 * \brief Shard index for every tensor, in the order given.
 *
 * kModulo uses tensor_id mod S. kWeighted spreads compression-eligible
 * tensors largest-first onto the least-loaded shard (ties: lower tensor id,
 * lower shard id) and places the rest by modulo.
 */
std::vector<std::uint32_t> PlanShards(const AggregationConfig& cfg,
                                      std::span<const TensorSpec> tensors);

// Average of FP16-rounded device gradients (intra-node stage).
GradientVector IntraNodeReduce(std::span<const GradientVector> devices);

// Stream for a worker's push compression.
DeterministicRng PushStream(const DeterministicRng& base, std::uint32_t worker,
                            std::uint64_t iteration, std::uint32_t tensor);
// Stream for a shard's pull re-compression.
DeterministicRng PullStream(const DeterministicRng& base, std::uint32_t shard,
                            std::uint64_t iteration, std::uint32_t tensor);

struct PushOutcome {
  CompressedMessage message;
  // Certified delta of the compressed vector for biased kinds, else empty.
  std::optional<double> delta;
};

/*!
 * \brief Worker side of the aggregation protocols.
 *
 * Holds the per-tensor residual e. In error-feedback mode a push compresses
 * q = g + e and stores e <- q - C(q); other modes never touch e.
 */
class WorkerState {
 public:
  explicit WorkerState(std::uint32_t worker_id = 0) : worker_id_(worker_id) {}

  std::uint32_t worker_id() const noexcept { return worker_id_; }
  // Zero vector of length d when the tensor has no residual yet.
  GradientVector Residual(std::uint32_t tensor, std::size_t d) const;
  bool HasResidual(std::uint32_t tensor) const {
    return residual_.count(tensor) != 0;
  }
  const std::map<std::uint32_t, GradientVector>& residuals() const noexcept {
    return residual_;
  }

  PushOutcome Push(const TensorRoute& route, std::uint32_t tensor,
                   const GradientVector& g, const DeterministicRng& base,
                   std::uint64_t iteration);
  GradientVector Pull(const CompressedMessage& msg) const {
    return Decompress(msg);
  }

 private:
  std::uint32_t worker_id_;
  std::map<std::uint32_t, GradientVector> residual_;
};

/*!
 * \brief Server shard: collects n worker messages per tensor, averages the
 * decoded vectors (64-bit, worker-index order) and re-compresses.
 *
 * In error-feedback mode the shard adds its residual before compressing and
 * stores e~ <- Delta - C(Delta).
 */
class ServerShardState {
 public:
  ServerShardState(std::uint32_t shard_id = 0, std::uint32_t n_workers = 1)
      : shard_id_(shard_id), n_workers_(n_workers) {}

  std::uint32_t shard_id() const noexcept { return shard_id_; }
  std::uint32_t n_workers() const noexcept { return n_workers_; }

  // Stores a worker message; returns true once all n are present.
  bool Accept(std::uint32_t worker, std::uint32_t tensor,
              CompressedMessage msg, std::uint64_t round = 0);
  // Reduces a complete tensor and returns p_t. Clears the buffer.
  CompressedMessage Aggregate(const TensorRoute& route, std::uint32_t tensor,
                              const DeterministicRng& base,
                              std::uint64_t iteration);

  // Frame-level entry used by transports: decodes, accepts, and when the
  // tensor completes returns the encoded pull frame.
  std::optional<std::vector<std::uint8_t>> OnFrame(
      const AggregationConfig& cfg, const DeterministicRng& base,
      std::uint64_t round, std::uint32_t worker,
      std::span<const std::uint8_t> frame);

  GradientVector Residual(std::uint32_t tensor, std::size_t d) const;
  const std::map<std::uint32_t, GradientVector>& residuals() const noexcept {
    return residual_;
  }
  // Delta_t of the most recent aggregation of `tensor`.
  std::optional<GradientVector> LastAggregate(std::uint32_t tensor) const;
  std::optional<double> LastDelta(std::uint32_t tensor) const;
  std::size_t PendingTensors() const noexcept { return pending_.size(); }

  // Guards state shared with a transport thread.
  std::mutex& mutex() const { return mu_; }

 private:
  struct Pending {
    std::uint64_t round = 0;
    std::size_t arrived = 0;
    std::vector<std::optional<CompressedMessage>> messages;
  };

  std::uint32_t shard_id_;
  std::uint32_t n_workers_;
  std::map<std::uint32_t, Pending> pending_;
  std::map<std::uint32_t, GradientVector> residual_;
  std::map<std::uint32_t, GradientVector> last_aggregate_;
  std::map<std::uint32_t, double> last_delta_;
  mutable std::mutex mu_;
};

// Plain aggregation: p = (1/n) sum g_i with 64-bit accumulation in worker order.
GradientVector PushPull(std::span<const GradientVector> gradients);

/*!
 * \brief Two-way compression without error feedback for one tensor.
 *
 * Workers push C(g_i); the shard averages the decoded messages into Delta
 * and broadcasts C(Delta). Requires cfg.mode == kCompressed; biased kinds log
 * a warning. The size threshold is not applied here.
 */
GradientVector CompressPushPull(const AggregationConfig& cfg,
                                std::span<WorkerState> workers,
                                ServerShardState& shard,
                                std::span<const GradientVector> gradients,
                                std::uint32_t tensor,
                                const DeterministicRng& base,
                                std::uint64_t iteration);

// Two-way compression with worker and server error feedback for one tensor.
// Requires cfg.mode == kCompressedEf.
GradientVector CompressEfPushPull(const AggregationConfig& cfg,
                                  std::span<WorkerState> workers,
                                  ServerShardState& shard,
                                  std::span<const GradientVector> gradients,
                                  std::uint32_t tensor,
                                  const DeterministicRng& base,
                                  std::uint64_t iteration);

struct OutgoingFrame {
  std::uint32_t shard = 0;
  std::vector<std::uint8_t> bytes;
};

// Moves one round of frames between workers and shards.
class Transport {
 public:
  virtual ~Transport() = default;
  // push[w]: frames sent by worker w. Returns pull[w]: every pull frame
  // received by worker w (one per tensor, in arrival order).
  virtual std::vector<std::vector<std::vector<std::uint8_t>>> Exchange(
      std::uint64_t round,
      const std::vector<std::vector<OutgoingFrame>>& push) = 0;
  virtual std::string name() const = 0;
};

class InProcessTransport : public Transport {
 public:
  InProcessTransport(const AggregationConfig& cfg, DeterministicRng base,
                     std::deque<ServerShardState>& shards)
      : cfg_(cfg), base_(base), shards_(shards) {}

  std::vector<std::vector<std::vector<std::uint8_t>>> Exchange(
      std::uint64_t round,
      const std::vector<std::vector<OutgoingFrame>>& push) override;
  std::string name() const override { return "inproc"; }

 private:
  AggregationConfig cfg_;
  DeterministicRng base_;
  std::deque<ServerShardState>& shards_;
};

struct TensorRoundStats {
  std::uint32_t tensor_id = 0;
  std::uint32_t shard = 0;
  TensorRoute route;
  double max_worker_residual = 0.0;  // max_i ||e_{t+1,i}||
  double server_residual = 0.0;      // ||e~_{t+1}||
  std::optional<double> min_delta;   // over worker pushes and the pull
};

struct RoundResult {
  // outputs[t]: aggregated tensor as seen by worker 0.
  std::vector<GradientVector> outputs;
  // True when every worker decoded bit-identical vectors.
  bool workers_agree = true;
  std::vector<std::uint64_t> bytes_push;  // per worker
  std::vector<std::uint64_t> bytes_pull;  // per worker
  std::vector<TensorRoundStats> tensors;
};

enum class TransportKind { kInProcess, kTcp };

struct TransportOptions {
  TransportKind kind = TransportKind::kInProcess;
  std::string host = "127.0.0.1";
  // 0 picks ephemeral ports; otherwise shard s listens on base_port + s.
  std::uint16_t base_port = 0;
  int timeout_ms = 30000;
};

// Parses "inproc" or "tcp[:host[:port]]".
TransportOptions ParseTransport(const std::string& spec);

/*!
 * \brief A set of workers and server shards running synchronous rounds.
 *
 * Each round every worker pushes one frame per tensor to the tensor's shard;
 * shards broadcast one pull frame per tensor back. Rounds are bulk
 * synchronous: RunRound returns only after every worker has all outputs.
 */
class Cluster {
 public:
  Cluster(AggregationConfig cfg, std::vector<TensorSpec> tensors,
          std::uint64_t seed, const TransportOptions& transport = {});
  ~Cluster();
  Cluster(const Cluster&) = delete;
  Cluster& operator=(const Cluster&) = delete;

  // gradients[w][t] follows the tensor order given at construction.
  RoundResult RunRound(std::uint64_t iteration,
                       const std::vector<std::vector<GradientVector>>& gradients);

  const AggregationConfig& config() const noexcept { return cfg_; }
  const std::vector<TensorSpec>& tensors() const noexcept { return tensors_; }
  const std::vector<std::uint32_t>& shard_plan() const noexcept { return plan_; }
  const WorkerState& worker(std::size_t i) const { return workers_.at(i); }
  const ServerShardState& shard(std::size_t s) const { return shards_.at(s); }
  const Transport& transport() const { return *transport_; }

 private:
  AggregationConfig cfg_;
  std::vector<TensorSpec> tensors_;
  std::vector<std::uint32_t> plan_;
  std::vector<TensorRoute> routes_;
  DeterministicRng base_;
  std::vector<WorkerState> workers_;
  std::deque<ServerShardState> shards_;
  std::unique_ptr<Transport> transport_;
};

}  // namespace gradcomp

#endif  // GRADCOMP_PROTOCOL_H_

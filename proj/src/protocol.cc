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

#include "gradcomp/protocol.h"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <string>
#include <utility>

#include "gradcomp/half.h"
#include "gradcomp/log.h"
#include "gradcomp/tcp_transport.h"
#include "gradcomp/wire.h"

namespace gradcomp {

namespace {

// q = g + e, leaving g_j untouched where e_j == 0 so -0.0 survives.
GradientVector AddResidual(const GradientVector& g, const GradientVector& e) {
  if (g.size() != e.size()) {
    throw Error(ErrorCode::kLengthMismatch,
                "residual has " + std::to_string(e.size()) + " entries, tensor " +
                    std::to_string(g.size()));
  }
  std::vector<float> out(g.values().begin(), g.values().end());
  for (std::size_t j = 0; j < out.size(); ++j) {
    if (e[j] != 0.0f) out[j] += e[j];
  }
  return GradientVector(std::move(out));
}

GradientVector Residue(const GradientVector& q, const CompressedMessage& msg) {
  if (SupportsFusedErrorUpdate(msg)) return FusedErrorUpdate(q, msg);
  return NaiveErrorUpdate(q, msg);
}

std::optional<double> Certify(const CompressorKind& kind,
                              const GradientVector& x) {
  if (!IsBiased(kind.tag)) return std::nullopt;
  if (SquaredL2Norm(x.values()) == 0.0) return std::nullopt;
  return DeltaLowerBound(kind, x);
}

void CheckWorkers(const AggregationConfig& cfg, std::size_t workers,
                  const ServerShardState& shard, std::size_t gradients) {
  if (workers != cfg.n_workers || gradients != cfg.n_workers ||
      shard.n_workers() != cfg.n_workers) {
    throw Error(ErrorCode::kWorkerCountMismatch,
                "config expects " + std::to_string(cfg.n_workers) +
                    " workers, got " + std::to_string(workers) + " states and " +
                    std::to_string(gradients) + " gradients");
  }
}

GradientVector RunOneTensor(const AggregationConfig& cfg,
                            std::span<WorkerState> workers,
                            ServerShardState& shard,
                            std::span<const GradientVector> gradients,
                            std::uint32_t tensor, const DeterministicRng& base,
                            std::uint64_t iteration) {
  CheckWorkers(cfg, workers.size(), shard, gradients.size());
  const std::size_t d = gradients[0].size();
  TensorRoute route;
  route.mode = cfg.mode;
  route.kind = cfg.compressor.Resolved(d);
  for (std::size_t i = 0; i < workers.size(); ++i) {
    if (gradients[i].size() != d) {
      throw Error(ErrorCode::kLengthMismatch, "gradient lengths differ");
    }
    PushOutcome out = workers[i].Push(route, tensor, gradients[i], base, iteration);
    shard.Accept(static_cast<std::uint32_t>(i), tensor, std::move(out.message),
                 iteration);
  }
  return Decompress(shard.Aggregate(route, tensor, base, iteration));
}

}  // namespace

std::string AggregationModeName(AggregationMode mode) {
  switch (mode) {
    case AggregationMode::kFullPrecision:
      return "full_precision";
    case AggregationMode::kCompressed:
      return "compressed";
    case AggregationMode::kCompressedEf:
      return "compressed_ef";
  }
  return "unknown";
}

AggregationMode ParseAggregationMode(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (s == "full_precision" || s == "full") return AggregationMode::kFullPrecision;
  if (s == "compressed") return AggregationMode::kCompressed;
  if (s == "compressed_ef" || s == "ef") return AggregationMode::kCompressedEf;
  throw Error(ErrorCode::kInvalidArgument, "unknown aggregation mode '" + name + "'");
}

void AggregationConfig::Validate() const {
  if (shard_count == 0) {
    throw Error(ErrorCode::kInvalidArgument, "shard_count must be >= 1");
  }
  if (n_workers == 0) {
    throw Error(ErrorCode::kInvalidArgument, "n_workers must be >= 1");
  }
  if (local_devices == 0) {
    throw Error(ErrorCode::kInvalidArgument, "local_devices must be >= 1");
  }
  compressor.Validate();
}

TensorRoute RouteTensor(const AggregationConfig& cfg, std::size_t d) {
  TensorRoute route;
  if (cfg.mode == AggregationMode::kFullPrecision) return route;
  if (4 * static_cast<std::uint64_t>(d) < cfg.size_threshold_bytes) {
    route.bypassed = true;
    return route;
  }
  route.mode = cfg.mode;
  route.kind = cfg.compressor.Resolved(d);
  return route;
}

std::uint32_t AssignShard(std::uint32_t tensor_id, std::uint32_t shard_count) {
  if (shard_count == 0) {
    throw Error(ErrorCode::kInvalidArgument, "shard_count must be >= 1");
  }
  return tensor_id % shard_count;
}

std::vector<std::uint32_t> PlanShards(const AggregationConfig& cfg,
                                      std::span<const TensorSpec> tensors) {
  std::vector<std::uint32_t> plan(tensors.size());
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    plan[i] = AssignShard(tensors[i].id, cfg.shard_count);
    if (cfg.shard_policy == ShardPolicy::kWeighted &&
        !RouteTensor(cfg, tensors[i].size).bypassed &&
        cfg.mode != AggregationMode::kFullPrecision) {
      eligible.push_back(i);
    }
  }
  if (eligible.empty()) return plan;
  std::vector<std::uint64_t> weight(tensors.size(), 0);
  for (std::size_t i : eligible) {
    weight[i] = FrameSize(cfg.compressor.Resolved(tensors[i].size), tensors[i].size);
  }
  std::stable_sort(eligible.begin(), eligible.end(),
                   [&](std::size_t a, std::size_t b) {
                     if (weight[a] != weight[b]) return weight[a] > weight[b];
                     return tensors[a].id < tensors[b].id;
                   });
  std::vector<std::uint64_t> load(cfg.shard_count, 0);
  for (std::size_t i : eligible) {
    const auto it = std::min_element(load.begin(), load.end());
    plan[i] = static_cast<std::uint32_t>(it - load.begin());
    *it += weight[i];
  }
  return plan;
}

GradientVector IntraNodeReduce(std::span<const GradientVector> devices) {
  if (devices.empty()) {
    throw Error(ErrorCode::kWorkerCountMismatch, "no device gradients");
  }
  const std::size_t d = devices[0].size();
  std::vector<double> sum(d, 0.0);
  for (const GradientVector& g : devices) {
    if (g.size() != d) {
      throw Error(ErrorCode::kLengthMismatch, "device gradient lengths differ");
    }
    for (std::size_t j = 0; j < d; ++j) sum[j] += RoundTripHalf(g[j]);
  }
  const double m = static_cast<double>(devices.size());
  for (double& v : sum) v /= m;
  return GradientVector::FromDoubles(sum);
}

DeterministicRng PushStream(const DeterministicRng& base, std::uint32_t worker,
                            std::uint64_t iteration, std::uint32_t tensor) {
  return base.Derive({worker, iteration, tensor, StreamStage::kPush});
}

DeterministicRng PullStream(const DeterministicRng& base, std::uint32_t shard,
                            std::uint64_t iteration, std::uint32_t tensor) {
  return base.Derive({shard, iteration, tensor, StreamStage::kPull});
}

GradientVector WorkerState::Residual(std::uint32_t tensor, std::size_t d) const {
  const auto it = residual_.find(tensor);
  if (it == residual_.end()) return GradientVector::Zeros(d);
  return it->second;
}

PushOutcome WorkerState::Push(const TensorRoute& route, std::uint32_t tensor,
                              const GradientVector& g,
                              const DeterministicRng& base,
                              std::uint64_t iteration) {
  PushOutcome out;
  DeterministicRng rng = PushStream(base, worker_id_, iteration, tensor);
  switch (route.mode) {
    case AggregationMode::kFullPrecision:
      out.message = CompressNone(g);
      break;
    case AggregationMode::kCompressed:
      out.message = Compress(route.kind, g, rng);
      out.delta = Certify(route.kind, g);
      break;
    case AggregationMode::kCompressedEf: {
      const GradientVector q = AddResidual(g, Residual(tensor, g.size()));
      out.message = Compress(route.kind, q, rng);
      out.delta = Certify(route.kind, q);
      residual_.insert_or_assign(tensor, Residue(q, out.message));
      break;
    }
  }
  return out;
}

bool ServerShardState::Accept(std::uint32_t worker, std::uint32_t tensor,
                              CompressedMessage msg, std::uint64_t round) {
  if (worker >= n_workers_) {
    throw Error(ErrorCode::kWorkerCountMismatch,
                "worker " + std::to_string(worker) + " but shard expects " +
                    std::to_string(n_workers_));
  }
  Pending& p = pending_[tensor];
  if (p.arrived == 0) {
    p.round = round;
    p.messages.assign(n_workers_, std::nullopt);
  } else if (p.round != round) {
    throw Error(ErrorCode::kTransport,
                "tensor " + std::to_string(tensor) + ": message for round " +
                    std::to_string(round) + " while round " +
                    std::to_string(p.round) + " is open");
  }
  if (p.messages[worker]) {
    throw Error(ErrorCode::kInvalidArgument,
                "duplicate message from worker " + std::to_string(worker) +
                    " for tensor " + std::to_string(tensor));
  }
  for (const auto& m : p.messages) {
    if (m && m->original_len != msg.original_len) {
      throw Error(ErrorCode::kLengthMismatch,
                  "workers disagree on the length of tensor " +
                      std::to_string(tensor));
    }
  }
  p.messages[worker] = std::move(msg);
  ++p.arrived;
  return p.arrived == n_workers_;
}

CompressedMessage ServerShardState::Aggregate(const TensorRoute& route,
                                              std::uint32_t tensor,
                                              const DeterministicRng& base,
                                              std::uint64_t iteration) {
  const auto it = pending_.find(tensor);
  if (it == pending_.end() || it->second.arrived != n_workers_) {
    throw Error(ErrorCode::kWorkerCountMismatch,
                "tensor " + std::to_string(tensor) + " has " +
                    std::to_string(it == pending_.end() ? 0 : it->second.arrived) +
                    " of " + std::to_string(n_workers_) + " messages");
  }
  Pending pending = std::move(it->second);
  pending_.erase(it);

  const std::size_t d = pending.messages[0]->original_len;
  std::vector<double> sum(d, 0.0);
  for (const auto& m : pending.messages) {
    const GradientVector v = Decompress(*m);
    for (std::size_t j = 0; j < d; ++j) sum[j] += v[j];
  }
  const double n = static_cast<double>(n_workers_);
  for (double& v : sum) v /= n;
  GradientVector delta = GradientVector::FromDoubles(sum);

  CompressedMessage p;
  if (route.mode == AggregationMode::kFullPrecision) {
    p = CompressNone(delta);
  } else {
    if (route.mode == AggregationMode::kCompressedEf) {
      delta = AddResidual(delta, Residual(tensor, d));
    }
    DeterministicRng rng = PullStream(base, shard_id_, iteration, tensor);
    p = Compress(route.kind, delta, rng);
    if (auto cert = Certify(route.kind, delta)) {
      last_delta_[tensor] = *cert;
    } else {
      last_delta_.erase(tensor);
    }
    if (route.mode == AggregationMode::kCompressedEf) {
      residual_.insert_or_assign(tensor, Residue(delta, p));
    }
  }
  last_aggregate_.insert_or_assign(tensor, std::move(delta));
  return p;
}

std::optional<std::vector<std::uint8_t>> ServerShardState::OnFrame(
    const AggregationConfig& cfg, const DeterministicRng& base,
    std::uint64_t round, std::uint32_t worker,
    std::span<const std::uint8_t> frame) {
  std::lock_guard<std::mutex> lock(mu_);
  DecodedFrame decoded = DecodeFrame(frame);
  const TensorRoute route = RouteTensor(cfg, decoded.message.original_len);
  if (!(decoded.message.kind == route.kind)) {
    throw Error(ErrorCode::kUnsupportedKind,
                "tensor " + std::to_string(decoded.tensor_id) + " arrived as " +
                    decoded.message.kind.ToString() + ", expected " +
                    route.kind.ToString());
  }
  if (!Accept(worker, decoded.tensor_id, std::move(decoded.message), round)) {
    return std::nullopt;
  }
  return EncodeFrame(Aggregate(route, decoded.tensor_id, base, round),
                     decoded.tensor_id);
}

GradientVector ServerShardState::Residual(std::uint32_t tensor,
                                          std::size_t d) const {
  const auto it = residual_.find(tensor);
  if (it == residual_.end()) return GradientVector::Zeros(d);
  return it->second;
}

std::optional<GradientVector> ServerShardState::LastAggregate(
    std::uint32_t tensor) const {
  const auto it = last_aggregate_.find(tensor);
  if (it == last_aggregate_.end()) return std::nullopt;
  return it->second;
}

std::optional<double> ServerShardState::LastDelta(std::uint32_t tensor) const {
  const auto it = last_delta_.find(tensor);
  if (it == last_delta_.end()) return std::nullopt;
  return it->second;
}

GradientVector PushPull(std::span<const GradientVector> gradients) {
  if (gradients.empty()) {
    throw Error(ErrorCode::kWorkerCountMismatch, "push_pull needs >= 1 gradient");
  }
  const std::size_t d = gradients[0].size();
  std::vector<double> sum(d, 0.0);
  for (const GradientVector& g : gradients) {
    if (g.size() != d) {
      throw Error(ErrorCode::kLengthMismatch,
                  "gradient of length " + std::to_string(g.size()) +
                      ", expected " + std::to_string(d));
    }
    for (std::size_t j = 0; j < d; ++j) sum[j] += g[j];
  }
  const double n = static_cast<double>(gradients.size());
  for (double& v : sum) v /= n;
  return GradientVector::FromDoubles(sum);
}

GradientVector CompressPushPull(const AggregationConfig& cfg,
                                std::span<WorkerState> workers,
                                ServerShardState& shard,
                                std::span<const GradientVector> gradients,
                                std::uint32_t tensor,
                                const DeterministicRng& base,
                                std::uint64_t iteration) {
  if (cfg.mode != AggregationMode::kCompressed) {
    throw Error(ErrorCode::kInvalidArgument,
                "compress_push_pull needs mode compressed");
  }
  if (IsBiased(cfg.compressor.tag)) {
    LogWarning("BiasedKindWithoutEF: " + cfg.compressor.ToString() +
               " without error feedback");
  }
  return RunOneTensor(cfg, workers, shard, gradients, tensor, base, iteration);
}

GradientVector CompressEfPushPull(const AggregationConfig& cfg,
                                  std::span<WorkerState> workers,
                                  ServerShardState& shard,
                                  std::span<const GradientVector> gradients,
                                  std::uint32_t tensor,
                                  const DeterministicRng& base,
                                  std::uint64_t iteration) {
  if (cfg.mode != AggregationMode::kCompressedEf) {
    throw Error(ErrorCode::kInvalidArgument,
                "compress_ef_push_pull needs mode compressed_ef");
  }
  return RunOneTensor(cfg, workers, shard, gradients, tensor, base, iteration);
}

std::vector<std::vector<std::vector<std::uint8_t>>> InProcessTransport::Exchange(
    std::uint64_t round, const std::vector<std::vector<OutgoingFrame>>& push) {
  std::vector<std::vector<std::vector<std::uint8_t>>> pull(push.size());
  for (std::size_t w = 0; w < push.size(); ++w) {
    for (const OutgoingFrame& f : push[w]) {
      auto reply = shards_.at(f.shard).OnFrame(
          cfg_, base_, round, static_cast<std::uint32_t>(w), f.bytes);
      if (!reply) continue;
      for (auto& inbox : pull) inbox.push_back(*reply);
    }
  }
  return pull;
}

TransportOptions ParseTransport(const std::string& spec) {
  TransportOptions opts;
  if (spec == "inproc" || spec.empty()) return opts;
  if (spec.rfind("tcp", 0) != 0 || (spec.size() > 3 && spec[3] != ':')) {
    throw Error(ErrorCode::kConfig, "transport must be inproc or tcp[:host[:port]]");
  }
  opts.kind = TransportKind::kTcp;
  if (spec.size() <= 4) return opts;
  const std::string rest = spec.substr(4);
  const std::size_t colon = rest.rfind(':');
  if (colon == std::string::npos) {
    opts.host = rest;
    return opts;
  }
  if (colon > 0) opts.host = rest.substr(0, colon);
  const std::string port = rest.substr(colon + 1);
  try {
    std::size_t used = 0;
    const unsigned long v = std::stoul(port, &used);
    if (used != port.size() || v > 65535) throw std::out_of_range("port");
    opts.base_port = static_cast<std::uint16_t>(v);
  } catch (const std::exception&) {
    throw Error(ErrorCode::kConfig, "bad port '" + port + "'");
  }
  return opts;
}

Cluster::Cluster(AggregationConfig cfg, std::vector<TensorSpec> tensors,
                 std::uint64_t seed, const TransportOptions& transport)
    : cfg_(std::move(cfg)), tensors_(std::move(tensors)), base_(seed) {
  cfg_.Validate();
  if (tensors_.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "cluster needs at least one tensor");
  }
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].size == 0) {
      throw Error(ErrorCode::kEmptyVector, "tensor of size 0");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (tensors_[j].id == tensors_[i].id) {
        throw Error(ErrorCode::kInvalidArgument,
                    "duplicate tensor id " + std::to_string(tensors_[i].id));
      }
    }
    routes_.push_back(RouteTensor(cfg_, tensors_[i].size));
  }
  plan_ = PlanShards(cfg_, tensors_);
  if (cfg_.mode == AggregationMode::kCompressed && IsBiased(cfg_.compressor.tag)) {
    LogWarning("BiasedKindWithoutEF: " + cfg_.compressor.ToString() +
               " without error feedback");
  }
  if (cfg_.mode == AggregationMode::kCompressedEf && IsUnbiased(cfg_.compressor.tag)) {
    LogWarning("UnbiasedKindWithEF: " + cfg_.compressor.ToString() +
               " is unbiased; error feedback is not needed");
  }
  for (std::uint32_t w = 0; w < cfg_.n_workers; ++w) workers_.emplace_back(w);
  for (std::uint32_t s = 0; s < cfg_.shard_count; ++s) {
    shards_.emplace_back(s, cfg_.n_workers);
  }
  if (transport.kind == TransportKind::kTcp) {
    transport_ = std::make_unique<TcpTransport>(cfg_, base_, shards_, transport);
  } else {
    transport_ = std::make_unique<InProcessTransport>(cfg_, base_, shards_);
  }
}

Cluster::~Cluster() = default;

RoundResult Cluster::RunRound(
    std::uint64_t iteration,
    const std::vector<std::vector<GradientVector>>& gradients) {
  const std::size_t n = cfg_.n_workers;
  const std::size_t nt = tensors_.size();
  if (gradients.size() != n) {
    throw Error(ErrorCode::kWorkerCountMismatch,
                "round has " + std::to_string(gradients.size()) +
                    " workers, cluster " + std::to_string(n));
  }
  RoundResult result;
  result.bytes_push.assign(n, 0);
  result.bytes_pull.assign(n, 0);
  result.tensors.resize(nt);
  for (std::size_t t = 0; t < nt; ++t) {
    result.tensors[t].tensor_id = tensors_[t].id;
    result.tensors[t].shard = plan_[t];
    result.tensors[t].route = routes_[t];
  }

  std::vector<std::vector<OutgoingFrame>> push(n);
  for (std::size_t w = 0; w < n; ++w) {
    if (gradients[w].size() != nt) {
      throw Error(ErrorCode::kLengthMismatch,
                  "worker " + std::to_string(w) + " sent " +
                      std::to_string(gradients[w].size()) + " tensors, expected " +
                      std::to_string(nt));
    }
    for (std::size_t t = 0; t < nt; ++t) {
      const GradientVector& g = gradients[w][t];
      if (g.size() != tensors_[t].size) {
        throw Error(ErrorCode::kLengthMismatch,
                    "tensor " + std::to_string(tensors_[t].id) + " has " +
                        std::to_string(g.size()) + " entries, expected " +
                        std::to_string(tensors_[t].size));
      }
      PushOutcome out = workers_[w].Push(routes_[t], tensors_[t].id, g, base_,
                                         iteration);
      auto& stats = result.tensors[t];
      if (out.delta) {
        stats.min_delta = std::min(stats.min_delta.value_or(1.0), *out.delta);
      }
      OutgoingFrame f{plan_[t], EncodeFrame(out.message, tensors_[t].id)};
      result.bytes_push[w] += f.bytes.size();
      push[w].push_back(std::move(f));
    }
  }

  const auto pull = transport_->Exchange(iteration, push);

  std::vector<std::optional<GradientVector>> first(nt);
  for (std::size_t w = 0; w < n; ++w) {
    std::vector<bool> seen(nt, false);
    for (const auto& frame : pull.at(w)) {
      result.bytes_pull[w] += frame.size();
      DecodedFrame decoded = DecodeFrame(frame);
      std::size_t t = 0;
      while (t < nt && tensors_[t].id != decoded.tensor_id) ++t;
      if (t == nt || seen[t]) {
        throw Error(ErrorCode::kTransport,
                    "unexpected pull frame for tensor " +
                        std::to_string(decoded.tensor_id));
      }
      seen[t] = true;
      GradientVector v = workers_[w].Pull(decoded.message);
      if (!first[t]) {
        first[t] = std::move(v);
      } else if (!first[t]->BitEqual(v)) {
        result.workers_agree = false;
      }
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
      throw Error(ErrorCode::kTransport,
                  "worker " + std::to_string(w) + " is missing pull frames");
    }
  }

  for (std::size_t t = 0; t < nt; ++t) {
    result.outputs.push_back(std::move(*first[t]));
    auto& stats = result.tensors[t];
    for (const WorkerState& ws : workers_) {
      if (ws.HasResidual(stats.tensor_id)) {
        stats.max_worker_residual = std::max(
            stats.max_worker_residual,
            L2Norm(ws.Residual(stats.tensor_id, tensors_[t].size)));
      }
    }
    const ServerShardState& shard = shards_[plan_[t]];
    std::lock_guard<std::mutex> lock(shard.mutex());
    stats.server_residual = L2Norm(shard.Residual(stats.tensor_id, tensors_[t].size));
    if (!stats.route.bypassed && stats.route.mode != AggregationMode::kFullPrecision) {
      if (auto d = shard.LastDelta(stats.tensor_id)) {
        stats.min_delta = std::min(stats.min_delta.value_or(1.0), *d);
      }
    }
  }
  return result;
}

}  // namespace gradcomp

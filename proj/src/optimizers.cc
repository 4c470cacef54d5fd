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

#include "gradcomp/optimizers.h"

#include <algorithm>
#include <cmath>
#include <string>

namespace gradcomp {

namespace {

void CheckRange(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::kInvalidArgument, what);
}

void CheckFinite(double v, const char* what, std::size_t j) {
  if (!std::isfinite(v)) {
    throw Error(ErrorCode::kNonFiniteUpdate,
                std::string(what) + " is non-finite at index " + std::to_string(j));
  }
}

}  // namespace

double LrSchedule::At(std::uint64_t t) const {
  if (!values.empty()) {
    return values[std::min<std::uint64_t>(t == 0 ? 0 : t - 1, values.size() - 1)];
  }
  double lr = base;
  if (warmup_steps > 0 && t < warmup_steps) {
    lr *= static_cast<double>(t) / static_cast<double>(warmup_steps);
  }
  if (decay == LrDecay::kInverseSqrt && t > warmup_steps) {
    lr /= std::sqrt(static_cast<double>(t - warmup_steps));
  }
  return lr;
}

void LrSchedule::Validate() const {
  for (double v : values) CheckRange(v > 0 && std::isfinite(v), "learning rates must be positive");
  if (values.empty()) {
    CheckRange(base > 0 && std::isfinite(base), "learning rate must be positive");
  }
}

void LansConfig::Validate() const {
  CheckRange(beta1 > 0 && beta1 < 1, "beta1 must lie in (0, 1)");
  CheckRange(beta2 > 0 && beta2 < 1, "beta2 must lie in (0, 1)");
  CheckRange(eps > 0, "eps must be positive");
  CheckRange(weight_decay >= 0, "weight decay must be >= 0");
  CheckRange(alpha_l > 0 && alpha_l <= alpha_u, "need 0 < alpha_l <= alpha_u");
  lr.Validate();
}

BlockPartition LansConfig::PartitionFor(std::size_t d) const {
  if (!partition) return MakePartition(d, {d});
  if (partition->dimension() != d) {
    throw Error(ErrorCode::kLengthMismatch,
                "partition covers " + std::to_string(partition->dimension()) +
                    " entries, parameters have " + std::to_string(d));
  }
  return *partition;
}

double Phi(const LansConfig& cfg, double z) {
  return std::clamp(z, cfg.alpha_l, cfg.alpha_u);
}

LansState LansState::Fresh(std::size_t d) {
  LansState s;
  s.m.assign(d, 0.0);
  s.v.assign(d, 0.0);
  return s;
}

bool LansStepInfo::WithinBounds() const {
  for (std::size_t b = 0; b < update_norms.size(); ++b) {
    if (update_norms[b] > update_bounds[b]) return false;
  }
  return true;
}

GradientVector LansStep(const LansConfig& cfg, LansState& state,
                        const GradientVector& x, const GradientVector& g,
                        LansStepInfo* info) {
  const std::size_t d = x.size();
  if (g.size() != d || state.m.size() != d || state.v.size() != d) {
    throw Error(ErrorCode::kLengthMismatch,
                "LANS step with x, g, m, v of lengths " + std::to_string(d) + ", " +
                    std::to_string(g.size()) + ", " + std::to_string(state.m.size()) +
                    ", " + std::to_string(state.v.size()));
  }
  const BlockPartition part = cfg.PartitionFor(d);
  const double b1 = cfg.beta1;
  const double b2 = cfg.beta2;
  const double lambda = cfg.weight_decay;
  const double t = static_cast<double>(state.t);
  const double corr1 = 1.0 - std::pow(b1, t);
  const double corr2 = 1.0 - std::pow(b2, t);
  const double lr = cfg.lr.At(state.t);

  std::vector<double> m(d), v(d), m_hat(d), v_hat(d), r(d), c(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double gj = g[j];
    m[j] = b1 * state.m[j] + (1.0 - b1) * gj;
    v[j] = b2 * state.v[j] + (1.0 - b2) * gj * gj;
    m_hat[j] = m[j] / corr1;
    v_hat[j] = v[j] / corr2;
    const double den = std::sqrt(v_hat[j]) + cfg.eps;
    r[j] = m_hat[j] / den + lambda * x[j];
    c[j] = gj / den + lambda * x[j];
    CheckFinite(m_hat[j], "first moment", j);
    CheckFinite(v_hat[j], "second moment", j);
    CheckFinite(r[j], "ratio r", j);
    CheckFinite(c[j], "ratio c", j);
  }

  std::vector<float> out(x.values().begin(), x.values().end());
  LansStepInfo local;
  local.lr = lr;
  for (const Block& blk : part.blocks()) {
    double nr = 0.0, nc = 0.0, nx = 0.0;
    for (std::size_t j = blk.offset; j < blk.end(); ++j) {
      nr += r[j] * r[j];
      nc += c[j] * c[j];
      nx += static_cast<double>(x[j]) * x[j];
    }
    nr = std::sqrt(nr);
    nc = std::sqrt(nc);
    const double phi = Phi(cfg, std::sqrt(nx));
    // A zero numerator gives a zero normalized term.
    const double wr = nr > 0 ? phi * b1 / nr : 0.0;
    const double wc = nc > 0 ? phi * (1.0 - b1) / nc : 0.0;
    double step_sq = 0.0, next_sq = 0.0;
    for (std::size_t j = blk.offset; j < blk.end(); ++j) {
      const double dj = wr * r[j] + wc * c[j];
      const double next = static_cast<double>(x[j]) - lr * dj;
      out[j] = static_cast<float>(next);
      CheckFinite(out[j], "updated parameter", j);
      const double moved = static_cast<double>(out[j]) - x[j];
      step_sq += moved * moved;
      next_sq += static_cast<double>(out[j]) * out[j];
    }
    local.phi.push_back(phi);
    local.update_norms.push_back(std::sqrt(step_sq));
    local.update_bounds.push_back(lr * cfg.alpha_u * (1.0 + 1e-9) +
                                  std::ldexp(std::sqrt(next_sq), -24));
  }

  GradientVector next(std::move(out));
  state.m = std::move(m);
  state.v = std::move(v);
  ++state.t;
  if (info) {
    local.m_hat = std::move(m_hat);
    local.v_hat = std::move(v_hat);
    *info = std::move(local);
  }
  return next;
}

AggregationMode DefaultModeFor(const CompressorKind& kind) {
  if (kind.tag == CompressorTag::kNone) return AggregationMode::kFullPrecision;
  if (IsBiased(kind.tag)) return AggregationMode::kCompressedEf;
  return AggregationMode::kCompressed;
}

std::vector<TensorSpec> BlockTensors(const BlockPartition& partition) {
  std::vector<TensorSpec> out;
  for (std::size_t b = 0; b < partition.block_count(); ++b) {
    out.push_back({static_cast<std::uint32_t>(b), partition.block(b).size});
  }
  return out;
}

GradientVector AggregateFlat(Cluster& cluster, const BlockPartition& partition,
                             std::uint64_t iteration,
                             std::span<const GradientVector> worker_grads,
                             RoundResult* round) {
  const auto& tensors = cluster.tensors();
  if (tensors.size() != partition.block_count()) {
    throw Error(ErrorCode::kSizeMismatch, "cluster tensors do not match the partition");
  }
  for (std::size_t b = 0; b < tensors.size(); ++b) {
    if (tensors[b].id != b || tensors[b].size != partition.block(b).size) {
      throw Error(ErrorCode::kSizeMismatch, "cluster tensors do not match the partition");
    }
  }
  std::vector<std::vector<GradientVector>> grads;
  grads.reserve(worker_grads.size());
  for (const GradientVector& g : worker_grads) {
    std::vector<GradientVector> parts;
    for (std::size_t b = 0; b < partition.block_count(); ++b) {
      parts.push_back(partition.Slice(g, b));
    }
    grads.push_back(std::move(parts));
  }
  RoundResult result = cluster.RunRound(iteration, grads);
  if (!result.workers_agree) {
    throw Error(ErrorCode::kInvalidArgument, "workers decoded different aggregates");
  }
  GradientVector out = partition.Concat(result.outputs);
  if (round) *round = std::move(result);
  return out;
}

GradientVector ClanIteration(const LansConfig& cfg, std::span<LansState> states,
                             std::span<GradientVector> params, Cluster& cluster,
                             std::uint64_t iteration,
                             std::span<const GradientVector> worker_grads,
                             RoundResult* round, LansStepInfo* info) {
  if (states.size() != params.size() || params.size() != worker_grads.size()) {
    throw Error(ErrorCode::kWorkerCountMismatch,
                "replica states, parameters and gradients differ in count");
  }
  const BlockPartition part = cfg.PartitionFor(params[0].size());
  const GradientVector g = AggregateFlat(cluster, part, iteration, worker_grads, round);
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i] = LansStep(cfg, states[i], params[i], g, i == 0 ? info : nullptr);
  }
  for (std::size_t i = 1; i < params.size(); ++i) {
    if (!params[i].BitEqual(params[0])) {
      throw Error(ErrorCode::kInvalidArgument,
                  "replica " + std::to_string(i) + " diverged from replica 0");
    }
  }
  return params[0];
}

void NagConfig::Validate() const {
  CheckRange(momentum >= 0 && momentum < 1, "momentum must lie in [0, 1)");
  lr.Validate();
}

NagState NagState::Fresh(std::size_t d) {
  NagState s;
  s.velocity.assign(d, 0.0);
  return s;
}

GradientVector NagStep(const NagConfig& cfg, NagState& state,
                       const GradientVector& x, const GradientVector& g) {
  const std::size_t d = x.size();
  if (g.size() != d || state.velocity.size() != d) {
    throw Error(ErrorCode::kLengthMismatch, "NAG step with mismatched lengths");
  }
  const double lr = cfg.lr.At(state.t);
  const double mu = cfg.momentum;
  std::vector<double> vel(d);
  std::vector<double> next(d);
  for (std::size_t j = 0; j < d; ++j) {
    vel[j] = mu * state.velocity[j] + g[j];
    next[j] = static_cast<double>(x[j]) - lr * (g[j] + mu * vel[j]);
    CheckFinite(next[j], "updated parameter", j);
  }
  GradientVector out = GradientVector::FromDoubles(next);
  state.velocity = std::move(vel);
  ++state.t;
  return out;
}

}  // namespace gradcomp

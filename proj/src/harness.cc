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

#include "gradcomp/harness.h"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "gradcomp/rng.h"
#include "parallel.h"

namespace gradcomp {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double SquaredNorm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

std::string Num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double MsSince(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                   start)
      .count();
}

struct TensorTrack {
  std::size_t d = 0;
  double max_worker = 0.0;
  double max_server = 0.0;
  std::optional<double> min_delta;
};

}  // namespace

std::string OptimizerKindName(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::kLans:
      return "lans";
    case OptimizerKind::kClan:
      return "clan";
    case OptimizerKind::kNag:
      return "nag";
    case OptimizerKind::kNagEf:
      return "nag_ef";
  }
  return "unknown";
}

OptimizerKind ParseOptimizerKind(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (s == "lans") return OptimizerKind::kLans;
  if (s == "clan") return OptimizerKind::kClan;
  if (s == "nag") return OptimizerKind::kNag;
  if (s == "nag_ef" || s == "nag+ef") return OptimizerKind::kNagEf;
  throw Error(ErrorCode::kInvalidArgument, "unknown optimizer '" + name + "'");
}

void RunConfig::Validate() const {
  problem.Validate();
  aggregation.Validate();
  if (batch == 0) throw Error(ErrorCode::kInvalidArgument, "batch must be >= 1");
  const bool full = aggregation.mode == AggregationMode::kFullPrecision;
  if ((optimizer == OptimizerKind::kLans || optimizer == OptimizerKind::kNag) && !full) {
    throw Error(ErrorCode::kInvalidArgument,
                OptimizerKindName(optimizer) + " aggregates in full precision; use " +
                    (optimizer == OptimizerKind::kLans ? "clan" : "nag_ef") +
                    " for compression");
  }
  if (optimizer == OptimizerKind::kNagEf &&
      aggregation.mode != AggregationMode::kCompressedEf) {
    throw Error(ErrorCode::kInvalidArgument, "nag_ef needs mode compressed_ef");
  }
  if (aggregation.local_devices > 1 && batch % aggregation.local_devices != 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "batch must be divisible by local_devices");
  }
  if (problem.kind == ProblemKind::kLogistic &&
      batch * aggregation.n_workers > problem.samples) {
    throw Error(ErrorCode::kInvalidArgument,
                "one step needs n * batch <= dataset size");
  }
  if (optimizer == OptimizerKind::kLans || optimizer == OptimizerKind::kClan) {
    lans.Validate();
  } else {
    nag.Validate();
  }
}

BatchSampler::BatchSampler(std::size_t dataset_size, std::uint32_t workers,
                           std::size_t batch, std::uint64_t seed)
    : n_(dataset_size), workers_(workers), batch_(batch), seed_(seed) {
  if (workers == 0 || batch == 0) {
    throw Error(ErrorCode::kInvalidArgument, "sampler needs workers and batch >= 1");
  }
  if (n_ > 0 && n_ < workers_ * batch_) {
    throw Error(ErrorCode::kInvalidArgument, "dataset smaller than one step");
  }
}

const std::vector<std::uint64_t>& BatchSampler::Permutation(std::uint64_t epoch) {
  if (epoch != cached_epoch_) {
    perm_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) perm_[i] = i;
    DeterministicRng rng(seed_, {0, epoch, 0, StreamStage::kData});
    for (std::size_t i = n_; i > 1; --i) {
      std::swap(perm_[i - 1], perm_[rng.NextBelow(i)]);
    }
    cached_epoch_ = epoch;
  }
  return perm_;
}

std::vector<std::uint64_t> BatchSampler::Worker(std::uint64_t step,
                                                std::uint32_t worker) {
  if (step == 0) throw Error(ErrorCode::kInvalidArgument, "steps are 1-based");
  const std::uint64_t per_step = std::uint64_t{workers_} * batch_;
  std::vector<std::uint64_t> out(batch_);
  if (n_ == 0) {
    const std::uint64_t base = (step - 1) * per_step + std::uint64_t{worker} * batch_;
    for (std::size_t k = 0; k < batch_; ++k) out[k] = base + k;
    return out;
  }
  const std::uint64_t steps_per_epoch = n_ / per_step;
  const std::uint64_t epoch = (step - 1) / steps_per_epoch;
  const std::uint64_t off =
      ((step - 1) % steps_per_epoch) * per_step + std::uint64_t{worker} * batch_;
  const auto& perm = Permutation(epoch);
  for (std::size_t k = 0; k < batch_; ++k) out[k] = perm[off + k];
  return out;
}

std::vector<std::uint64_t> BatchSampler::Step(std::uint64_t step) {
  std::vector<std::uint64_t> out;
  for (std::uint32_t w = 0; w < workers_; ++w) {
    const auto ids = Worker(step, w);
    out.insert(out.end(), ids.begin(), ids.end());
  }
  return out;
}

RunResult RunExperiment(const RunConfig& cfg, const StepObserver& observer) {
  cfg.Validate();
  const auto problem = MakeProblem(cfg.problem, cfg.seed);
  const std::size_t d = problem->dimension();
  const BlockPartition partition = MakePartition(d, problem->block_sizes());
  const std::uint32_t n = cfg.aggregation.n_workers;
  const bool lans_family =
      cfg.optimizer == OptimizerKind::kLans || cfg.optimizer == OptimizerKind::kClan;

  LansConfig lans = cfg.lans;
  lans.partition = partition;
  Cluster cluster(cfg.aggregation, BlockTensors(partition), cfg.seed, cfg.transport);
  BatchSampler sampler(problem->sample_count(), n, cfg.batch, cfg.seed);

  std::vector<GradientVector> params(n, GradientVector::FromDoubles(problem->InitialPoint()));
  std::vector<LansState> lans_states(lans_family ? n : 0, LansState::Fresh(d));
  std::vector<NagState> nag_states(lans_family ? 0 : n, NagState::Fresh(d));

  std::optional<MomentGapMonitor> monitor;
  const std::vector<double> lipschitz = problem->Lipschitz();
  if (lans_family && problem->exact_gradient_available() && !lipschitz.empty()) {
    monitor.emplace(lans.beta1, lans.alpha_u, lipschitz);
  }
  const bool track_residuals =
      cfg.aggregation.mode == AggregationMode::kCompressedEf &&
      IsBiased(cfg.aggregation.compressor.tag);
  std::vector<TensorTrack> tracks(partition.block_count());
  for (std::size_t b = 0; b < tracks.size(); ++b) tracks[b].d = partition.block(b).size;

  RunResult result;
  RunSummary& sum = result.summary;
  sum.steps = cfg.steps;
  {
    const std::vector<double> x0 = params[0].ToDoubles();
    sum.initial_loss = problem->Loss(x0);
  }
  double grad_sq_total = 0.0;

  for (std::uint64_t t = 1; t <= cfg.steps; ++t) {
    const std::vector<double> x = params[0].ToDoubles();
    MetricsRecord rec;
    rec.step = t;
    rec.loss = problem->Loss(x);
    std::vector<double> grad;
    if (problem->exact_gradient_available()) {
      grad = problem->Gradient(x);
      rec.grad_sq_norm = SquaredNorm(grad);
    } else {
      rec.grad_sq_norm = kNaN;
    }
    grad_sq_total += rec.grad_sq_norm;

    auto start = std::chrono::steady_clock::now();
    std::vector<std::optional<GradientVector>> slots(n);
    std::vector<std::vector<std::uint64_t>> ids(n);
    for (std::uint32_t w = 0; w < n; ++w) ids[w] = sampler.Worker(t, w);
    const std::uint32_t m = cfg.aggregation.local_devices;
    detail::ParallelFor(n, cfg.threads, [&](std::size_t w) {
      if (m <= 1) {
        slots[w] = GradientVector::FromDoubles(problem->BatchGradient(x, ids[w]));
        return;
      }
      const std::size_t per = cfg.batch / m;
      std::vector<GradientVector> devices;
      for (std::uint32_t k = 0; k < m; ++k) {
        std::span<const std::uint64_t> part(ids[w].data() + k * per, per);
        devices.push_back(GradientVector::FromDoubles(problem->BatchGradient(x, part)));
      }
      slots[w] = IntraNodeReduce(devices);
    });
    std::vector<GradientVector> worker_grads;
    for (auto& s : slots) {
      for (float v : s->values()) {
        sum.observed_g = std::max(sum.observed_g, static_cast<double>(std::fabs(v)));
      }
      worker_grads.push_back(std::move(*s));
    }
    if (cfg.record_timings) rec.phase_ms_compute = MsSince(start);

    start = std::chrono::steady_clock::now();
    RoundResult round;
    const GradientVector g = AggregateFlat(cluster, partition, t, worker_grads, &round);
    if (cfg.record_timings) rec.phase_ms_comm = MsSince(start);

    start = std::chrono::steady_clock::now();
    if (lans_family) {
      LansStepInfo info;
      for (std::uint32_t i = 0; i < n; ++i) {
        params[i] = LansStep(lans, lans_states[i], params[i], g, i == 0 ? &info : nullptr);
      }
      if (!info.WithinBounds()) ++sum.update_bound_violations;
      if (monitor) monitor->Observe(info.m_hat, g.values(), grad, info.lr);
    } else {
      for (std::uint32_t i = 0; i < n; ++i) {
        params[i] = NagStep(cfg.nag, nag_states[i], params[i], g);
      }
    }
    for (std::uint32_t i = 1; i < n; ++i) {
      if (!params[i].BitEqual(params[0])) {
        throw Error(ErrorCode::kInvalidArgument, "worker replicas diverged");
      }
    }
    if (cfg.record_timings) rec.phase_ms_compute += MsSince(start);

    for (std::uint32_t w = 0; w < n; ++w) {
      rec.bytes_push += round.bytes_push[w];
      rec.bytes_pull += round.bytes_pull[w];
    }
    for (std::size_t b = 0; b < round.tensors.size(); ++b) {
      const TensorRoundStats& ts = round.tensors[b];
      rec.max_worker_residual = std::max(rec.max_worker_residual, ts.max_worker_residual);
      rec.server_residual = std::max(rec.server_residual, ts.server_residual);
      TensorTrack& tr = tracks[b];
      tr.max_worker = std::max(tr.max_worker, ts.max_worker_residual);
      tr.max_server = std::max(tr.max_server, ts.server_residual);
      if (ts.min_delta) tr.min_delta = std::min(tr.min_delta.value_or(1.0), *ts.min_delta);
    }
    sum.total_bytes_push += rec.bytes_push;
    sum.total_bytes_pull += rec.bytes_pull;
    sum.max_worker_residual = std::max(sum.max_worker_residual, rec.max_worker_residual);
    sum.max_server_residual = std::max(sum.max_server_residual, rec.server_residual);
    result.records.push_back(rec);

    if (observer) {
      StepView view;
      view.step = t;
      view.x = &x;
      view.g_tilde = &g;
      view.worker_grads = &worker_grads;
      view.round = &round;
      observer(view);
    }
  }

  result.final_params = params[0].ToDoubles();
  sum.final_loss = problem->Loss(result.final_params);
  sum.final_grad_sq_norm = problem->exact_gradient_available()
                               ? SquaredNorm(problem->Gradient(result.final_params))
                               : kNaN;
  sum.avg_grad_sq_norm =
      cfg.steps == 0 ? kNaN : grad_sq_total / static_cast<double>(cfg.steps);
  if (monitor) {
    sum.moment_gap_checks = monitor->checks();
    sum.moment_gap_violations = monitor->violations();
    sum.moment_gap_worst_margin = monitor->worst_margin();
  }
  if (track_residuals) {
    for (const TensorTrack& tr : tracks) {
      if (!tr.min_delta) continue;
      sum.min_delta = std::min(sum.min_delta.value_or(1.0), *tr.min_delta);
      const EfResidualBounds b = LemmaEfResidualBound(*tr.min_delta, tr.d, sum.observed_g);
      sum.worker_residual_bound = std::max(sum.worker_residual_bound, b.worker);
      sum.server_residual_bound = std::max(sum.server_residual_bound, b.server);
      if (tr.max_worker > b.worker) ++sum.residual_violations;
      if (tr.max_server > b.server) ++sum.residual_violations;
    }
  }
  return result;
}

std::string MetricsCsvHeader() {
  return "step,loss,grad_sq_norm,bytes_push,bytes_pull,max_worker_residual,"
         "server_residual,phase_ms_compute,phase_ms_comm";
}

void WriteMetricsCsv(std::ostream& out, const std::vector<MetricsRecord>& records) {
  out << MetricsCsvHeader() << "\n";
  for (const MetricsRecord& r : records) {
    out << r.step << "," << Num(r.loss) << "," << Num(r.grad_sq_norm) << ","
        << r.bytes_push << "," << r.bytes_pull << "," << Num(r.max_worker_residual)
        << "," << Num(r.server_residual) << "," << Num(r.phase_ms_compute) << ","
        << Num(r.phase_ms_comm) << "\n";
  }
}

void WriteSummaryCsv(std::ostream& out, const RunSummary& s) {
  out << "steps,initial_loss,final_loss,final_grad_sq_norm,avg_grad_sq_norm,"
         "observed_g,total_bytes_push,total_bytes_pull,max_worker_residual,"
         "max_server_residual,min_delta,worker_residual_bound,"
         "server_residual_bound,residual_violations,moment_gap_checks,"
         "moment_gap_violations,update_bound_violations\n";
  out << s.steps << "," << Num(s.initial_loss) << "," << Num(s.final_loss) << ","
      << Num(s.final_grad_sq_norm) << "," << Num(s.avg_grad_sq_norm) << ","
      << Num(s.observed_g) << "," << s.total_bytes_push << "," << s.total_bytes_pull
      << "," << Num(s.max_worker_residual) << "," << Num(s.max_server_residual) << ","
      << (s.min_delta ? Num(*s.min_delta) : std::string("nan")) << ","
      << Num(s.worker_residual_bound) << "," << Num(s.server_residual_bound) << ","
      << s.residual_violations << "," << s.moment_gap_checks << ","
      << s.moment_gap_violations << "," << s.update_bound_violations << "\n";
}

}  // namespace gradcomp

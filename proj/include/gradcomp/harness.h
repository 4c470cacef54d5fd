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

#ifndef GRADCOMP_HARNESS_H_
#define GRADCOMP_HARNESS_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "gradcomp/analysis.h"
#include "gradcomp/optimizers.h"
#include "gradcomp/problems.h"
#include "gradcomp/protocol.h"

namespace gradcomp {

enum class OptimizerKind { kLans, kClan, kNag, kNagEf };

std::string OptimizerKindName(OptimizerKind kind);
OptimizerKind ParseOptimizerKind(const std::string& name);

/*!
 * \brief Everything one training run depends on.
 *
 * LANS and NAG aggregate in full precision; CLAN uses the configured
 * aggregation mode; NAG_EF requires compressed_ef. aggregation.n_workers is
 * the worker count.
 */
struct RunConfig {
  ProblemConfig problem;
  OptimizerKind optimizer = OptimizerKind::kLans;
  LansConfig lans;
  NagConfig nag;
  AggregationConfig aggregation;
  std::size_t batch = 64;  // per worker
  std::uint64_t steps = 100;
  std::uint64_t seed = 0;
  TransportOptions transport;
  // Wall-clock phase timings; off keeps metric files reproducible.
  bool record_timings = false;
  // Threads for per-worker gradient computation.
  unsigned threads = 1;

  void Validate() const;
};

struct MetricsRecord {
  std::uint64_t step = 0;
  double loss = 0.0;           // F(x_t), before the update
  double grad_sq_norm = 0.0;   // ||grad F(x_t)||^2, NaN without an oracle
  std::uint64_t bytes_push = 0;  // all workers, this step
  std::uint64_t bytes_pull = 0;
  double max_worker_residual = 0.0;  // max over tensors and workers
  double server_residual = 0.0;      // max over tensors
  double phase_ms_compute = 0.0;
  double phase_ms_comm = 0.0;
};

struct RunSummary {
  std::uint64_t steps = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;      // F(x_{T+1})
  double final_grad_sq_norm = 0.0;
  double avg_grad_sq_norm = 0.0;  // mean over t = 1..T, NaN for T = 0
  double observed_g = 0.0;        // max |g_j| over all worker gradients
  std::uint64_t total_bytes_push = 0;
  std::uint64_t total_bytes_pull = 0;
  double max_worker_residual = 0.0;
  double max_server_residual = 0.0;
  // Residual-bound monitor (error-feedback runs with a biased kind).
  std::optional<double> min_delta;
  double worker_residual_bound = 0.0;
  double server_residual_bound = 0.0;
  std::uint64_t residual_violations = 0;
  // Moment-gap monitor (LANS/CLAN on problems with Lipschitz constants).
  std::uint64_t moment_gap_checks = 0;
  std::uint64_t moment_gap_violations = 0;
  double moment_gap_worst_margin = 0.0;
  std::uint64_t update_bound_violations = 0;
};

struct StepView {
  std::uint64_t step = 0;
  const std::vector<double>* x = nullptr;  // x_t
  const GradientVector* g_tilde = nullptr;
  const std::vector<GradientVector>* worker_grads = nullptr;
  const RoundResult* round = nullptr;
};

using StepObserver = std::function<void(const StepView&)>;

struct RunResult {
  std::vector<MetricsRecord> records;
  RunSummary summary;
  std::vector<double> final_params;
};

RunResult RunExperiment(const RunConfig& cfg, const StepObserver& observer = {});

/*!
 * \brief Sample ids of worker `worker` at step t (1-based).
 *
 * Finite datasets are shuffled once per epoch; each step takes the next
 * n * s positions and worker i the i-th slice of s. An epoch holds
 * floor(N / (n s)) steps, so one step never mixes two epochs. Unbounded
 * streams hand out consecutive fresh ids.
 */
class BatchSampler {
 public:
  BatchSampler(std::size_t dataset_size, std::uint32_t workers, std::size_t batch,
               std::uint64_t seed);
  std::vector<std::uint64_t> Worker(std::uint64_t step, std::uint32_t worker);
  std::vector<std::uint64_t> Step(std::uint64_t step);

 private:
  const std::vector<std::uint64_t>& Permutation(std::uint64_t epoch);

  std::size_t n_;
  std::uint32_t workers_;
  std::size_t batch_;
  std::uint64_t seed_;
  std::uint64_t cached_epoch_ = ~std::uint64_t{0};
  std::vector<std::uint64_t> perm_;
};

std::string MetricsCsvHeader();
void WriteMetricsCsv(std::ostream& out, const std::vector<MetricsRecord>& records);
void WriteSummaryCsv(std::ostream& out, const RunSummary& summary);

}  // namespace gradcomp

#endif  // GRADCOMP_HARNESS_H_

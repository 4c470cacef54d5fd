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

#include "gradcomp/verify.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>

#include "gradcomp/analysis.h"
#include "gradcomp/compressors.h"
#include "gradcomp/harness.h"
#include "gradcomp/protocol.h"
#include "gradcomp/wire.h"

namespace gradcomp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

class Tally {
 public:
  explicit Tally(std::string name) { r_.name = std::move(name); r_.worst_margin = kInf; }
  // margin >= 0 passes.
  void Check(double margin) {
    ++r_.checks;
    if (!(margin >= 0)) ++r_.violations;
    if (std::isnan(margin)) margin = -kInf;
    r_.worst_margin = std::min(r_.worst_margin, margin);
  }
  void Pass() { Check(0.0); }
  // Folds in the counts of a monitor that tracked its own margin.
  void Bulk(std::uint64_t checks, std::uint64_t violations, double margin) {
    r_.checks += checks;
    r_.violations += violations;
    if (checks > 0) r_.worst_margin = std::min(r_.worst_margin, margin);
  }
  void Fail() { Check(-1.0); }
  void Note(std::string n) { r_.note = std::move(n); }
  InvariantResult Done() {
    if (r_.checks == 0) r_.worst_margin = 0.0;
    return r_;
  }

 private:
  InvariantResult r_;
};

// Mixed-shape random vectors: dense Gaussian, sparse, heavy-tailed, constant.
GradientVector RandomVector(DeterministicRng& rng, std::size_t d) {
  std::vector<float> v(d);
  const auto shape = rng.NextBelow(4);
  for (std::size_t j = 0; j < d; ++j) {
    double x = rng.NextGaussian();
    if (shape == 1 && rng.NextUniform() < 0.7) x = 0.0;
    if (shape == 2) x = x * x * x * 10.0;
    if (shape == 3) x = 0.5;
    v[j] = static_cast<float>(x);
  }
  v[rng.NextBelow(d)] = 1.0f;  // never all zero
  return GradientVector(std::move(v));
}

double SqDist(const GradientVector& a, const GradientVector& b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double t = static_cast<double>(a[j]) - b[j];
    s += t * t;
  }
  return s;
}

CompressorKind RandomKind(DeterministicRng& rng, std::size_t d) {
  const auto k = 1 + rng.NextBelow(d);
  const auto p = rng.NextBelow(2) ? ValuePrecision::kF16 : ValuePrecision::kF32;
  switch (rng.NextBelow(7)) {
    case 0:
      return CompressorKind::None();
    case 1:
      return CompressorKind::Fp16();
    case 2:
      return CompressorKind::ScaledSign();
    case 3:
      return CompressorKind::TopK(k, p);
    case 4:
      return CompressorKind::RandomK(k, p);
    case 5:
      return CompressorKind::LinearDither(2 + static_cast<int>(rng.NextBelow(7)));
    default:
      return CompressorKind::NaturalDither(2 + static_cast<int>(rng.NextBelow(7)));
  }
}

// Leaves values in half range so FP16 kinds stay finite.
GradientVector Tame(const GradientVector& x) {
  std::vector<float> v(x.values().begin(), x.values().end());
  for (float& f : v) f = std::clamp(f, -1000.0f, 1000.0f);
  return GradientVector(std::move(v));
}

InvariantResult DeltaApproximate(const VerifyOptions& opts) {
  Tally t("compressors.delta_approximate");
  DeterministicRng rng(opts.seed, {0, 0, 0, StreamStage::kTrial});
  const std::size_t dims[] = {1, 7, 100, 4096};
  for (int i = 0; i < 2000; ++i) {
    const std::size_t d = dims[i % 4];
    const GradientVector x = RandomVector(rng, d);
    const double sq = SquaredL2Norm(x.values());
    for (int which = 0; which < 2; ++which) {
      const CompressorKind kind = which == 0
                                      ? CompressorKind::ScaledSign()
                                      : CompressorKind::TopK(1 + rng.NextBelow(d));
      const double delta = DeltaLowerBound(kind, x) + opts.delta_offset;
      if (!(delta > 0 && delta <= 1)) {
        t.Fail();
        continue;
      }
      DeterministicRng unused(0);
      const GradientVector c = Decompress(Compress(kind, x, unused));
      const double limit = (1 - delta) * sq * (1 + 1e-6) + 1e-30;
      t.Check((limit - SqDist(c, x)) / sq);
    }
  }
  return t.Done();
}

InvariantResult Unbiasedness(const VerifyOptions& opts) {
  Tally t("compressors.unbiased_mean");
  const GradientVector x{0.3f, -1.2f, 0.0f, 2.5f, -0.7f, 0.05f};
  const CompressorKind kinds[] = {CompressorKind::RandomK(2), CompressorKind::LinearDither(3),
                                  CompressorKind::NaturalDither(3)};
  const std::size_t trials = 20000;
  for (const CompressorKind& kind : kinds) {
    std::vector<double> s(x.size(), 0.0), s2(x.size(), 0.0);
    DeterministicRng base(opts.seed, {0, 0, 7, StreamStage::kTrial});
    for (std::size_t k = 0; k < trials; ++k) {
      DeterministicRng rng = base.Derive({0, k, 7, StreamStage::kTrial});
      const GradientVector c = Decompress(Compress(kind, x, rng));
      for (std::size_t j = 0; j < x.size(); ++j) {
        s[j] += c[j];
        s2[j] += static_cast<double>(c[j]) * c[j];
      }
    }
    const double n = static_cast<double>(trials);
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double mean = s[j] / n;
      const double var = std::max(0.0, s2[j] / n - mean * mean);
      const double se = std::sqrt(var / n);
      const double slack = 4 * se + 1e-6 * (1 + std::fabs(x[j]));
      t.Check((slack - std::fabs(mean - x[j])) / L2Norm(x));
    }
  }
  t.Note("4 standard errors, 20000 trials");
  return t.Done();
}

InvariantResult FusedEquivalence(const VerifyOptions& opts) {
  Tally t("compressors.fused_error_update");
  DeterministicRng rng(opts.seed, {0, 0, 1, StreamStage::kTrial});
  for (int i = 0; i < 3000; ++i) {
    const std::size_t d = 1 + rng.NextBelow(300);
    const GradientVector q = RandomVector(rng, d);
    const bool topk = rng.NextBelow(2) == 0;
    const CompressorKind kind = topk ? CompressorKind::TopK(1 + rng.NextBelow(d))
                                     : CompressorKind::RandomK(d);
    DeterministicRng r = rng.Derive({0, static_cast<std::uint64_t>(i), 1, StreamStage::kTrial});
    const CompressedMessage msg = Compress(kind, q, r);
    if (FusedErrorUpdate(q, msg).BitEqual(NaiveErrorUpdate(q, msg))) {
      t.Pass();
    } else {
      t.Fail();
    }
  }
  return t.Done();
}

InvariantResult WireRoundTrip(const VerifyOptions& opts) {
  Tally t("compressors.wire_round_trip");
  DeterministicRng rng(opts.seed, {0, 0, 2, StreamStage::kTrial});
  for (int i = 0; i < 3000; ++i) {
    const std::size_t d = 1 + rng.NextBelow(200);
    const GradientVector x = Tame(RandomVector(rng, d));
    const CompressorKind kind = RandomKind(rng, d);
    DeterministicRng r = rng.Derive({0, static_cast<std::uint64_t>(i), 2, StreamStage::kTrial});
    const CompressedMessage msg = Compress(kind, x, r);
    const auto id = static_cast<std::uint32_t>(rng.NextU64());
    const auto bytes = EncodeFrame(msg, id);
    const DecodedFrame back = DecodeFrame(bytes);
    const bool ok = bytes.size() == FrameSize(kind.Resolved(d), d) &&
                    back.tensor_id == id && back.message == msg &&
                    Decompress(back.message).BitEqual(Decompress(msg));
    ok ? t.Pass() : t.Fail();
  }
  return t.Done();
}

InvariantResult ThreadInvariance(const VerifyOptions& opts) {
  Tally t("compressors.thread_invariance");
  DeterministicRng rng(opts.seed, {0, 0, 3, StreamStage::kTrial});
  const std::size_t d = (1 << 17) + 123;
  const GradientVector x = Tame(RandomVector(rng, d));
  const CompressorKind kinds[] = {
      CompressorKind::ScaledSign(), CompressorKind::TopKFraction(0.01),
      CompressorKind::RandomKFraction(0.01), CompressorKind::LinearDither(4),
      CompressorKind::NaturalDither(3), CompressorKind::Fp16()};
  for (const CompressorKind& kind : kinds) {
    DeterministicRng r1 = rng.Derive({0, 0, 3, StreamStage::kTrial});
    DeterministicRng r4 = r1;
    const CompressedMessage a = Compress(kind, x, r1, {1});
    const CompressedMessage b = Compress(kind, x, r4, {4});
    const bool ok = a == b && Decompress(a, {1}).BitEqual(Decompress(b, {4}));
    ok ? t.Pass() : t.Fail();
  }
  return t.Done();
}

std::vector<GradientVector> RandomGrads(DeterministicRng& rng, std::size_t n, std::size_t d) {
  std::vector<GradientVector> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<float> v(d);
    for (float& f : v) {
      const auto pick = rng.NextBelow(8);
      f = pick == 0 ? 0.0f : pick == 1 ? -0.0f : static_cast<float>(rng.NextGaussian());
    }
    out.emplace_back(std::move(v));
  }
  return out;
}

InvariantResult IdentityRecovery(const VerifyOptions& opts) {
  Tally t("protocol.identity_recovery");
  DeterministicRng rng(opts.seed, {0, 0, 4, StreamStage::kTrial});
  DeterministicRng base(opts.seed);
  for (std::uint32_t n : {1u, 2u, 4u, 8u}) {
    AggregationConfig plain;
    plain.n_workers = n;
    plain.mode = AggregationMode::kCompressed;
    AggregationConfig ef = plain;
    ef.mode = AggregationMode::kCompressedEf;
    std::vector<WorkerState> wa(n), wb(n);
    for (std::uint32_t i = 0; i < n; ++i) wa[i] = wb[i] = WorkerState(i);
    ServerShardState sa(0, n), sb(0, n);
    const std::size_t d = 1 + rng.NextBelow(64);
    for (std::uint64_t round = 1; round <= 250; ++round) {
      const auto grads = RandomGrads(rng, n, d);
      const GradientVector want = PushPull(grads);
      const GradientVector a = CompressPushPull(plain, wa, sa, grads, 3, base, round);
      const GradientVector b = CompressEfPushPull(ef, wb, sb, grads, 3, base, round);
      (a.BitEqual(want) && b.BitEqual(want)) ? t.Pass() : t.Fail();
    }
    // NONE is lossless, so residuals stay zero.
    for (const auto& w : wb) L2Norm(w.Residual(3, d)) == 0.0 ? t.Pass() : t.Fail();
    L2Norm(sb.Residual(3, d)) == 0.0 ? t.Pass() : t.Fail();
  }
  return t.Done();
}

// Float rounding of e = q - C(q) allows ~1 ulp of slack.
double ConservationMargin(const GradientVector& whole, const GradientVector& part,
                          const GradientVector& rest) {
  double worst = kInf;
  for (std::size_t j = 0; j < whole.size(); ++j) {
    const double scale = std::max({std::fabs(whole[j]), std::fabs(part[j]), std::fabs(rest[j])});
    const double err = std::fabs(static_cast<double>(whole[j]) -
                                 (static_cast<double>(part[j]) + rest[j]));
    worst = std::min(worst, (std::ldexp(scale, -23) - err) / std::max(scale, 1e-30));
  }
  return worst;
}

InvariantResult EfConservation(const VerifyOptions& opts) {
  Tally t("protocol.ef_conservation");
  DeterministicRng rng(opts.seed, {0, 0, 5, StreamStage::kTrial});
  DeterministicRng base(opts.seed);
  const CompressorKind kinds[] = {CompressorKind::ScaledSign(), CompressorKind::TopK(3),
                                  CompressorKind::TopK(3, ValuePrecision::kF16),
                                  CompressorKind::RandomK(4), CompressorKind::LinearDither(3)};
  const std::size_t d = 16;
  const std::uint32_t n = 3;
  for (const CompressorKind& kind : kinds) {
    AggregationConfig cfg;
    cfg.n_workers = n;
    cfg.mode = AggregationMode::kCompressedEf;
    cfg.compressor = kind;
    TensorRoute route;
    route.mode = cfg.mode;
    route.kind = kind.Resolved(d);
    std::vector<WorkerState> workers;
    for (std::uint32_t i = 0; i < n; ++i) workers.emplace_back(i);
    ServerShardState shard(0, n);
    for (std::uint64_t round = 1; round <= 50; ++round) {
      const auto grads = RandomGrads(rng, n, d);
      for (std::uint32_t i = 0; i < n; ++i) {
        const GradientVector e_old = workers[i].Residual(0, d);
        std::vector<float> q(d);
        for (std::size_t j = 0; j < d; ++j) {
          q[j] = e_old[j] != 0.0f ? grads[i][j] + e_old[j] : grads[i][j];
        }
        PushOutcome out = workers[i].Push(route, 0, grads[i], base, round);
        t.Check(ConservationMargin(GradientVector(q), Decompress(out.message),
                                   workers[i].Residual(0, d)));
        shard.Accept(i, 0, std::move(out.message), round);
      }
      const CompressedMessage p = shard.Aggregate(route, 0, base, round);
      t.Check(ConservationMargin(*shard.LastAggregate(0), Decompress(p), shard.Residual(0, d)));
    }
  }
  t.Note("ulp-level slack for the float subtraction");
  return t.Done();
}

InvariantResult WorkerSymmetryAndVolume(const VerifyOptions& opts) {
  Tally t("protocol.symmetry_and_volume");
  DeterministicRng rng(opts.seed, {0, 0, 6, StreamStage::kTrial});
  const std::vector<TensorSpec> tensors{{0, 300}, {1, 1000}, {2, 7}};
  std::optional<std::uint64_t> push, pull;
  for (std::uint32_t n : {1u, 2u, 4u, 8u}) {
    AggregationConfig cfg;
    cfg.n_workers = n;
    cfg.mode = AggregationMode::kCompressedEf;
    cfg.compressor = CompressorKind::TopKFraction(0.1);
    cfg.size_threshold_bytes = 1024;
    cfg.shard_count = 2;
    Cluster cluster(cfg, tensors, opts.seed);
    for (std::uint64_t round = 1; round <= 3; ++round) {
      std::vector<std::vector<GradientVector>> grads(n);
      for (auto& g : grads) {
        for (const auto& ts : tensors) g.push_back(RandomGrads(rng, 1, ts.size)[0]);
      }
      const RoundResult r = cluster.RunRound(round, grads);
      r.workers_agree ? t.Pass() : t.Fail();
      for (std::uint32_t w = 0; w < n; ++w) {
        if (!push) {
          push = r.bytes_push[w];
          pull = r.bytes_pull[w];
        }
        (r.bytes_push[w] == *push && r.bytes_pull[w] == *pull) ? t.Pass() : t.Fail();
      }
    }
  }
  return t.Done();
}

InvariantResult TransportEquivalence(const VerifyOptions& opts) {
  Tally t("protocol.transport_equivalence");
  DeterministicRng rng(opts.seed, {0, 0, 8, StreamStage::kTrial});
  AggregationConfig cfg;
  cfg.n_workers = 3;
  cfg.shard_count = 2;
  cfg.mode = AggregationMode::kCompressedEf;
  cfg.compressor = CompressorKind::ScaledSign();
  cfg.size_threshold_bytes = 0;
  const std::vector<TensorSpec> tensors{{0, 64}, {1, 33}, {2, 5}};
  TransportOptions tcp;
  tcp.kind = TransportKind::kTcp;
  tcp.timeout_ms = 10000;
  Cluster a(cfg, tensors, opts.seed);
  Cluster b(cfg, tensors, opts.seed, tcp);
  for (std::uint64_t round = 1; round <= 5; ++round) {
    std::vector<std::vector<GradientVector>> grads(cfg.n_workers);
    for (auto& g : grads) {
      for (const auto& ts : tensors) g.push_back(RandomGrads(rng, 1, ts.size)[0]);
    }
    const RoundResult ra = a.RunRound(round, grads);
    const RoundResult rb = b.RunRound(round, grads);
    bool same = ra.bytes_push == rb.bytes_push && ra.bytes_pull == rb.bytes_pull;
    for (std::size_t k = 0; k < tensors.size(); ++k) {
      same = same && ra.outputs[k].BitEqual(rb.outputs[k]);
    }
    same ? t.Pass() : t.Fail();
  }
  return t.Done();
}

RunConfig EfRunConfig(const CompressorKind& kind, std::uint64_t seed) {
  RunConfig cfg;
  cfg.problem.kind = ProblemKind::kLogistic;
  cfg.problem.dim = 100;
  cfg.problem.samples = 2000;
  cfg.optimizer = OptimizerKind::kClan;
  cfg.lans.lr.base = 0.01;
  cfg.aggregation.mode = AggregationMode::kCompressedEf;
  cfg.aggregation.compressor = kind;
  cfg.aggregation.size_threshold_bytes = 0;
  cfg.aggregation.n_workers = 4;
  cfg.batch = 16;
  cfg.steps = 300;
  cfg.seed = seed;
  return cfg;
}

InvariantResult ResidualBounds(const VerifyOptions& opts) {
  Tally t("protocol.ef_residual_bound");
  for (const CompressorKind& kind :
       {CompressorKind::TopKFraction(0.1), CompressorKind::ScaledSign()}) {
    const RunConfig cfg = EfRunConfig(kind, opts.seed);
    const RunResult run = RunExperiment(cfg);
    const RunSummary& s = run.summary;
    if (!s.min_delta) {
      t.Fail();
      continue;
    }
    const double delta = *s.min_delta + opts.delta_offset;
    if (!(delta > 0 && delta <= 1)) {
      t.Fail();
      continue;
    }
    const EfResidualBounds b = LemmaEfResidualBound(delta, cfg.problem.dim, s.observed_g);
    t.Check((b.worker - s.max_worker_residual) / std::max(b.worker, 1e-30));
    t.Check((b.server - s.max_server_residual) / std::max(b.server, 1e-30));
  }
  return t.Done();
}

BoundInputs RandomInputs(DeterministicRng& rng) {
  BoundInputs in;
  in.d = 1 + rng.NextBelow(20);
  for (std::size_t j = 0; j < in.d; ++j) {
    in.lipschitz.push_back(rng.NextUniform() * 10);
    in.sigma.push_back(rng.NextUniform());
  }
  in.G = rng.NextUniform() * 5;
  in.batch = 1 + rng.NextBelow(64);
  in.workers = 1 + rng.NextBelow(8);
  in.horizon = 1 + rng.NextBelow(10000);
  in.eta = 1e-3 + rng.NextUniform() * 0.1;
  in.beta1 = 0.5 + 0.49 * rng.NextUniform();
  in.beta2 = 0.9 + 0.099 * rng.NextUniform();
  in.gap = rng.NextUniform() * 100;
  return in;
}

InvariantResult ConstantReductions(const VerifyOptions& opts) {
  Tally t("bounds.constant_reductions");
  DeterministicRng rng(opts.seed, {0, 0, 9, StreamStage::kTrial});
  for (int i = 0; i < 500; ++i) {
    const BoundInputs in = RandomInputs(rng);
    const EstimatorConstants full = CorollaryFullPrecision(in);
    const EstimatorConstants w0 = CorollaryUnbiased(in, 0.0);
    const EstimatorConstants d1 = CorollaryBiased(in, 1.0);
    const bool ok = w0.v1 == full.v1 && w0.v1_prime == full.v1_prime &&
                    w0.v2 == full.v2 && w0.v3 == 0.0 && d1.v1 == in.G &&
                    d1.v1_prime == full.v1_prime && d1.v2 == full.v2 && d1.v3 == 0.0;
    ok ? t.Pass() : t.Fail();
    const BoundReport r = Theorem1Rhs(in, CorollaryUnbiased(in, rng.NextUniform()));
    const double sum = r.gap_term + r.smoothness_term + r.v2_term + r.v3_term;
    t.Check(1e-12 * std::max(1.0, r.rhs) - std::fabs(r.rhs - sum));
  }
  const EfResidualBounds b = LemmaEfResidualBound(0.75, 1, 1.0);
  (std::fabs(b.worker - 1) < 1e-12 && std::fabs(b.server - 4) < 1e-12 &&
   std::fabs(b.combined - 5) < 1e-12)
      ? t.Pass()
      : t.Fail();
  BoundInputs one;
  one.G = 1.0;
  std::fabs(CorollaryBiased(one, 0.75).v3 - 10.0) < 1e-12 ? t.Pass() : t.Fail();
  return t.Done();
}

RunConfig QuadraticConfig(std::uint64_t steps, double lr, std::uint64_t seed) {
  RunConfig cfg;
  cfg.problem.kind = ProblemKind::kQuadratic;
  cfg.problem.dim = 50;
  cfg.optimizer = OptimizerKind::kLans;
  cfg.lans.lr.base = lr;
  cfg.aggregation.n_workers = 2;
  cfg.batch = 4;
  cfg.steps = steps;
  cfg.seed = seed;
  return cfg;
}

InvariantResult MomentGap(const VerifyOptions& opts) {
  Tally t("bounds.moment_gap");
  for (int variant = 0; variant < 2; ++variant) {
    RunConfig cfg = QuadraticConfig(100, 0.05, opts.seed);
    cfg.problem.noise = 0.5;
    if (variant == 1) {
      cfg.optimizer = OptimizerKind::kClan;
      cfg.aggregation.mode = AggregationMode::kCompressedEf;
      cfg.aggregation.compressor = CompressorKind::ScaledSign();
      cfg.aggregation.size_threshold_bytes = 0;
    }
    const RunSummary s = RunExperiment(cfg).summary;
    if (s.moment_gap_checks == 0) t.Fail();
    t.Bulk(s.moment_gap_checks, s.moment_gap_violations, s.moment_gap_worst_margin);
    t.Bulk(1, s.update_bound_violations > 0 ? 1 : 0, kInf);
  }
  return t.Done();
}

InvariantResult BoundSoundness(const VerifyOptions& opts) {
  Tally t("bounds.rhs_soundness");
  for (std::uint64_t T : {10u, 100u, 1000u}) {
    RunConfig cfg = QuadraticConfig(T, 1.0 / std::sqrt(static_cast<double>(T)), opts.seed);
    cfg.aggregation.n_workers = 1;
    const RunResult run = RunExperiment(cfg);
    const auto problem = MakeProblem(cfg.problem, cfg.seed);
    BoundInputs in;
    in.d = problem->dimension();
    in.lipschitz = problem->Lipschitz();
    in.sigma.assign(in.d, 0.0);
    in.G = run.summary.observed_g;
    in.batch = cfg.batch;
    in.workers = 1;
    in.horizon = T;
    in.eta = cfg.lans.lr.base;
    in.beta1 = cfg.lans.beta1;
    in.beta2 = cfg.lans.beta2;
    in.eps = cfg.lans.eps;
    in.alpha_l = cfg.lans.alpha_l;
    in.alpha_u = cfg.lans.alpha_u;
    in.gap = run.summary.initial_loss;
    const BoundReport r = Theorem1Rhs(in, CorollaryFullPrecision(in));
    t.Check((r.rhs - run.summary.avg_grad_sq_norm) / r.rhs);
  }
  return t.Done();
}

void Append(std::vector<InvariantResult>& out, std::vector<InvariantResult> more) {
  out.insert(out.end(), more.begin(), more.end());
}

}  // namespace

VerifySuite ParseVerifySuite(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (s == "compressors") return VerifySuite::kCompressors;
  if (s == "protocol") return VerifySuite::kProtocol;
  if (s == "bounds") return VerifySuite::kBounds;
  if (s == "all") return VerifySuite::kAll;
  throw Error(ErrorCode::kConfig, "unknown suite '" + name + "'");
}

std::vector<InvariantResult> RunVerifySuite(VerifySuite suite, const VerifyOptions& opts) {
  std::vector<InvariantResult> out;
  const bool all = suite == VerifySuite::kAll;
  if (all || suite == VerifySuite::kCompressors) {
    Append(out, {DeltaApproximate(opts), Unbiasedness(opts), FusedEquivalence(opts),
                 WireRoundTrip(opts), ThreadInvariance(opts)});
  }
  if (all || suite == VerifySuite::kProtocol) {
    Append(out, {IdentityRecovery(opts), EfConservation(opts),
                 WorkerSymmetryAndVolume(opts), ResidualBounds(opts)});
    if (!opts.skip_tcp) out.push_back(TransportEquivalence(opts));
  }
  if (all || suite == VerifySuite::kBounds) {
    Append(out, {ConstantReductions(opts), MomentGap(opts), BoundSoundness(opts)});
  }
  return out;
}

bool PrintVerifyReport(std::ostream& out, const std::vector<InvariantResult>& results) {
  bool ok = true;
  std::size_t failed = 0;
  for (const InvariantResult& r : results) {
    char margin[32];
    std::snprintf(margin, sizeof(margin), "%.3g", r.worst_margin);
    out << (r.passed() ? "PASS " : "FAIL ") << r.name << "  checks=" << r.checks
        << " violations=" << r.violations << " worst_margin=" << margin;
    if (!r.note.empty()) out << "  (" << r.note << ")";
    out << "\n";
    if (!r.passed()) {
      ok = false;
      ++failed;
    }
  }
  out << results.size() - failed << "/" << results.size() << " invariants hold\n";
  return ok;
}

}  // namespace gradcomp

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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <vector>

#include "gradcomp/error.h"
#include "test_util.h"
#include "gradcomp/half.h"
#include "gradcomp/log.h"
#include "gradcomp/protocol.h"
#include "gradcomp/wire.h"

namespace gradcomp {
namespace {

using testing::CodeOf;

AggregationConfig Config(AggregationMode mode, CompressorKind kind, std::uint32_t n) {
  AggregationConfig cfg;
  cfg.mode = mode;
  cfg.compressor = kind;
  cfg.n_workers = n;
  cfg.size_threshold_bytes = 0;
  return cfg;
}

std::vector<WorkerState> Workers(std::uint32_t n) {
  std::vector<WorkerState> w;
  for (std::uint32_t i = 0; i < n; ++i) w.emplace_back(i);
  return w;
}

// Captures warnings for the duration of a test.
class WarningCapture {
 public:
  WarningCapture() {
    old_ = SetLogSink([this](LogLevel level, std::string_view m) {
      if (level == LogLevel::kWarning) messages.emplace_back(m);
    });
  }
  ~WarningCapture() { SetLogSink(old_); }
  std::vector<std::string> messages;

 private:
  LogSink old_;
};

TEST(PushPullTest, Examples) {
  const std::vector<GradientVector> one{GradientVector{1.25f, -3}};
  EXPECT_TRUE(PushPull(one).BitEqual(one[0]));
  const std::vector<GradientVector> two{GradientVector{2, 0}, GradientVector{0, 2}};
  EXPECT_TRUE(PushPull(two).BitEqual(GradientVector{1, 1}));
  const std::vector<GradientVector> bad{GradientVector{1}, GradientVector{1, 2}};
  EXPECT_EQ(CodeOf([&] { PushPull(bad); }), ErrorCode::kLengthMismatch);
}

TEST(PushPullTest, MeanIsRoundedDoubleSum) {
  DeterministicRng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.NextBelow(8), d = 1 + rng.NextBelow(20);
    std::vector<GradientVector> g;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<float> v(d);
      for (float& f : v) f = static_cast<float>(rng.NextGaussian());
      g.emplace_back(v);
    }
    const GradientVector p = PushPull(g);
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0;
      for (const auto& x : g) s += x[j];
      EXPECT_EQ(p[j], static_cast<float>(s / static_cast<double>(n)));
    }
  }
}

TEST(CompressPushPullTest, NoneAndFullRandomKRecoverPushPull) {
  DeterministicRng rng(2);
  const DeterministicRng base(9);
  for (std::uint32_t n : {1u, 2u, 4u, 8u}) {
    auto w1 = Workers(n), w2 = Workers(n);
    ServerShardState s1(0, n), s2(0, n);
    const std::size_t d = 11;
    const auto none = Config(AggregationMode::kCompressed, CompressorKind::None(), n);
    const auto full = Config(AggregationMode::kCompressed, CompressorKind::RandomK(d), n);
    for (std::uint64_t round = 1; round <= 20; ++round) {
      std::vector<GradientVector> g;
      for (std::uint32_t i = 0; i < n; ++i) {
        std::vector<float> v(d);
        for (float& f : v) f = static_cast<float>(rng.NextGaussian());
        g.emplace_back(v);
      }
      const GradientVector want = PushPull(g);
      EXPECT_TRUE(CompressPushPull(none, w1, s1, g, 0, base, round).BitEqual(want));
      EXPECT_TRUE(CompressPushPull(full, w2, s2, g, 0, base, round).BitEqual(want));
    }
  }
}

TEST(CompressPushPullTest, ScaledSignTwiceIsStable) {
  WarningCapture warnings;
  auto w = Workers(1);
  ServerShardState s(0, 1);
  const auto cfg = Config(AggregationMode::kCompressed, CompressorKind::ScaledSign(), 1);
  const std::vector<GradientVector> g{GradientVector{1, -2, 3}};
  EXPECT_TRUE(CompressPushPull(cfg, w, s, g, 0, DeterministicRng(0), 1)
                  .BitEqual(GradientVector{2, -2, 2}));
  EXPECT_FALSE(warnings.messages.empty());
  EXPECT_FALSE(w[0].HasResidual(0));
}

TEST(CompressEfPushPullTest, TopKHandTrace) {
  auto w = Workers(1);
  ServerShardState s(0, 1);
  const auto cfg = Config(AggregationMode::kCompressedEf, CompressorKind::TopK(1), 1);
  const DeterministicRng base(0);
  const std::vector<GradientVector> g1{GradientVector{3, 1}};
  EXPECT_TRUE(CompressEfPushPull(cfg, w, s, g1, 0, base, 1).BitEqual(GradientVector{3, 0}));
  EXPECT_TRUE(w[0].Residual(0, 2).BitEqual(GradientVector{0, 1}));
  EXPECT_TRUE(s.Residual(0, 2) == GradientVector::Zeros(2));
  // q = [0, 2] + [0, 1] = [0, 3].
  const std::vector<GradientVector> g2{GradientVector{0, 2}};
  EXPECT_TRUE(CompressEfPushPull(cfg, w, s, g2, 0, base, 2).BitEqual(GradientVector{0, 3}));
  EXPECT_TRUE(w[0].Residual(0, 2) == GradientVector::Zeros(2));
}

TEST(CompressEfPushPullTest, ServerResidualTrace) {
  // n = 2, TOP_K k = 1. Workers send [4, 0] and [0, 2]; the shard holds
  // Delta = [2, 1], sends [2, 0] and keeps [0, 1].
  auto w = Workers(2);
  ServerShardState s(0, 2);
  const auto cfg = Config(AggregationMode::kCompressedEf, CompressorKind::TopK(1), 2);
  const std::vector<GradientVector> g{GradientVector{4, 1}, GradientVector{1, 2}};
  EXPECT_TRUE(CompressEfPushPull(cfg, w, s, g, 0, DeterministicRng(0), 1)
                  .BitEqual(GradientVector{2, 0}));
  EXPECT_TRUE(w[0].Residual(0, 2).BitEqual(GradientVector{0, 1}));
  EXPECT_TRUE(w[1].Residual(0, 2).BitEqual(GradientVector{1, 0}));
  EXPECT_TRUE(s.LastAggregate(0)->BitEqual(GradientVector{2, 1}));
  EXPECT_TRUE(s.Residual(0, 2).BitEqual(GradientVector{0, 1}));
}

TEST(CompressEfPushPullTest, NoneKeepsResidualsZero) {
  auto w = Workers(3);
  ServerShardState s(0, 3);
  const auto cfg = Config(AggregationMode::kCompressedEf, CompressorKind::None(), 3);
  const std::vector<GradientVector> g{GradientVector{1, -0.0f}, GradientVector{0.5f, 2},
                                      GradientVector{-0.0f, 1}};
  for (std::uint64_t r = 1; r <= 3; ++r) {
    EXPECT_TRUE(CompressEfPushPull(cfg, w, s, g, 5, DeterministicRng(0), r).BitEqual(PushPull(g)));
  }
  for (const auto& x : w) EXPECT_EQ(L2Norm(x.Residual(5, 2)), 0.0);
  EXPECT_EQ(L2Norm(s.Residual(5, 2)), 0.0);
}

TEST(CompressEfPushPullTest, ConservationIdentities) {
  DeterministicRng rng(5);
  const DeterministicRng base(5);
  const std::uint32_t n = 2;
  const std::size_t d = 9;
  for (const CompressorKind& kind :
       {CompressorKind::ScaledSign(), CompressorKind::TopK(2), CompressorKind::TopK(2, ValuePrecision::kF16)}) {
    AggregationConfig cfg = Config(AggregationMode::kCompressedEf, kind, n);
    const TensorRoute route = RouteTensor(cfg, d);
    auto w = Workers(n);
    ServerShardState s(0, n);
    for (std::uint64_t round = 1; round <= 30; ++round) {
      for (std::uint32_t i = 0; i < n; ++i) {
        std::vector<float> v(d);
        for (float& f : v) f = static_cast<float>(rng.NextGaussian());
        const GradientVector g(v);
        const GradientVector e = w[i].Residual(0, d);
        PushOutcome out = w[i].Push(route, 0, g, base, round);
        const GradientVector c = Decompress(out.message);
        const GradientVector e_new = w[i].Residual(0, d);
        for (std::size_t j = 0; j < d; ++j) {
          const double q = static_cast<float>(g[j] + e[j]);
          EXPECT_NEAR(c[j] + static_cast<double>(e_new[j]), q, 1e-6 * (1 + std::fabs(q)));
        }
        s.Accept(i, 0, std::move(out.message), round);
      }
      const GradientVector p = Decompress(s.Aggregate(route, 0, base, round));
      const GradientVector delta = *s.LastAggregate(0);
      const GradientVector e = s.Residual(0, d);
      for (std::size_t j = 0; j < d; ++j) {
        EXPECT_NEAR(p[j] + static_cast<double>(e[j]), delta[j], 1e-6 * (1 + std::fabs(delta[j])));
      }
    }
  }
}

TEST(ShardStateTest, AcceptErrors) {
  ServerShardState s(0, 2);
  const CompressedMessage m = CompressNone(GradientVector{1, 2});
  EXPECT_FALSE(s.Accept(0, 0, m, 1));
  EXPECT_EQ(CodeOf([&] { s.Accept(0, 0, m, 1); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(CodeOf([&] { s.Accept(1, 0, m, 2); }), ErrorCode::kTransport);
  EXPECT_EQ(CodeOf([&] { s.Accept(1, 0, CompressNone(GradientVector{1}), 1); }),
            ErrorCode::kLengthMismatch);
  EXPECT_TRUE(s.Accept(1, 0, m, 1));
}

TEST(RoutingTest, ThresholdBypass) {
  AggregationConfig cfg = Config(AggregationMode::kCompressedEf, CompressorKind::TopK(1), 1);
  cfg.size_threshold_bytes = 400;
  const TensorRoute small = RouteTensor(cfg, 99);
  EXPECT_TRUE(small.bypassed);
  EXPECT_EQ(small.mode, AggregationMode::kFullPrecision);
  const TensorRoute big = RouteTensor(cfg, 100);
  EXPECT_FALSE(big.bypassed);
  EXPECT_EQ(big.mode, AggregationMode::kCompressedEf);
}

TEST(ShardingTest, ModuloExamples) {
  for (std::uint32_t t = 0; t < 10; ++t) EXPECT_EQ(AssignShard(t, 1), 0u);
  std::vector<std::uint32_t> got;
  for (std::uint32_t t = 0; t < 6; ++t) got.push_back(AssignShard(t, 2));
  EXPECT_EQ(got, (std::vector<std::uint32_t>{0, 1, 0, 1, 0, 1}));
}

// Greedy largest-first oracle for the weighted policy.
std::vector<std::uint32_t> LptOracle(const std::vector<std::size_t>& weight, std::uint32_t S) {
  std::vector<std::uint32_t> order(weight.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return weight[a] > weight[b]; });
  std::vector<std::size_t> load(S, 0);
  std::vector<std::uint32_t> out(weight.size());
  for (auto t : order) {
    const auto s = static_cast<std::uint32_t>(std::min_element(load.begin(), load.end()) - load.begin());
    out[t] = s;
    load[s] += weight[t];
  }
  return out;
}

TEST(ShardingTest, WeightedSeparatesLargeTensors) {
  AggregationConfig cfg = Config(AggregationMode::kCompressed, CompressorKind::ScaledSign(), 1);
  cfg.shard_count = 2;
  cfg.shard_policy = ShardPolicy::kWeighted;
  const std::size_t mb = (1 << 20) / 4;
  // Ids 0 and 2 are the 10 MB tensors, so modulo would co-locate them.
  const std::vector<TensorSpec> t{{0, 10 * mb}, {1, mb}, {2, 10 * mb}, {3, mb}};
  const auto plan = PlanShards(cfg, t);
  EXPECT_NE(plan[0], plan[2]);
  std::vector<std::size_t> w;
  for (const auto& x : t) w.push_back(FrameSize(cfg.compressor.Resolved(x.size), x.size));
  EXPECT_EQ(plan, LptOracle(w, 2));
  cfg.shard_policy = ShardPolicy::kModulo;
  EXPECT_EQ(PlanShards(cfg, t), (std::vector<std::uint32_t>{0, 1, 0, 1}));
}

TEST(IntraNodeTest, AveragesHalfRoundedDevices) {
  const std::vector<GradientVector> dev{GradientVector{1.0f / 3, 2}, GradientVector{0.1f, -1}};
  const GradientVector r = IntraNodeReduce(dev);
  EXPECT_EQ(r[0], static_cast<float>((static_cast<double>(RoundTripHalf(1.0f / 3)) +
                                      RoundTripHalf(0.1f)) / 2));
  EXPECT_EQ(r[1], 0.5f);
}

std::vector<std::vector<GradientVector>> RandomRound(DeterministicRng& rng, std::uint32_t n,
                                                     const std::vector<TensorSpec>& t) {
  std::vector<std::vector<GradientVector>> g(n);
  for (auto& w : g) {
    for (const auto& x : t) {
      std::vector<float> v(x.size);
      for (float& f : v) f = static_cast<float>(rng.NextGaussian());
      w.emplace_back(v);
    }
  }
  return g;
}

TEST(ClusterTest, BypassedTensorLeavesResidualsUntouched) {
  AggregationConfig cfg = Config(AggregationMode::kCompressedEf, CompressorKind::TopK(1), 2);
  cfg.size_threshold_bytes = 1 << 20;
  const std::vector<TensorSpec> t{{0, 10}};
  Cluster c(cfg, t, 1);
  DeterministicRng rng(1);
  const auto g = RandomRound(rng, 2, t);
  const RoundResult r = c.RunRound(1, g);
  EXPECT_TRUE(r.outputs[0].BitEqual(PushPull(std::vector<GradientVector>{g[0][0], g[1][0]})));
  EXPECT_TRUE(r.tensors[0].route.bypassed);
  EXPECT_FALSE(c.worker(0).HasResidual(0));
  EXPECT_EQ(r.bytes_push[0], FrameSize(CompressorKind::None(), 10));
}

TEST(ClusterTest, EachShardGetsOneTensor) {
  AggregationConfig cfg = Config(AggregationMode::kCompressedEf, CompressorKind::ScaledSign(), 2);
  cfg.shard_count = 2;
  const std::vector<TensorSpec> t{{0, 8}, {1, 8}};
  Cluster c(cfg, t, 1);
  DeterministicRng rng(2);
  const RoundResult r = c.RunRound(1, RandomRound(rng, 2, t));
  EXPECT_NE(r.tensors[0].shard, r.tensors[1].shard);
  EXPECT_TRUE(c.shard(0).LastAggregate(0).has_value());
  EXPECT_FALSE(c.shard(0).LastAggregate(1).has_value());
  EXPECT_TRUE(c.shard(1).LastAggregate(1).has_value());
  EXPECT_TRUE(r.workers_agree);
}

TEST(ClusterTest, BytesPerWorkerIndependentOfN) {
  const std::vector<TensorSpec> t{{0, 1000}, {1, 50}};
  std::vector<std::uint64_t> push, pull;
  for (std::uint32_t n : {1u, 2u, 4u, 8u}) {
    AggregationConfig cfg = Config(AggregationMode::kCompressedEf, CompressorKind::TopKFraction(0.01), n);
    Cluster c(cfg, t, 3);
    DeterministicRng rng(n);
    const RoundResult r = c.RunRound(1, RandomRound(rng, n, t));
    for (std::uint32_t w = 0; w < n; ++w) {
      push.push_back(r.bytes_push[w]);
      pull.push_back(r.bytes_pull[w]);
    }
  }
  EXPECT_EQ(std::count(push.begin(), push.end(), push[0]), static_cast<long>(push.size()));
  EXPECT_EQ(std::count(pull.begin(), pull.end(), pull[0]), static_cast<long>(pull.size()));
  EXPECT_EQ(push[0], FrameSize(CompressorKind::TopK(10), 1000) + FrameSize(CompressorKind::TopK(1), 50));
}

TEST(ClusterTest, PairingWarnings) {
  {
    WarningCapture w;
    Cluster c(Config(AggregationMode::kCompressedEf, CompressorKind::RandomK(1), 1), {{0, 4}}, 0);
    EXPECT_FALSE(w.messages.empty());
  }
  {
    WarningCapture w;
    Cluster c(Config(AggregationMode::kCompressed, CompressorKind::TopK(1), 1), {{0, 4}}, 0);
    EXPECT_FALSE(w.messages.empty());
  }
  {
    WarningCapture w;
    Cluster c(Config(AggregationMode::kCompressedEf, CompressorKind::TopK(1), 1), {{0, 4}}, 0);
    EXPECT_TRUE(w.messages.empty());
  }
}

TEST(ClusterTest, DeterministicAcrossInstances) {
  const std::vector<TensorSpec> t{{0, 40}, {1, 17}};
  AggregationConfig cfg = Config(AggregationMode::kCompressed, CompressorKind::LinearDither(3), 3);
  Cluster a(cfg, t, 4), b(cfg, t, 4);
  DeterministicRng rng(4);
  for (std::uint64_t round = 1; round <= 5; ++round) {
    const auto g = RandomRound(rng, 3, t);
    const RoundResult ra = a.RunRound(round, g), rb = b.RunRound(round, g);
    for (std::size_t k = 0; k < t.size(); ++k) EXPECT_TRUE(ra.outputs[k].BitEqual(rb.outputs[k]));
  }
}

TEST(TransportSpecTest, Parse) {
  EXPECT_EQ(ParseTransport("inproc").kind, TransportKind::kInProcess);
  const TransportOptions t = ParseTransport("tcp:localhost:5000");
  EXPECT_EQ(t.kind, TransportKind::kTcp);
  EXPECT_EQ(t.host, "localhost");
  EXPECT_EQ(t.base_port, 5000);
  EXPECT_EQ(ParseTransport("tcp").host, "127.0.0.1");
  EXPECT_EQ(CodeOf([] { ParseTransport("udp"); }), ErrorCode::kConfig);
  EXPECT_EQ(CodeOf([] { ParseTransport("tcp:h:99999"); }), ErrorCode::kConfig);
}

}  // namespace
}  // namespace gradcomp

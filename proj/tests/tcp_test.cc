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

#include <deque>
#include <vector>

#include "gradcomp/error.h"
#include "gradcomp/tcp_transport.h"
#include "gradcomp/wire.h"

namespace gradcomp {
namespace {

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

TEST(StreamFramingTest, HeaderLayout) {
  const std::vector<std::uint8_t> frame{9, 8, 7};
  const auto m = EncodeStreamMessage(0x0102030405060708ull, frame);
  ASSERT_EQ(m.size(), kStreamHeaderSize + 3);
  EXPECT_EQ((std::vector<std::uint8_t>(m.begin(), m.begin() + 4)),
            (std::vector<std::uint8_t>{0, 0, 0, 3}));
  EXPECT_EQ(m[4], 0x08);
  EXPECT_EQ(m[11], 0x01);
  EXPECT_EQ(m[12], 9);
}

TEST(TcpTransportTest, MatchesInProcess) {
  for (const CompressorKind& kind :
       {CompressorKind::None(), CompressorKind::TopKFraction(0.2), CompressorKind::NaturalDither(4)}) {
    AggregationConfig cfg;
    cfg.n_workers = 3;
    cfg.shard_count = 2;
    cfg.compressor = kind;
    cfg.mode = kind.tag == CompressorTag::kTopK ? AggregationMode::kCompressedEf
                                                : AggregationMode::kCompressed;
    cfg.size_threshold_bytes = 64;
    const std::vector<TensorSpec> t{{0, 100}, {1, 3}, {2, 37}};
    TransportOptions tcp;
    tcp.kind = TransportKind::kTcp;
    tcp.timeout_ms = 10000;
    Cluster a(cfg, t, 7), b(cfg, t, 7, tcp);
    EXPECT_EQ(b.transport().name(), "tcp");
    DeterministicRng rng(7);
    for (std::uint64_t round = 1; round <= 4; ++round) {
      const auto g = RandomRound(rng, 3, t);
      const RoundResult ra = a.RunRound(round, g), rb = b.RunRound(round, g);
      EXPECT_TRUE(rb.workers_agree);
      EXPECT_EQ(ra.bytes_push, rb.bytes_push);
      EXPECT_EQ(ra.bytes_pull, rb.bytes_pull);
      for (std::size_t k = 0; k < t.size(); ++k) EXPECT_TRUE(ra.outputs[k].BitEqual(rb.outputs[k]));
    }
  }
}

TEST(TcpTransportTest, MissingWorkerTimesOut) {
  AggregationConfig cfg;
  cfg.n_workers = 2;
  std::deque<ServerShardState> shards;
  shards.emplace_back(0, 2);
  TransportOptions opts;
  opts.kind = TransportKind::kTcp;
  opts.timeout_ms = 200;
  TcpTransport tr(cfg, DeterministicRng(0), shards, opts);
  EXPECT_GT(tr.port(0), 0);
  std::vector<std::vector<OutgoingFrame>> push(2);
  push[0].push_back({0, EncodeFrame(CompressNone(GradientVector{1, 2}), 0)});
  try {
    tr.Exchange(1, push);
    ADD_FAILURE() << "expected a timeout";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTimeout);
  }
}

}  // namespace
}  // namespace gradcomp

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

#ifndef GRADCOMP_TCP_TRANSPORT_H_
#define GRADCOMP_TCP_TRANSPORT_H_

#include <atomic>
#include <cstdint>
#include <deque>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "gradcomp/protocol.h"

namespace gradcomp {

/*
 * Stream framing, per message:
 *
 *   u32 big-endian   length of the wire frame that follows the round index
 *   u64 little-endian round index
 *   wire frame (see wire.h)
 *
 * A client opens one connection per (worker, shard) and first sends its
 * worker id as a u32 little-endian. Shards answer on every worker
 * connection with the same pull frame.
 */
inline constexpr std::size_t kStreamHeaderSize = 12;

std::vector<std::uint8_t> EncodeStreamMessage(std::uint64_t round,
                                              std::span<const std::uint8_t> frame);

/*!
 * \brief Loopback TCP transport: one listening server per shard, each served
 * by a poll() loop on its own thread, and blocking client sockets driven by
 * the caller.
 *
 * Receives on the client side give up after timeout_ms with kTimeout.
 */
class TcpTransport : public Transport {
 public:
  TcpTransport(const AggregationConfig& cfg, DeterministicRng base,
               std::deque<ServerShardState>& shards,
               const TransportOptions& opts);
  ~TcpTransport() override;
  TcpTransport(const TcpTransport&) = delete;
  TcpTransport& operator=(const TcpTransport&) = delete;

  std::vector<std::vector<std::vector<std::uint8_t>>> Exchange(
      std::uint64_t round,
      const std::vector<std::vector<OutgoingFrame>>& push) override;
  std::string name() const override { return "tcp"; }

  // Listening port of shard s.
  std::uint16_t port(std::size_t s) const { return ports_.at(s); }

 private:
  void Serve(std::size_t shard);
  void RecordServerError(std::exception_ptr e);
  [[noreturn]] void FailClient(const std::string& what, bool timeout);

  AggregationConfig cfg_;
  DeterministicRng base_;
  std::deque<ServerShardState>& shards_;
  TransportOptions opts_;
  std::vector<int> listen_fds_;
  std::vector<std::uint16_t> ports_;
  // clients_[w][s]: worker w's connection to shard s.
  std::vector<std::vector<int>> clients_;
  std::vector<std::thread> servers_;
  std::atomic<bool> stop_{false};
  std::mutex error_mu_;
  std::exception_ptr server_error_;
};

}  // namespace gradcomp

#endif  // GRADCOMP_TCP_TRANSPORT_H_

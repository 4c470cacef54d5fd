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

#include "gradcomp/tcp_transport.h"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <map>
#include <optional>

#include "bytes.h"

namespace gradcomp {

namespace {

constexpr int kPollMs = 50;
constexpr std::uint32_t kMaxFrame = 0x7FFFFFFF;

[[noreturn]] void ThrowErrno(const std::string& what) {
  throw Error(ErrorCode::kTransport, what + ": " + std::strerror(errno));
}

sockaddr_in Resolve(const std::string& host, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
    throw Error(ErrorCode::kTransport, "cannot resolve host '" + host + "'");
  }
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  freeaddrinfo(res);
  return addr;
}

void SetNonBlocking(int fd) {
  const int flags = fcntl(fd, F_GETFL, 0);
  if (flags < 0 || fcntl(fd, F_SETFL, flags | O_NONBLOCK) < 0) {
    ThrowErrno("fcntl");
  }
}

void SendAll(int fd, const std::uint8_t* p, std::size_t n) {
  while (n > 0) {
    const ssize_t w = send(fd, p, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      ThrowErrno("send");
    }
    p += w;
    n -= static_cast<std::size_t>(w);
  }
}

// Returns false on timeout; throws on EOF or error.
bool RecvAll(int fd, std::uint8_t* p, std::size_t n) {
  while (n > 0) {
    const ssize_t r = recv(fd, p, n, 0);
    if (r == 0) throw Error(ErrorCode::kTransport, "connection closed by shard");
    if (r < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) return false;
      ThrowErrno("recv");
    }
    p += r;
    n -= static_cast<std::size_t>(r);
  }
  return true;
}

std::uint32_t GetU32Be(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) |
         (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
}

struct Connection {
  int fd = -1;
  std::optional<std::uint32_t> worker;
  std::vector<std::uint8_t> in;
  std::vector<std::uint8_t> out;
  std::size_t out_pos = 0;
};

}  // namespace

std::vector<std::uint8_t> EncodeStreamMessage(std::uint64_t round,
                                              std::span<const std::uint8_t> frame) {
  if (frame.size() > kMaxFrame) {
    throw Error(ErrorCode::kTransport, "frame too large for the stream header");
  }
  const auto len = static_cast<std::uint32_t>(frame.size());
  std::vector<std::uint8_t> out(kStreamHeaderSize + frame.size());
  out[0] = static_cast<std::uint8_t>(len >> 24);
  out[1] = static_cast<std::uint8_t>(len >> 16);
  out[2] = static_cast<std::uint8_t>(len >> 8);
  out[3] = static_cast<std::uint8_t>(len);
  detail::PutU64(out.data() + 4, round);
  std::copy(frame.begin(), frame.end(), out.begin() + kStreamHeaderSize);
  return out;
}

TcpTransport::TcpTransport(const AggregationConfig& cfg, DeterministicRng base,
                           std::deque<ServerShardState>& shards,
                           const TransportOptions& opts)
    : cfg_(cfg), base_(base), shards_(shards), opts_(opts) {
  try {
    for (std::size_t s = 0; s < shards_.size(); ++s) {
      const int fd = socket(AF_INET, SOCK_STREAM, 0);
      if (fd < 0) ThrowErrno("socket");
      listen_fds_.push_back(fd);
      const int one = 1;
      setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
      const std::uint16_t want =
          opts_.base_port == 0 ? 0 : static_cast<std::uint16_t>(opts_.base_port + s);
      sockaddr_in addr = Resolve(opts_.host, want);
      if (bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
        ThrowErrno("bind " + opts_.host + ":" + std::to_string(want));
      }
      if (listen(fd, 64) < 0) ThrowErrno("listen");
      socklen_t len = sizeof(addr);
      getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
      ports_.push_back(ntohs(addr.sin_port));
      SetNonBlocking(fd);
    }
    for (std::size_t s = 0; s < shards_.size(); ++s) {
      servers_.emplace_back([this, s] { Serve(s); });
    }
    timeval tv{};
    tv.tv_sec = opts_.timeout_ms / 1000;
    tv.tv_usec = (opts_.timeout_ms % 1000) * 1000;
    clients_.assign(cfg_.n_workers, {});
    for (std::uint32_t w = 0; w < cfg_.n_workers; ++w) {
      for (std::size_t s = 0; s < shards_.size(); ++s) {
        const int fd = socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) ThrowErrno("socket");
        clients_[w].push_back(fd);
        sockaddr_in addr = Resolve(opts_.host, ports_[s]);
        if (connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
          ThrowErrno("connect to shard " + std::to_string(s));
        }
        const int one = 1;
        setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
        setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
        std::uint8_t hello[4];
        detail::PutU32(hello, w);
        SendAll(fd, hello, sizeof(hello));
      }
    }
  } catch (...) {
    stop_ = true;
    for (auto& t : servers_) t.join();
    for (auto& row : clients_) {
      for (int fd : row) close(fd);
    }
    for (int fd : listen_fds_) close(fd);
    throw;
  }
}

TcpTransport::~TcpTransport() {
  stop_ = true;
  for (auto& t : servers_) t.join();
  for (auto& row : clients_) {
    for (int fd : row) close(fd);
  }
  for (int fd : listen_fds_) close(fd);
}

void TcpTransport::RecordServerError(std::exception_ptr e) {
  std::lock_guard<std::mutex> lock(error_mu_);
  if (!server_error_) server_error_ = e;
}

void TcpTransport::FailClient(const std::string& what, bool timeout) {
  {
    std::lock_guard<std::mutex> lock(error_mu_);
    if (server_error_) std::rethrow_exception(server_error_);
  }
  throw Error(timeout ? ErrorCode::kTimeout : ErrorCode::kTransport, what);
}

void TcpTransport::Serve(std::size_t shard) {
  const int listen_fd = listen_fds_[shard];
  std::map<int, Connection> conns;
  auto drop_all = [&] {
    for (auto& [fd, c] : conns) close(fd);
    conns.clear();
  };
  try {
    while (!stop_) {
      std::vector<pollfd> fds;
      fds.push_back({listen_fd, POLLIN, 0});
      for (auto& [fd, c] : conns) {
        short ev = POLLIN;
        if (c.out_pos < c.out.size()) ev |= POLLOUT;
        fds.push_back({fd, ev, 0});
      }
      const int ready = poll(fds.data(), fds.size(), kPollMs);
      if (ready < 0) {
        if (errno == EINTR) continue;
        ThrowErrno("poll");
      }
      if (ready == 0) continue;
      if (fds[0].revents & POLLIN) {
        for (;;) {
          const int fd = accept(listen_fd, nullptr, nullptr);
          if (fd < 0) break;
          SetNonBlocking(fd);
          conns[fd].fd = fd;
        }
      }
      for (std::size_t i = 1; i < fds.size(); ++i) {
        const int fd = fds[i].fd;
        auto it = conns.find(fd);
        if (it == conns.end()) continue;
        Connection& c = it->second;
        bool closed = false;
        if (fds[i].revents & (POLLIN | POLLHUP | POLLERR)) {
          std::uint8_t buf[1 << 16];
          for (;;) {
            const ssize_t r = recv(fd, buf, sizeof(buf), 0);
            if (r > 0) {
              c.in.insert(c.in.end(), buf, buf + r);
              continue;
            }
            if (r == 0) closed = true;
            else if (errno != EAGAIN && errno != EWOULDBLOCK && errno != EINTR) {
              closed = true;
            }
            break;
          }
          std::size_t pos = 0;
          if (!c.worker && c.in.size() >= 4) {
            c.worker = detail::GetU32(c.in.data());
            pos = 4;
          }
          while (c.worker && c.in.size() - pos >= kStreamHeaderSize) {
            const std::uint32_t len = GetU32Be(c.in.data() + pos);
            if (c.in.size() - pos - kStreamHeaderSize < len) break;
            const std::uint64_t round = detail::GetU64(c.in.data() + pos + 4);
            std::span<const std::uint8_t> frame(
                c.in.data() + pos + kStreamHeaderSize, len);
            auto reply = shards_[shard].OnFrame(cfg_, base_, round, *c.worker, frame);
            pos += kStreamHeaderSize + len;
            if (reply) {
              const auto msg = EncodeStreamMessage(round, *reply);
              for (auto& [ofd, oc] : conns) {
                if (oc.worker) oc.out.insert(oc.out.end(), msg.begin(), msg.end());
              }
            }
          }
          c.in.erase(c.in.begin(), c.in.begin() + static_cast<std::ptrdiff_t>(pos));
        }
        // Flush whatever is queued; a full socket buffer waits for POLLOUT.
        while (!closed && c.out_pos < c.out.size()) {
          const ssize_t w = send(fd, c.out.data() + c.out_pos,
                                 c.out.size() - c.out_pos, MSG_NOSIGNAL);
          if (w > 0) {
            c.out_pos += static_cast<std::size_t>(w);
          } else if (w < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) {
            break;
          } else if (!(w < 0 && errno == EINTR)) {
            closed = true;
          }
        }
        if (c.out_pos == c.out.size()) {
          c.out.clear();
          c.out_pos = 0;
        }
        if (closed) {
          close(fd);
          conns.erase(it);
        }
      }
      // Replies queued on other connections during this pass.
      for (auto& [fd, c] : conns) {
        while (c.out_pos < c.out.size()) {
          const ssize_t w = send(fd, c.out.data() + c.out_pos,
                                 c.out.size() - c.out_pos, MSG_NOSIGNAL);
          if (w <= 0) break;
          c.out_pos += static_cast<std::size_t>(w);
        }
        if (c.out_pos == c.out.size()) {
          c.out.clear();
          c.out_pos = 0;
        }
      }
    }
  } catch (...) {
    RecordServerError(std::current_exception());
  }
  drop_all();
}

std::vector<std::vector<std::vector<std::uint8_t>>> TcpTransport::Exchange(
    std::uint64_t round, const std::vector<std::vector<OutgoingFrame>>& push) {
  if (push.size() > clients_.size()) {
    throw Error(ErrorCode::kWorkerCountMismatch,
                std::to_string(push.size()) + " workers pushed, transport has " +
                    std::to_string(clients_.size()));
  }
  std::vector<std::vector<std::size_t>> expected(
      push.size(), std::vector<std::size_t>(shards_.size(), 0));
  try {
    for (std::size_t w = 0; w < push.size(); ++w) {
      for (const OutgoingFrame& f : push[w]) {
        const auto msg = EncodeStreamMessage(round, f.bytes);
        SendAll(clients_[w].at(f.shard), msg.data(), msg.size());
        ++expected[w][f.shard];
      }
    }
  } catch (const Error& e) {
    FailClient(e.detail(), false);
  }
  std::vector<std::vector<std::vector<std::uint8_t>>> pull(push.size());
  for (std::size_t w = 0; w < push.size(); ++w) {
    for (std::size_t s = 0; s < shards_.size(); ++s) {
      for (std::size_t k = 0; k < expected[w][s]; ++k) {
        const int fd = clients_[w][s];
        std::uint8_t head[kStreamHeaderSize];
        std::vector<std::uint8_t> frame;
        try {
          if (!RecvAll(fd, head, sizeof(head))) {
            FailClient("worker " + std::to_string(w) + " waited more than " +
                           std::to_string(opts_.timeout_ms) + " ms for shard " +
                           std::to_string(s),
                       true);
          }
          frame.resize(GetU32Be(head));
          if (!RecvAll(fd, frame.data(), frame.size())) {
            FailClient("timed out inside a frame from shard " + std::to_string(s),
                       true);
          }
        } catch (const Error& e) {
          if (e.code() == ErrorCode::kTimeout) throw;
          FailClient(e.detail(), false);
        }
        const std::uint64_t got = detail::GetU64(head + 4);
        if (got != round) {
          throw Error(ErrorCode::kTransport,
                      "pull frame for round " + std::to_string(got) +
                          " during round " + std::to_string(round));
        }
        pull[w].push_back(std::move(frame));
      }
    }
  }
  return pull;
}

}  // namespace gradcomp

/*
 * Copyright 2026 The snicsim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#pragma once

// Fixtures shared by the unit tests.

#include <unistd.h>

#include <filesystem>
#include <random>
#include <string>

#include "snicsim/sim.hpp"

namespace snicsim::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("snicsim_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline Bytes random_bytes(std::mt19937_64& rng, std::size_t n) {
  Bytes b(n);
  for (auto& x : b) x = static_cast<std::uint8_t>(rng());
  return b;
}

/// Two connected peers with one QP each and a registered buffer on both
/// sides, ready for hand-driven WQEs.
struct Pair {
  sim::Testbed tb;
  std::uint32_t qpn = 7;
  PhysicalAddress local = 0;
  PhysicalAddress remote = 0;
  std::uint32_t local_rkey = 0;
  std::uint32_t remote_rkey = 0;

  explicit Pair(std::uint64_t span = 1 << 20, std::uint32_t mtu = 4096,
                rdma::QpLocation location = rdma::QpLocation::HostMem,
                std::uint32_t remote_access = mem::access::kAll)
      : tb(sim::TestbedConfig{{}, {}, {}, false, true}) {
    rdma::QpConfig base;
    base.mtu = mtu;
    base.location = location;
    tb.connect(qpn, qpn, base);
    auto& a = tb.peer(0);
    auto& b = tb.peer(1);
    local = a.alloc(SpaceKind::Host, span, 4096);
    remote = b.alloc(SpaceKind::Host, span, 4096);
    local_rkey = a.regions.register_region(a.memory.host(), local, span, mem::access::kAll).rkey;
    remote_rkey = b.regions.register_region(b.memory.host(), remote, span, remote_access).rkey;
  }

  rdma::Engine& client() { return tb.peer(0).engine; }
  rdma::Engine& server() { return tb.peer(1).engine; }

  /// Posts `wqe` on the client and rings the doorbell at `at`.
  void post_and_ring(const rdma::WorkQueueElement& wqe, SimTime at) {
    client().post_wqe(qpn, wqe);
    tb.ring_sq_doorbell(0, qpn, client().qp(qpn).sq_posted, at);
  }

  /// Request frames the client put on the wire, decoded.
  std::vector<wire::RocePacket> client_requests() const {
    std::vector<wire::RocePacket> out;
    const auto& mac = const_cast<sim::Testbed&>(tb).peer(0).config().mac;
    for (const auto& rec : tb.captured()) {
      auto parsed = wire::parse(rec.bytes);
      if (!parsed.packet || parsed.packet->eth.src_mac != mac) continue;
      if (wire::is_request(parsed.packet->bth.opcode)) out.push_back(*parsed.packet);
    }
    return out;
  }
};

}  // namespace snicsim::test

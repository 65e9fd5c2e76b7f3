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

// On-disk layout of generated/ shared by the generator and the runner.
//
//   global.json         case identity, MTU, PSN, QP location, peer addresses
//   mem_reg.json        registered regions with their expected rkeys
//   qp.json             QP numbers and ring depths
//   wqe.json            traffic entries and their WQEs, in execution order
//   recv.json           receive WQEs to post before traffic starts
//   stimulus_peerN.bin  non-RDMA frames injected at peer N
//   init/peerN.*        initial memory image of peer N's regions
//   golden/peerN.*      expected final memory image
//   golden/stats.txt    expected counters
//   golden/requests.bin expected request packets, in per-QP order

#include <array>
#include <filesystem>
#include <map>

#include "snicsim/memory.hpp"
#include "snicsim/rdma.hpp"
#include "snicsim/wire.hpp"

namespace snicsim::testgen {

struct CaseFile {
  static constexpr std::uint16_t kUdpSport = 49152;

  struct Peer {
    wire::MacAddress mac{};
    std::uint32_t ip = 0;
  };
  struct RegionRow {
    std::uint32_t peer = 0;
    SpaceKind space = SpaceKind::Host;
    PhysicalAddress base = 0;
    std::uint64_t size = 0;
    std::uint32_t access = 0;
    std::uint32_t rkey = 0;
    bool victim = false;  // target of a send-with-invalidate; not imaged
  };
  struct QpRow {
    std::uint32_t qpn = 0;
    std::uint32_t depth = 0;
  };
  struct Wqe {
    std::uint32_t wrid = 0;
    rdma::WqeOpcode op = rdma::WqeOpcode::Write;
    PhysicalAddress local = 0;
    PhysicalAddress remote = 0;
    std::uint32_t length = 0;
    std::uint32_t rkey = 0;
    std::uint32_t immediate = 0;
    std::uint32_t invalidate_rkey = 0;
    Bytes payload;  // generator scratch, not serialized
  };
  struct Entry {
    std::uint32_t peer = 0;
    std::uint32_t qpn = 0;
    bool batch_mode = false;
    std::vector<Wqe> wqes;
  };
  struct RecvRow {
    std::uint32_t peer = 0;
    std::uint32_t qpn = 0;
    std::uint64_t wrid = 0;
    PhysicalAddress addr = 0;
    std::uint32_t length = 0;
  };

  std::string name;
  std::uint64_t seed = 0;
  std::uint32_t mtu = 4096;
  std::uint32_t initial_psn = 0;
  rdma::QpLocation location = rdma::QpLocation::HostMem;
  std::array<Peer, 2> peers;
  std::vector<RegionRow> regions;
  std::vector<QpRow> qps;
  std::vector<Entry> entries;
  std::vector<RecvRow> recvs;
  std::array<std::vector<wire::DumpRecord>, 2> stimulus;

  void write(const std::filesystem::path& dir) const;
  static CaseFile read(const std::filesystem::path& dir);
  /// Imaged (non-victim) regions of one peer, in file order.
  std::vector<mem::ImageRange> image_ranges(std::uint32_t peer) const;
};

using StatMap = std::map<std::string, std::uint64_t>;
void write_stats(const std::filesystem::path& path, const StatMap& stats);
/// Throws IoError on unreadable or malformed files.
StatMap read_stats(const std::filesystem::path& path);

}  // namespace snicsim::testgen

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

#include <utility>
#include <vector>

#include "snicsim/common.hpp"

namespace snicsim {

enum class SpaceKind { Host, Device };

/// Latency and bandwidth parameters of the NIC, its PCIe attachment and the
/// host CPU. Defaults are the calibrated values; see README "Timing model".
struct TimingModel {
  SimTime cycle_ns = 4;  // 250 MHz user clock

  // SQ WQE fetch from host memory through the PCIe slave bridge: the first
  // WQE of a doorbell returns after 170 cycles, later ones every 10 cycles.
  SimTime wqe_first_latency = 680;
  SimTime wqe_pipelined_latency = 40;

  // AXI4-Lite register access from the host CPU over PCIe.
  SimTime mmio_write_latency = 300;
  SimTime mmio_read_latency = 700;
  // Gap between consecutive CPU polls; the effective period is
  // max(poll_interval, mmio_read_latency).
  SimTime poll_interval = 700;
  SimTime interrupt_latency = 1500;

  // Requester transmit engine occupancy per WQE.
  SimTime engine_wqe_service = 300;

  // NIC-mastered host memory reads: latency by transfer size, linearly
  // interpolated between anchors; beyond the last anchor the latency grows
  // at host_mem_tail_bandwidth bytes/s.
  std::vector<std::pair<std::uint64_t, SimTime>> host_mem_access_table{{64, 600}, {2048, 964}};
  double host_mem_tail_bandwidth = 13.0e9;
  // NIC-mastered posted writes into host memory.
  SimTime host_write_latency = 300;

  // On-card DDR4.
  SimTime device_mem_latency = 200;
  double device_mem_bandwidth = 19.2e9;

  // Host-mastered DMA between host and device memory.
  SimTime dma_setup_latency = 1000;
  double dma_bandwidth_h2d = 13.07e9;
  double dma_bandwidth_d2h = 13.00e9;

  // Lookaside compute kernels.
  SimTime lc_cycle_ns = 4;
  std::uint32_t lc_array_latency_cycles = 16;
  std::uint32_t lc_bytes_per_cycle = 64;

  /// Throws InvalidArgument when a parameter is not strictly positive or the
  /// host access table is not monotone.
  void validate() const;

  SimTime host_mem_access(std::uint64_t bytes) const;
  /// Latency of a NIC-mastered read of `bytes` from the given memory.
  SimTime read_latency(SpaceKind space, std::uint64_t bytes) const;
  /// Latency of a NIC-mastered write of `bytes` into the given memory.
  SimTime write_latency(SpaceKind space, std::uint64_t bytes) const;
  /// Occupancy of the memory port for `bytes` (bandwidth term only).
  SimTime port_occupancy(SpaceKind space, std::uint64_t bytes) const;
  SimTime poll_period() const { return poll_interval > mmio_read_latency ? poll_interval : mmio_read_latency; }
};

/// Time to move `bytes` at `bytes_per_second`, rounded up to whole ns.
SimTime transfer_time(std::uint64_t bytes, double bytes_per_second);

struct LinkModel {
  double bandwidth_bps = 100e9;
  SimTime propagation_delay = 500;
  std::uint32_t frame_overhead_bytes = 24;  // preamble + SFD + IFG + FCS
  bool via_switch = false;
  SimTime switch_delay = 300;

  void validate() const;
  /// Wire occupancy of one frame, rounded up to whole ns.
  SimTime serialization(std::size_t frame_bytes) const;
};

/// In-order memory port with pipelined requests. A request issued at `now`
/// completes no earlier than its latency and no earlier than the previous
/// request plus the port occupancy of this one.
class MemoryPort {
 public:
  SimTime complete(SimTime now, SimTime latency, SimTime occupancy) {
    SimTime done = now + latency;
    if (last_done_ + occupancy > done) done = last_done_ + occupancy;
    last_done_ = done;
    return done;
  }
  SimTime last_done() const { return last_done_; }
  void reset() { last_done_ = 0; }

 private:
  SimTime last_done_ = 0;
};

}  // namespace snicsim

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

#include "snicsim/timing.hpp"

#include <cmath>

namespace snicsim {

SimTime transfer_time(std::uint64_t bytes, double bytes_per_second) {
  if (bytes == 0) return 0;
  return static_cast<SimTime>(std::ceil(static_cast<double>(bytes) * 1e9 / bytes_per_second - 1e-9));
}

void TimingModel::validate() const {
  auto positive = [](SimTime v, const char* name) {
    if (v == 0) fail(ErrorCode::InvalidArgument, std::string(name) + " must be positive");
  };
  positive(cycle_ns, "cycle_ns");
  positive(wqe_first_latency, "wqe_first_latency");
  positive(wqe_pipelined_latency, "wqe_pipelined_latency");
  positive(mmio_write_latency, "mmio_write_latency");
  positive(mmio_read_latency, "mmio_read_latency");
  positive(poll_interval, "poll_interval");
  positive(interrupt_latency, "interrupt_latency");
  positive(engine_wqe_service, "engine_wqe_service");
  positive(host_write_latency, "host_write_latency");
  positive(device_mem_latency, "device_mem_latency");
  positive(dma_setup_latency, "dma_setup_latency");
  positive(lc_cycle_ns, "lc_cycle_ns");
  positive(lc_array_latency_cycles, "lc_array_latency_cycles");
  positive(lc_bytes_per_cycle, "lc_bytes_per_cycle");
  for (double bw : {host_mem_tail_bandwidth, device_mem_bandwidth, dma_bandwidth_h2d,
                    dma_bandwidth_d2h}) {
    if (!(bw > 0)) fail(ErrorCode::InvalidArgument, "bandwidths must be positive");
  }
  if (host_mem_access_table.empty()) {
    fail(ErrorCode::InvalidArgument, "host_mem_access table is empty");
  }
  for (std::size_t i = 0; i < host_mem_access_table.size(); ++i) {
    positive(host_mem_access_table[i].second, "host_mem_access latency");
    if (i > 0 && (host_mem_access_table[i].first <= host_mem_access_table[i - 1].first ||
                  host_mem_access_table[i].second < host_mem_access_table[i - 1].second)) {
      fail(ErrorCode::InvalidArgument,
           "host_mem_access table must be strictly increasing in size and monotone in latency");
    }
  }
}

SimTime TimingModel::host_mem_access(std::uint64_t bytes) const {
  const auto& t = host_mem_access_table;
  if (bytes <= t.front().first) return t.front().second;
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (bytes <= t[i].first) {
      const double span = static_cast<double>(t[i].first - t[i - 1].first);
      const double frac = static_cast<double>(bytes - t[i - 1].first) / span;
      const double lat = static_cast<double>(t[i - 1].second) +
                         frac * static_cast<double>(t[i].second - t[i - 1].second);
      return static_cast<SimTime>(std::llround(lat));
    }
  }
  return t.back().second + transfer_time(bytes - t.back().first, host_mem_tail_bandwidth);
}

SimTime TimingModel::read_latency(SpaceKind space, std::uint64_t bytes) const {
  if (space == SpaceKind::Host) return host_mem_access(bytes);
  return device_mem_latency + transfer_time(bytes, device_mem_bandwidth);
}

SimTime TimingModel::write_latency(SpaceKind space, std::uint64_t bytes) const {
  if (space == SpaceKind::Host) {
    return host_write_latency + transfer_time(bytes, host_mem_tail_bandwidth);
  }
  return device_mem_latency + transfer_time(bytes, device_mem_bandwidth);
}

SimTime TimingModel::port_occupancy(SpaceKind space, std::uint64_t bytes) const {
  return transfer_time(bytes, space == SpaceKind::Host ? host_mem_tail_bandwidth
                                                       : device_mem_bandwidth);
}

void LinkModel::validate() const {
  if (!(bandwidth_bps > 0)) fail(ErrorCode::InvalidArgument, "link bandwidth must be positive");
  if (propagation_delay == 0) {
    fail(ErrorCode::InvalidArgument, "link propagation delay must be positive");
  }
}

SimTime LinkModel::serialization(std::size_t frame_bytes) const {
  const double bits = static_cast<double>(frame_bytes + frame_overhead_bytes) * 8.0;
  return static_cast<SimTime>(std::ceil(bits * 1e9 / bandwidth_bps - 1e-9));
}

}  // namespace snicsim

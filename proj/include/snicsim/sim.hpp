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

// Discrete-event core. One global queue ordered by (time, seq) drives two
// peers joined by a point-to-point link; the host CPU of each peer is a
// sequence of scheduled actions (doorbells, polls, control messages).

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <string>

#include "snicsim/compute.hpp"
#include "snicsim/memory.hpp"
#include "snicsim/rdma.hpp"
#include "snicsim/timing.hpp"
#include "snicsim/wire.hpp"

namespace snicsim::sim {

struct TraceRecord {
  SimTime time = 0;
  std::uint64_t seq = 0;
  std::uint32_t actor = 0;
  std::string kind;
  bool operator==(const TraceRecord&) const = default;
};

class EventQueue {
 public:
  using Action = std::function<void()>;

  /// Throws EventInPast when `time` < now(). Returns the event's seq.
  std::uint64_t schedule(SimTime time, std::uint32_t actor, std::string kind, Action action);

  SimTime now() const noexcept { return now_; }
  bool empty() const noexcept { return heap_.empty(); }
  std::size_t pending() const noexcept { return heap_.size(); }
  std::optional<SimTime> next_time() const;

  /// Dispatches the earliest event. False when the queue is empty.
  bool step();
  SimTime run_until_idle();
  /// Dispatches every event with time <= `limit`, then advances the clock to
  /// `limit` (never backwards).
  SimTime run_until(SimTime limit);

  void set_tracing(bool on) noexcept { tracing_ = on; }
  const std::vector<TraceRecord>& trace() const noexcept { return trace_; }
  std::uint64_t dispatched() const noexcept { return dispatched_; }

 private:
  struct Event {
    SimTime time;
    std::uint64_t seq;
    std::uint32_t actor;
    std::string kind;
    Action action;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };

  std::priority_queue<Event, std::vector<Event>, Later> heap_;
  SimTime now_ = 0;
  std::uint64_t next_seq_ = 0;
  std::uint64_t dispatched_ = 0;
  bool tracing_ = false;
  std::vector<TraceRecord> trace_;
};

/// One direction of a full-duplex cable. Frames serialize back to back in
/// submission order.
class Link {
 public:
  explicit Link(const LinkModel& model = {});

  /// Returns the arrival time at the far end of a frame handed to the MAC at
  /// `now`. In switch mode the frame is stored and forwarded once more.
  SimTime transmit(std::size_t frame_bytes, SimTime now);
  SimTime busy_until() const noexcept { return busy_until_; }
  const LinkModel& model() const noexcept { return model_; }
  std::uint64_t frames() const noexcept { return frames_; }
  std::uint64_t bytes() const noexcept { return bytes_; }

 private:
  LinkModel model_;
  SimTime busy_until_ = 0;
  std::uint64_t frames_ = 0;
  std::uint64_t bytes_ = 0;
};

struct PeerConfig {
  std::string name;
  wire::MacAddress mac{};
  std::uint32_t ip = 0;
  mem::MemoryConfig memory;
};

/// Host plus NIC: memories, registered regions, RDMA engine, lookaside and
/// streaming compute.
class Peer {
 public:
  Peer(std::uint32_t id, const PeerConfig& config, const TimingModel& timing);

  std::uint32_t id() const noexcept { return id_; }
  const PeerConfig& config() const noexcept { return config_; }

  /// Bump allocator for data buffers. Host buffers start at 4 GiB, device
  /// buffers at the bottom of device memory. Throws OutOfBounds.
  PhysicalAddress alloc(SpaceKind space, std::uint64_t bytes, std::uint64_t align = 64);

  mem::Crossbar memory;
  mem::RegionTable regions;
  rdma::Engine engine;
  compute::LookasideBlock lookaside;
  compute::ClassifierKernel classifier;

  std::uint64_t host_rx_frames = 0;
  std::uint64_t host_rx_bytes = 0;

 private:
  std::uint32_t id_;
  PeerConfig config_;
  PhysicalAddress next_[2];
};

/// Defaults of peer 0 and 1: 02:00:00:00:00:0{1,2}, 192.168.1.{1,2}.
PeerConfig default_peer(std::size_t index);

struct TestbedConfig {
  /// Empty means default_peer(0) and default_peer(1).
  std::vector<PeerConfig> peers;
  TimingModel timing;
  LinkModel link;
  bool trace = false;
  /// When set, every frame put on either link is recorded.
  bool capture = false;
};

struct PollResult {
  SimTime time = 0;  // poll that observed the last required completion
  std::uint32_t polls = 0;
  std::vector<rdma::CompletionEntry> completions;
};

/// Two peers (index 0 and 1) on one cable.
class Testbed {
 public:
  static constexpr std::uint32_t kCpuActor = 100;

  explicit Testbed(const TestbedConfig& config = {});
  Testbed(const Testbed&) = delete;
  Testbed& operator=(const Testbed&) = delete;

  Peer& peer(std::size_t index);
  EventQueue& events() noexcept { return events_; }
  SimTime now() const noexcept { return events_.now(); }
  const TestbedConfig& config() const noexcept { return config_; }
  Link& link(std::size_t from) { return links_.at(from); }

  /// Creates connected QPs `qpn_a` on peer 0 and `qpn_b` on peer 1.
  void connect(std::uint32_t qpn_a, std::uint32_t qpn_b, const rdma::QpConfig& base);

  /// Host CPU of `peer` writes the SQ doorbell at `at`.
  void ring_sq_doorbell(std::size_t peer, std::uint32_t qpn, std::uint32_t producer_idx,
                        SimTime at);
  /// Frame arriving from the wire at `peer` at `at` (e.g. non-RDMA traffic).
  void inject_frame(std::size_t peer, Bytes frame, SimTime at);
  /// Host CPU polls the CQ doorbell every poll period starting after
  /// `start` until `count` new completions are visible, then consumes them.
  /// Runs the event loop. Throws SimDeadlock when no further progress is
  /// possible.
  PollResult poll_cq_until(std::size_t peer, std::uint32_t qpn, std::uint32_t count,
                           SimTime start);

  /// Writes a control message at `at`; it reaches the FIFO after one MMIO
  /// write and the kernel advances inside the event loop.
  void lc_submit(std::size_t peer, std::uint32_t kernel_id, compute::ControlMessage msg,
                 SimTime at);
  compute::WaitResult lc_wait(std::size_t peer, std::uint32_t kernel_id, SimTime start);

  SimTime run_until_idle() { return events_.run_until_idle(); }

  const std::vector<wire::DumpRecord>& captured() const noexcept { return captured_; }
  std::uint64_t frames_dropped() const noexcept { return frames_dropped_; }

 private:
  void arm_requester(std::size_t peer);
  void send(std::size_t from, std::vector<rdma::EgressPacket> packets);
  void deliver(std::size_t to, Bytes frame);
  void arm_kernel(std::size_t peer, std::uint32_t kernel_id);

  std::map<std::pair<std::size_t, std::uint32_t>, SimTime> pending_kernel_;

  TestbedConfig config_;
  EventQueue events_;
  std::vector<std::unique_ptr<Peer>> peers_;
  std::vector<Link> links_;
  std::optional<SimTime> pending_wakeup_[2];
  std::vector<wire::DumpRecord> captured_;
  std::uint64_t frames_dropped_ = 0;
};

// ---------------------------------------------------------------------------
// Transfer scenarios: client (peer 0) drives `batch` WQEs of one opcode at
// the server (peer 1) and both sides verify the bytes that landed.

enum class RequestMode { Single, Batch };
std::string_view request_mode_name(RequestMode m) noexcept;
RequestMode parse_request_mode(std::string_view text);

struct ScenarioConfig {
  rdma::WqeOpcode op = rdma::WqeOpcode::Read;
  std::uint32_t payload_size = 4096;
  std::uint32_t batch = 1;
  RequestMode mode = RequestMode::Batch;
  std::uint32_t mtu = 4096;
  rdma::QpLocation location = rdma::QpLocation::HostMem;
  std::uint32_t client_ip = 0xc0a80101;  // 192.168.1.1
  std::uint32_t server_ip = 0xc0a80102;
  std::uint16_t udp_sport = 49152;
  std::uint32_t client_qpn = 2;
  std::uint32_t server_qpn = 2;
  std::uint32_t initial_psn = 0;
  std::uint64_t seed = 1;
  bool verify = true;
  TestbedConfig testbed;
};

struct ScenarioReport {
  bool verified = false;
  std::uint32_t wqes = 0;
  std::uint32_t completions = 0;         // successful requester CQEs
  std::uint32_t peer_completions = 0;    // successful responder CQEs
  std::uint64_t mismatched_bytes = 0;
  SimTime start = 0;
  SimTime end = 0;
  std::string failure;
  std::string client_stats;
  std::string server_stats;

  SimTime elapsed() const { return end - start; }
  /// Per-WQE latency: elapsed/batch for a batch, mean per request for single.
  double latency_ns = 0;
  double throughput_gbps = 0;
};

ScenarioReport run_scenario(const ScenarioConfig& config);

// ---------------------------------------------------------------------------
// Benchmark sweeps and CSV output.

struct MetricRecord {
  std::string op;
  std::string mode;
  std::uint64_t payload_bytes = 0;
  std::uint32_t batch = 0;
  SimTime start = 0;
  SimTime end = 0;
  double throughput_gbps = 0;
  double latency_ns = 0;
};
using MetricSeries = std::vector<MetricRecord>;

struct BenchScenario {
  rdma::WqeOpcode op = rdma::WqeOpcode::Read;
  std::vector<std::uint64_t> sizes;
  std::vector<RequestMode> modes{RequestMode::Single, RequestMode::Batch};
  std::uint32_t batch = 50;
  rdma::QpLocation location = rdma::QpLocation::HostMem;
  std::uint32_t mtu = 4096;
  TestbedConfig testbed;
};

/// One fresh testbed per (size, mode) point; rows ordered by mode then size.
/// Only read and write are accepted.
MetricSeries run_benchmark(const BenchScenario& scenario);
std::string format_series(const MetricSeries& series);
/// Throws InvalidArgument on an empty series, IoError on write failure.
void emit_series(const MetricSeries& series, const std::filesystem::path& path);

}  // namespace snicsim::sim

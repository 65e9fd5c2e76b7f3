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

// RDMA engine model: reliable-connection queue pairs whose SQ/RQ/CQ rings
// live in host or device memory, pipelined WQE fetch, requester
// packetization, responder execution and completion delivery.
//
// The engine is a timed state machine. Every entry point takes the current
// simulated time and returns packets stamped with the time they are ready
// for the MAC; the simulation core owns the clock and the link.

#include <deque>
#include <limits>
#include <map>
#include <optional>

#include "snicsim/memory.hpp"
#include "snicsim/timing.hpp"
#include "snicsim/wire.hpp"

namespace snicsim::rdma {

inline constexpr SimTime kForever = std::numeric_limits<SimTime>::max();

enum class WqeOpcode : std::uint8_t {
  Read = 0,
  Write = 1,
  Send = 2,
  WriteImmdt = 3,
  SendImmdt = 4,
  SendInvalidate = 5,
};

std::string_view wqe_opcode_name(WqeOpcode op) noexcept;
/// Accepts the names printed by wqe_opcode_name(). Throws InvalidArgument.
WqeOpcode parse_wqe_opcode(std::string_view text);
std::span<const WqeOpcode> all_wqe_opcodes() noexcept;
bool is_send_family(WqeOpcode op) noexcept;

/// Send-queue descriptor. Ring layout is 64 bytes, little-endian:
///   0 wrid u64 | 8 local_addr u64 | 16 remote_addr u64 | 24 length u32
///   | 28 rkey u32 | 32 opcode u8 | 36 immediate u32 | 40 invalidate_rkey u32
struct WorkQueueElement {
  static constexpr std::size_t kBytes = 64;

  std::uint64_t wrid = 0;
  WqeOpcode opcode = WqeOpcode::Write;
  PhysicalAddress local_addr = 0;
  std::uint32_t length = 0;
  PhysicalAddress remote_addr = 0;
  std::uint32_t rkey = 0;
  std::uint32_t immediate = 0;
  std::uint32_t invalidate_rkey = 0;

  bool operator==(const WorkQueueElement&) const = default;

  Bytes encode() const;
  /// Throws InvalidArgument on an unknown opcode byte.
  static WorkQueueElement decode(ByteView bytes);
};

/// Receive-queue descriptor, 32 bytes: wrid u64 | local_addr u64 | length u32.
struct ReceiveQueueEntry {
  static constexpr std::size_t kBytes = 32;

  std::uint64_t wrid = 0;
  PhysicalAddress local_addr = 0;
  std::uint32_t length = 0;

  bool operator==(const ReceiveQueueEntry&) const = default;

  Bytes encode() const;
  static ReceiveQueueEntry decode(ByteView bytes);
};

enum class CompletionStatus : std::uint8_t {
  Success = 0,
  LocalAccessError,
  RemoteAccessError,
  RemoteInvalidRequest,
  RemoteOperationalError,
  LengthError,
  ReceiverNotReady,
  SequenceError,
  Flushed,
};
std::string_view completion_status_name(CompletionStatus s) noexcept;

/// Requester completions use the WQE opcodes; responder completions use the
/// Recv* values.
enum class WcOpcode : std::uint8_t {
  Read = 0,
  Write,
  Send,
  WriteImmdt,
  SendImmdt,
  SendInvalidate,
  Recv,
  RecvImmdt,
  RecvWriteImmdt,
  RecvInvalidate,
};
std::string_view wc_opcode_name(WcOpcode op) noexcept;
WcOpcode wc_opcode_for(WqeOpcode op) noexcept;

/// Completion-queue entry, 32 bytes: wrid u64 | byte_count u32 | immediate u32
/// | status u8 | opcode u8 | flags u8 (bit0 imm, bit1 inv) | pad | qpn u32
/// | invalidated_rkey u32.
struct CompletionEntry {
  static constexpr std::size_t kBytes = 32;

  std::uint64_t wrid = 0;
  CompletionStatus status = CompletionStatus::Success;
  WcOpcode opcode = WcOpcode::Write;
  std::uint32_t byte_count = 0;
  std::optional<std::uint32_t> immediate;
  std::uint32_t qpn = 0;
  std::optional<std::uint32_t> invalidated_rkey;

  bool operator==(const CompletionEntry&) const = default;

  Bytes encode() const;
  static CompletionEntry decode(ByteView bytes);
};

enum class QpLocation { HostMem, DevMem };
std::string_view qp_location_name(QpLocation loc) noexcept;
/// Accepts "host_mem" / "dev_mem". Throws InvalidArgument.
QpLocation parse_qp_location(std::string_view text);
inline SpaceKind space_of(QpLocation loc) noexcept {
  return loc == QpLocation::HostMem ? SpaceKind::Host : SpaceKind::Device;
}

enum class QpState { Ready, Error };

struct QpConfig {
  std::uint32_t qpn = 1;
  std::uint32_t dest_ip = 0;
  wire::MacAddress dest_mac{};
  std::uint32_t dest_qpn = 1;
  std::uint32_t mtu = 4096;
  QpLocation location = QpLocation::HostMem;
  std::uint32_t sq_depth = 128;
  std::uint32_t rq_depth = 128;
  std::uint32_t cq_depth = 128;
  std::uint32_t initial_psn = 0;
  std::uint32_t peer_initial_psn = 0;
  std::uint16_t udp_sport = 49152;
};

/// Addressing of the NIC that owns an engine.
struct NicIdentity {
  wire::MacAddress mac{};
  std::uint32_t ip = 0;
  std::uint16_t roce_port = wire::kRoceV2Port;
  std::uint16_t partition_key = 0xffff;
  std::uint8_t ttl = 64;
};

/// 24-bit PSN helpers.
inline std::uint32_t psn_add(std::uint32_t psn, std::uint32_t n) { return (psn + n) & wire::kPsnMask; }
/// Signed distance a - b in 24-bit serial arithmetic.
inline std::int32_t psn_diff(std::uint32_t a, std::uint32_t b) {
  return static_cast<std::int32_t>(((a - b) & wire::kPsnMask) << 8) >> 8;
}

/// Number of packets a message of `length` bytes occupies at `mtu`.
inline std::uint32_t packet_count(std::uint64_t length, std::uint32_t mtu) {
  return length == 0 ? 1u : static_cast<std::uint32_t>(ceil_div(length, mtu));
}

struct QueuePair {
  QpConfig config;
  PhysicalAddress sq_base = 0;
  PhysicalAddress rq_base = 0;
  PhysicalAddress cq_base = 0;

  // Free-running ring counters; slot = counter % depth.
  std::uint32_t sq_posted = 0;         // written by software, not yet rung
  std::uint32_t sq_producer_idx = 0;   // last value written to the SQ doorbell
  std::uint32_t sq_consumer_idx = 0;   // WQEs fetched by the engine
  std::uint32_t rq_producer_idx = 0;
  std::uint32_t rq_consumer_idx = 0;
  std::uint32_t cq_producer_idx = 0;   // CQEs written
  std::uint32_t cq_consumer_idx = 0;   // CQEs polled

  std::uint32_t sq_psn = 0;
  std::uint32_t expected_psn = 0;
  std::uint32_t msn = 0;
  QpState state = QpState::Ready;

  struct PendingFetch {
    std::uint32_t index;
    SimTime done;
  };
  struct Outstanding {
    WorkQueueElement wqe;
    std::uint32_t first_psn = 0;
    std::uint32_t npkts = 1;
    std::uint32_t next_response_psn = 0;
    SimTime data_done = 0;
    std::uint32_t last_psn() const { return psn_add(first_psn, npkts - 1); }
  };
  struct InboundMessage {
    bool is_write = false;
    PhysicalAddress base = 0;
    std::uint64_t total = 0;   // RETH length for writes, RQE length for sends
    std::uint64_t offset = 0;
    std::optional<ReceiveQueueEntry> rqe;
    SimTime rqe_ready = 0;
  };

  std::deque<PendingFetch> fetches;
  std::deque<Outstanding> outstanding;
  std::deque<SimTime> cq_visible_at;  // per unpolled CQE, in ring order
  std::optional<InboundMessage> inbound;
  SimTime last_fetch_done = 0;
  SimTime last_cqe_done = 0;
  SimTime response_floor = 0;  // responder packets leave in PSN order
};

/// Requester-side packet leaving the engine.
struct EgressPacket {
  SimTime ready = 0;
  wire::RocePacket packet;
};

struct FetchRecord {
  std::uint32_t qpn = 0;
  std::uint32_t index = 0;
  SimTime doorbell = 0;  // time the doorbell write reached the NIC
  SimTime done = 0;
};

class Engine {
 public:
  Engine(mem::Crossbar& memory, mem::RegionTable& regions, const TimingModel& timing,
         NicIdentity identity);

  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  /// Allocates and zeroes the rings at the configured location.
  /// Throws DuplicateQpn, InvalidArgument.
  QueuePair& create_qp(const QpConfig& config);
  bool has_qp(std::uint32_t qpn) const noexcept { return qps_.count(qpn) != 0; }
  QueuePair& qp(std::uint32_t qpn);
  const QueuePair& qp(std::uint32_t qpn) const;
  const std::map<std::uint32_t, QueuePair>& qps() const noexcept { return qps_; }

  /// Writes the WQE into SQ ring memory; does not touch the doorbell.
  /// Returns the ring slot. Throws QueueFull.
  std::uint32_t post_wqe(std::uint32_t qpn, const WorkQueueElement& wqe);
  /// Writes the RQE into RQ ring memory and advances the RQ producer.
  std::uint32_t post_recv(std::uint32_t qpn, const ReceiveQueueEntry& rqe);

  /// CPU writes `new_producer_idx` to the SQ doorbell at `now`. The write
  /// lands after mmio_write_latency and schedules pipelined fetches of the
  /// newly exposed WQEs. Returns the earliest fetch completion, if any.
  /// Throws IndexRegression, InvalidArgument (index beyond posted WQEs).
  std::optional<SimTime> ring_sq_doorbell(std::uint32_t qpn, std::uint32_t new_producer_idx,
                                          SimTime now);

  /// Processes every WQE whose fetch has completed by `now`.
  std::vector<EgressPacket> requester_step(SimTime now);
  std::optional<SimTime> next_requester_wakeup() const;

  /// Handles an inbound request (SEND/WRITE/READ request).
  std::vector<EgressPacket> responder_step(const wire::RocePacket& packet, SimTime now);
  /// Handles an inbound ACK/NAK or read response on the requester side.
  void process_ack(const wire::RocePacket& packet, SimTime now);
  /// Dispatches an inbound RDMA packet to responder_step or process_ack.
  std::vector<EgressPacket> receive(const wire::RocePacket& packet, SimTime now);

  /// Number of CQEs visible to a CQ doorbell read at `now` (free-running).
  std::uint32_t cq_doorbell(std::uint32_t qpn, SimTime now = kForever) const;
  /// Earliest time after `now` at which another CQE becomes visible.
  std::optional<SimTime> next_cq_visibility(std::uint32_t qpn, SimTime now) const;
  /// Consumes up to `max` CQEs visible at `now`, decoding them from ring memory.
  std::vector<CompletionEntry> poll_cq(std::uint32_t qpn, std::uint32_t max,
                                       SimTime now = kForever);

  const std::map<std::string, std::uint64_t>& stats() const noexcept { return stats_; }
  std::uint64_t stat(const std::string& key) const;
  /// Flat "key value" text, one counter per line in key order.
  std::string stats_dump() const;

  const std::vector<FetchRecord>& fetch_log() const noexcept { return fetch_log_; }
  const NicIdentity& identity() const noexcept { return identity_; }
  mem::Crossbar& memory() noexcept { return memory_; }
  mem::RegionTable& regions() noexcept { return regions_; }
  const TimingModel& timing() const noexcept { return timing_; }

 private:
  PhysicalAddress allocate_ring(SpaceKind space, std::uint64_t bytes);
  wire::RocePacket make_packet(const QueuePair& qp, wire::Opcode op, std::uint32_t psn) const;
  void emit(std::vector<EgressPacket>& out, SimTime ready, wire::RocePacket packet);
  void complete(QueuePair& qp, CompletionEntry cqe, SimTime earliest);
  void process_wqe(QueuePair& qp, const WorkQueueElement& wqe, SimTime fetched,
                   std::vector<EgressPacket>& out);
  std::vector<EgressPacket> respond_read(QueuePair& qp, const wire::RocePacket& p, SimTime now);
  std::vector<EgressPacket> respond_write(QueuePair& qp, const wire::RocePacket& p, SimTime now);
  std::vector<EgressPacket> respond_send(QueuePair& qp, const wire::RocePacket& p, SimTime now);
  wire::RocePacket make_ack(QueuePair& qp, std::uint32_t psn, std::uint8_t syndrome) const;
  void nak(QueuePair& qp, std::vector<EgressPacket>& out, std::uint32_t psn,
           std::uint8_t syndrome, SimTime now, bool fatal);
  std::optional<ReceiveQueueEntry> take_rqe(QueuePair& qp, SimTime now, SimTime& ready);
  void flush_outstanding(QueuePair& qp, SimTime now);
  SimTime response_time(QueuePair& qp, SimTime ready);
  void bump(const std::string& key, std::uint64_t n = 1) { stats_[key] += n; }

  mem::Crossbar& memory_;
  mem::RegionTable& regions_;
  TimingModel timing_;
  NicIdentity identity_;
  std::map<std::uint32_t, QueuePair> qps_;
  std::map<std::string, std::uint64_t> stats_;
  std::vector<FetchRecord> fetch_log_;
  SimTime tx_free_ = 0;
  MemoryPort read_port_[2];
  MemoryPort write_port_[2];
  PhysicalAddress ring_top_[2];
};

}  // namespace snicsim::rdma

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

#include "snicsim/rdma.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace snicsim::rdma {

using wire::Opcode;

namespace {

constexpr WqeOpcode kAllOpcodes[] = {WqeOpcode::Read,       WqeOpcode::Write,
                                     WqeOpcode::Send,       WqeOpcode::WriteImmdt,
                                     WqeOpcode::SendImmdt,  WqeOpcode::SendInvalidate};

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

Opcode segment_opcode(WqeOpcode op, std::uint32_t i, std::uint32_t n) {
  const bool only = n == 1;
  const bool first = i == 0;
  const bool last = i + 1 == n;
  switch (op) {
    case WqeOpcode::Write:
    case WqeOpcode::WriteImmdt: {
      const bool imm = op == WqeOpcode::WriteImmdt;
      if (only) return imm ? Opcode::RdmaWriteOnlyWithImmediate : Opcode::RdmaWriteOnly;
      if (first) return Opcode::RdmaWriteFirst;
      if (last) return imm ? Opcode::RdmaWriteLastWithImmediate : Opcode::RdmaWriteLast;
      return Opcode::RdmaWriteMiddle;
    }
    case WqeOpcode::Send:
      if (only) return Opcode::SendOnly;
      if (first) return Opcode::SendFirst;
      return last ? Opcode::SendLast : Opcode::SendMiddle;
    case WqeOpcode::SendImmdt:
      if (only) return Opcode::SendOnlyWithImmediate;
      if (first) return Opcode::SendFirst;
      return last ? Opcode::SendLastWithImmediate : Opcode::SendMiddle;
    case WqeOpcode::SendInvalidate:
      if (only) return Opcode::SendOnlyWithInvalidate;
      if (first) return Opcode::SendFirst;
      return last ? Opcode::SendLastWithInvalidate : Opcode::SendMiddle;
    case WqeOpcode::Read:
      break;
  }
  return Opcode::RdmaReadRequest;
}

bool is_write_opcode(Opcode op) {
  return op >= Opcode::RdmaWriteFirst && op <= Opcode::RdmaWriteOnlyWithImmediate;
}

CompletionStatus status_for_syndrome(std::uint8_t syn) {
  if (wire::syndrome::is_rnr(syn)) return CompletionStatus::ReceiverNotReady;
  switch (syn) {
    case wire::syndrome::kNakPsnSequenceError: return CompletionStatus::SequenceError;
    case wire::syndrome::kNakInvalidRequest: return CompletionStatus::RemoteInvalidRequest;
    case wire::syndrome::kNakRemoteAccessError: return CompletionStatus::RemoteAccessError;
    default: return CompletionStatus::RemoteOperationalError;
  }
}

}  // namespace

std::string_view wqe_opcode_name(WqeOpcode op) noexcept {
  switch (op) {
    case WqeOpcode::Read: return "read";
    case WqeOpcode::Write: return "write";
    case WqeOpcode::Send: return "send";
    case WqeOpcode::WriteImmdt: return "write_imm";
    case WqeOpcode::SendImmdt: return "send_imm";
    case WqeOpcode::SendInvalidate: return "send_inv";
  }
  return "unknown";
}

WqeOpcode parse_wqe_opcode(std::string_view text) {
  for (auto op : kAllOpcodes) {
    if (wqe_opcode_name(op) == text) return op;
  }
  fail(ErrorCode::InvalidArgument, "unknown RDMA operation '" + std::string(text) + "'");
}

std::span<const WqeOpcode> all_wqe_opcodes() noexcept { return kAllOpcodes; }

bool is_send_family(WqeOpcode op) noexcept {
  return op == WqeOpcode::Send || op == WqeOpcode::SendImmdt || op == WqeOpcode::SendInvalidate;
}

Bytes WorkQueueElement::encode() const {
  Bytes b(kBytes, 0);
  put_le64(b.data(), wrid);
  put_le64(b.data() + 8, local_addr);
  put_le64(b.data() + 16, remote_addr);
  put_le32(b.data() + 24, length);
  put_le32(b.data() + 28, rkey);
  b[32] = static_cast<std::uint8_t>(opcode);
  put_le32(b.data() + 36, immediate);
  put_le32(b.data() + 40, invalidate_rkey);
  return b;
}

WorkQueueElement WorkQueueElement::decode(ByteView b) {
  if (b.size() < kBytes) fail(ErrorCode::InvalidArgument, "short WQE");
  if (b[32] > static_cast<std::uint8_t>(WqeOpcode::SendInvalidate)) {
    fail(ErrorCode::InvalidArgument, "WQE opcode byte " + std::to_string(b[32]));
  }
  WorkQueueElement w;
  w.wrid = get_le64(b.data());
  w.local_addr = get_le64(b.data() + 8);
  w.remote_addr = get_le64(b.data() + 16);
  w.length = get_le32(b.data() + 24);
  w.rkey = get_le32(b.data() + 28);
  w.opcode = static_cast<WqeOpcode>(b[32]);
  w.immediate = get_le32(b.data() + 36);
  w.invalidate_rkey = get_le32(b.data() + 40);
  return w;
}

Bytes ReceiveQueueEntry::encode() const {
  Bytes b(kBytes, 0);
  put_le64(b.data(), wrid);
  put_le64(b.data() + 8, local_addr);
  put_le32(b.data() + 16, length);
  return b;
}

ReceiveQueueEntry ReceiveQueueEntry::decode(ByteView b) {
  if (b.size() < kBytes) fail(ErrorCode::InvalidArgument, "short RQE");
  return {get_le64(b.data()), get_le64(b.data() + 8), get_le32(b.data() + 16)};
}

std::string_view completion_status_name(CompletionStatus s) noexcept {
  switch (s) {
    case CompletionStatus::Success: return "success";
    case CompletionStatus::LocalAccessError: return "local_access_error";
    case CompletionStatus::RemoteAccessError: return "remote_access_error";
    case CompletionStatus::RemoteInvalidRequest: return "remote_invalid_request";
    case CompletionStatus::RemoteOperationalError: return "remote_operational_error";
    case CompletionStatus::LengthError: return "length_error";
    case CompletionStatus::ReceiverNotReady: return "receiver_not_ready";
    case CompletionStatus::SequenceError: return "sequence_error";
    case CompletionStatus::Flushed: return "flushed";
  }
  return "unknown";
}

std::string_view wc_opcode_name(WcOpcode op) noexcept {
  switch (op) {
    case WcOpcode::Read: return "read";
    case WcOpcode::Write: return "write";
    case WcOpcode::Send: return "send";
    case WcOpcode::WriteImmdt: return "write_imm";
    case WcOpcode::SendImmdt: return "send_imm";
    case WcOpcode::SendInvalidate: return "send_inv";
    case WcOpcode::Recv: return "recv";
    case WcOpcode::RecvImmdt: return "recv_imm";
    case WcOpcode::RecvWriteImmdt: return "recv_write_imm";
    case WcOpcode::RecvInvalidate: return "recv_inv";
  }
  return "unknown";
}

WcOpcode wc_opcode_for(WqeOpcode op) noexcept {
  return static_cast<WcOpcode>(static_cast<std::uint8_t>(op));
}

Bytes CompletionEntry::encode() const {
  Bytes b(kBytes, 0);
  put_le64(b.data(), wrid);
  put_le32(b.data() + 8, byte_count);
  put_le32(b.data() + 12, immediate.value_or(0));
  b[16] = static_cast<std::uint8_t>(status);
  b[17] = static_cast<std::uint8_t>(opcode);
  b[18] = static_cast<std::uint8_t>((immediate ? 1 : 0) | (invalidated_rkey ? 2 : 0));
  put_le32(b.data() + 20, qpn);
  put_le32(b.data() + 24, invalidated_rkey.value_or(0));
  return b;
}

CompletionEntry CompletionEntry::decode(ByteView b) {
  if (b.size() < kBytes) fail(ErrorCode::InvalidArgument, "short CQE");
  CompletionEntry c;
  c.wrid = get_le64(b.data());
  c.byte_count = get_le32(b.data() + 8);
  if (b[18] & 1) c.immediate = get_le32(b.data() + 12);
  c.status = static_cast<CompletionStatus>(b[16]);
  c.opcode = static_cast<WcOpcode>(b[17]);
  c.qpn = get_le32(b.data() + 20);
  if (b[18] & 2) c.invalidated_rkey = get_le32(b.data() + 24);
  return c;
}

std::string_view qp_location_name(QpLocation loc) noexcept {
  return loc == QpLocation::HostMem ? "host_mem" : "dev_mem";
}

QpLocation parse_qp_location(std::string_view text) {
  if (text == "host_mem") return QpLocation::HostMem;
  if (text == "dev_mem") return QpLocation::DevMem;
  fail(ErrorCode::InvalidArgument,
       "QP location must be host_mem or dev_mem, got '" + std::string(text) + "'");
}

Engine::Engine(mem::Crossbar& memory, mem::RegionTable& regions, const TimingModel& timing,
               NicIdentity identity)
    : memory_(memory), regions_(regions), timing_(timing), identity_(identity) {
  timing_.validate();
  for (auto kind : {SpaceKind::Host, SpaceKind::Device}) {
    const auto& s = memory_.space(kind);
    ring_top_[static_cast<int>(kind)] = s.base() + s.size();
  }
}

PhysicalAddress Engine::allocate_ring(SpaceKind space, std::uint64_t bytes) {
  const auto& s = memory_.space(space);
  const std::uint64_t aligned = ceil_div(bytes, 4096) * 4096;
  PhysicalAddress& top = ring_top_[static_cast<int>(space)];
  if (top - s.base() < aligned) {
    fail(ErrorCode::OutOfBounds, "no room for queue rings in " +
                                     std::string(mem::space_name(space)) + " memory");
  }
  top -= aligned;
  return top;
}

QueuePair& Engine::create_qp(const QpConfig& config) {
  if (qps_.count(config.qpn)) {
    fail(ErrorCode::DuplicateQpn, "QP " + std::to_string(config.qpn) + " already exists");
  }
  if (config.qpn > wire::kQpnMask || config.dest_qpn > wire::kQpnMask) {
    fail(ErrorCode::InvalidArgument, "QP numbers are 24-bit");
  }
  if (config.mtu < 256 || config.mtu > 4096 || (config.mtu & (config.mtu - 1)) != 0) {
    fail(ErrorCode::InvalidArgument, "MTU must be one of 256, 512, 1024, 2048, 4096");
  }
  if (config.sq_depth == 0 || config.rq_depth == 0 || config.cq_depth == 0) {
    fail(ErrorCode::InvalidArgument, "ring depths must be positive");
  }
  QueuePair qp;
  qp.config = config;
  const SpaceKind space = space_of(config.location);
  qp.sq_base = allocate_ring(space, std::uint64_t{config.sq_depth} * WorkQueueElement::kBytes);
  qp.rq_base = allocate_ring(space, std::uint64_t{config.rq_depth} * ReceiveQueueEntry::kBytes);
  qp.cq_base = allocate_ring(space, std::uint64_t{config.cq_depth} * CompletionEntry::kBytes);
  auto& s = memory_.space(space);
  s.fill(qp.sq_base, std::uint64_t{config.sq_depth} * WorkQueueElement::kBytes, 0);
  s.fill(qp.rq_base, std::uint64_t{config.rq_depth} * ReceiveQueueEntry::kBytes, 0);
  s.fill(qp.cq_base, std::uint64_t{config.cq_depth} * CompletionEntry::kBytes, 0);
  qp.sq_psn = config.initial_psn & wire::kPsnMask;
  qp.expected_psn = config.peer_initial_psn & wire::kPsnMask;
  bump("qps_created");
  return qps_.emplace(config.qpn, std::move(qp)).first->second;
}

QueuePair& Engine::qp(std::uint32_t qpn) {
  auto it = qps_.find(qpn);
  if (it == qps_.end()) fail(ErrorCode::UnknownQpn, "no QP " + std::to_string(qpn));
  return it->second;
}

const QueuePair& Engine::qp(std::uint32_t qpn) const {
  auto it = qps_.find(qpn);
  if (it == qps_.end()) fail(ErrorCode::UnknownQpn, "no QP " + std::to_string(qpn));
  return it->second;
}

std::uint32_t Engine::post_wqe(std::uint32_t qpn, const WorkQueueElement& wqe) {
  auto& q = qp(qpn);
  if (q.sq_posted - q.sq_consumer_idx >= q.config.sq_depth) {
    fail(ErrorCode::QueueFull, "SQ of QP " + std::to_string(qpn) + " is full");
  }
  const std::uint32_t slot = q.sq_posted % q.config.sq_depth;
  memory_.write(q.sq_base + std::uint64_t{slot} * WorkQueueElement::kBytes, wqe.encode());
  ++q.sq_posted;
  return slot;
}

std::uint32_t Engine::post_recv(std::uint32_t qpn, const ReceiveQueueEntry& rqe) {
  auto& q = qp(qpn);
  if (q.rq_producer_idx - q.rq_consumer_idx >= q.config.rq_depth) {
    fail(ErrorCode::QueueFull, "RQ of QP " + std::to_string(qpn) + " is full");
  }
  const std::uint32_t slot = q.rq_producer_idx % q.config.rq_depth;
  memory_.write(q.rq_base + std::uint64_t{slot} * ReceiveQueueEntry::kBytes, rqe.encode());
  ++q.rq_producer_idx;
  return slot;
}

std::optional<SimTime> Engine::ring_sq_doorbell(std::uint32_t qpn, std::uint32_t new_producer_idx,
                                                SimTime now) {
  auto& q = qp(qpn);
  if (static_cast<std::int32_t>(new_producer_idx - q.sq_producer_idx) < 0) {
    fail(ErrorCode::IndexRegression, "SQ doorbell moved from " +
                                         std::to_string(q.sq_producer_idx) + " back to " +
                                         std::to_string(new_producer_idx));
  }
  if (static_cast<std::int32_t>(q.sq_posted - new_producer_idx) < 0) {
    fail(ErrorCode::InvalidArgument, "SQ doorbell " + std::to_string(new_producer_idx) +
                                         " is beyond the " + std::to_string(q.sq_posted) +
                                         " posted WQEs");
  }
  bump("doorbells");
  const SimTime arrival = now + timing_.mmio_write_latency;
  const SimTime first = q.config.location == QpLocation::HostMem
                            ? timing_.wqe_first_latency
                            : timing_.read_latency(SpaceKind::Device, WorkQueueElement::kBytes);
  std::optional<SimTime> earliest;
  for (std::uint32_t idx = q.sq_producer_idx, i = 0; idx != new_producer_idx; ++idx, ++i) {
    SimTime done = arrival + first + SimTime{i} * timing_.wqe_pipelined_latency;
    done = std::max(done, q.last_fetch_done + timing_.wqe_pipelined_latency);
    q.last_fetch_done = done;
    q.fetches.push_back({idx, done});
    fetch_log_.push_back({qpn, idx, arrival, done});
    if (!earliest) earliest = done;
  }
  q.sq_producer_idx = new_producer_idx;
  return earliest;
}

std::optional<SimTime> Engine::next_requester_wakeup() const {
  std::optional<SimTime> next;
  for (const auto& [qpn, q] : qps_) {
    if (!q.fetches.empty() && (!next || q.fetches.front().done < *next)) {
      next = q.fetches.front().done;
    }
  }
  return next;
}

std::vector<EgressPacket> Engine::requester_step(SimTime now) {
  std::vector<EgressPacket> out;
  for (;;) {
    QueuePair* pick = nullptr;
    for (auto& [qpn, q] : qps_) {
      if (q.fetches.empty() || q.fetches.front().done > now) continue;
      if (!pick || q.fetches.front().done < pick->fetches.front().done) pick = &q;
    }
    if (!pick) break;
    const auto fetch = pick->fetches.front();
    pick->fetches.pop_front();
    const std::uint32_t slot = fetch.index % pick->config.sq_depth;
    const Bytes raw =
        memory_.read(pick->sq_base + std::uint64_t{slot} * WorkQueueElement::kBytes,
                     WorkQueueElement::kBytes);
    ++pick->sq_consumer_idx;
    bump("wqes_fetched");
    const SimTime start = std::max(fetch.done, tx_free_);
    tx_free_ = start + timing_.engine_wqe_service;
    WorkQueueElement wqe;
    try {
      wqe = WorkQueueElement::decode(raw);
    } catch (const Error&) {
      CompletionEntry cqe;
      cqe.wrid = get_le64(raw.data());
      cqe.status = CompletionStatus::LocalAccessError;
      cqe.qpn = pick->config.qpn;
      complete(*pick, cqe, tx_free_);
      continue;
    }
    process_wqe(*pick, wqe, start, out);
  }
  return out;
}

wire::RocePacket Engine::make_packet(const QueuePair& q, Opcode op, std::uint32_t psn) const {
  wire::RocePacket p;
  p.eth.dst_mac = q.config.dest_mac;
  p.eth.src_mac = identity_.mac;
  p.ip.src_ip = identity_.ip;
  p.ip.dst_ip = q.config.dest_ip;
  p.ip.ttl = identity_.ttl;
  p.udp.src_port = q.config.udp_sport;
  p.udp.dst_port = identity_.roce_port;
  p.bth.opcode = op;
  p.bth.partition_key = identity_.partition_key;
  p.bth.dest_qp = q.config.dest_qpn;
  p.bth.psn = psn & wire::kPsnMask;
  return p;
}

void Engine::emit(std::vector<EgressPacket>& out, SimTime ready, wire::RocePacket packet) {
  packet.bth.pad_count = wire::pad_for(packet.payload.size());
  const std::size_t frame = wire::frame_size(packet);
  packet.udp.length = static_cast<std::uint16_t>(frame - wire::kEthHeaderBytes - wire::kIpv4HeaderBytes);
  packet.ip.total_length = static_cast<std::uint16_t>(frame - wire::kEthHeaderBytes);
  bump("packets_out");
  bump("tx_" + lower(wire::opcode_name(packet.bth.opcode)));
  bump("bytes_out", frame);
  out.push_back({ready, std::move(packet)});
}

void Engine::complete(QueuePair& q, CompletionEntry cqe, SimTime earliest) {
  cqe.qpn = q.config.qpn;
  if (q.cq_producer_idx - q.cq_consumer_idx >= q.config.cq_depth) {
    bump("cq_overflow");
    q.state = QpState::Error;
    return;
  }
  const SpaceKind space = space_of(q.config.location);
  SimTime done = earliest + timing_.write_latency(space, CompletionEntry::kBytes);
  if (q.cq_producer_idx != 0 || q.last_cqe_done != 0) {
    done = std::max(done, q.last_cqe_done + timing_.wqe_pipelined_latency);
  }
  q.last_cqe_done = done;
  const std::uint32_t slot = q.cq_producer_idx % q.config.cq_depth;
  memory_.write(q.cq_base + std::uint64_t{slot} * CompletionEntry::kBytes, cqe.encode());
  ++q.cq_producer_idx;
  q.cq_visible_at.push_back(done);
  bump(cqe.status == CompletionStatus::Success ? "completions" : "completion_errors");
}

void Engine::process_wqe(QueuePair& q, const WorkQueueElement& wqe, SimTime start,
                         std::vector<EgressPacket>& out) {
  const SimTime issued = start + timing_.engine_wqe_service;
  auto finish_local = [&](CompletionStatus status) {
    CompletionEntry cqe;
    cqe.wrid = wqe.wrid;
    cqe.status = status;
    cqe.opcode = wc_opcode_for(wqe.opcode);
    complete(q, cqe, issued);
  };
  if (q.state == QpState::Error) {
    finish_local(CompletionStatus::Flushed);
    return;
  }
  if (wqe.length > 0 && !memory_.contains(wqe.local_addr, wqe.length)) {
    bump("local_access_errors");
    finish_local(CompletionStatus::LocalAccessError);
    return;
  }

  const std::uint32_t mtu = q.config.mtu;
  const std::uint32_t npkts = packet_count(wqe.length, mtu);
  if (wqe.opcode == WqeOpcode::Read) {
    auto p = make_packet(q, Opcode::RdmaReadRequest, q.sq_psn);
    p.reth = wire::Reth{wqe.remote_addr, wqe.rkey, wqe.length};
    q.outstanding.push_back({wqe, q.sq_psn, npkts, q.sq_psn, 0});
    q.sq_psn = psn_add(q.sq_psn, npkts);
    emit(out, issued, std::move(p));
    return;
  }

  SimTime ready = issued;
  Bytes data;
  if (wqe.length > 0) {
    const SpaceKind space = memory_.route(wqe.local_addr);
    const SimTime done = read_port_[static_cast<int>(space)].complete(
        start, timing_.read_latency(space, wqe.length), timing_.port_occupancy(space, wqe.length));
    ready = std::max(ready, done);
    data = memory_.read(wqe.local_addr, wqe.length);
  }
  const bool is_write = wqe.opcode == WqeOpcode::Write || wqe.opcode == WqeOpcode::WriteImmdt;
  const std::uint32_t first_psn = q.sq_psn;
  for (std::uint32_t i = 0; i < npkts; ++i) {
    auto p = make_packet(q, segment_opcode(wqe.opcode, i, npkts), q.sq_psn);
    const std::size_t begin = std::size_t{i} * mtu;
    const std::size_t end = std::min<std::size_t>(begin + mtu, data.size());
    if (begin < end) p.payload.assign(data.begin() + begin, data.begin() + end);
    const auto headers = wire::required_headers(p.bth.opcode);
    if (headers.reth && is_write) p.reth = wire::Reth{wqe.remote_addr, wqe.rkey, wqe.length};
    if (headers.immdt) p.immdt = wire::ImmDt{wqe.immediate};
    if (headers.ieth) p.ieth = wire::Ieth{wqe.invalidate_rkey};
    p.bth.ack_request = i + 1 == npkts;
    p.bth.solicited_event = i + 1 == npkts && wqe.opcode != WqeOpcode::Write;
    emit(out, ready, std::move(p));
    q.sq_psn = psn_add(q.sq_psn, 1);
  }
  q.outstanding.push_back({wqe, first_psn, npkts, first_psn, 0});
}

SimTime Engine::response_time(QueuePair& q, SimTime ready) {
  q.response_floor = std::max(q.response_floor, ready);
  return q.response_floor;
}

wire::RocePacket Engine::make_ack(QueuePair& q, std::uint32_t psn, std::uint8_t syndrome) const {
  auto p = make_packet(q, Opcode::Acknowledge, psn);
  p.aeth = wire::Aeth{syndrome, q.msn};
  return p;
}

void Engine::nak(QueuePair& q, std::vector<EgressPacket>& out, std::uint32_t psn,
                 std::uint8_t syndrome, SimTime now, bool fatal) {
  bump(wire::syndrome::is_rnr(syndrome) ? "rnr_naks_sent" : "naks_sent");
  emit(out, response_time(q, now), make_ack(q, psn, syndrome));
  if (fatal) {
    q.state = QpState::Error;
    q.inbound.reset();
  }
}

std::optional<ReceiveQueueEntry> Engine::take_rqe(QueuePair& q, SimTime now, SimTime& ready) {
  if (q.rq_producer_idx == q.rq_consumer_idx) return std::nullopt;
  const std::uint32_t slot = q.rq_consumer_idx % q.config.rq_depth;
  const auto rqe = ReceiveQueueEntry::decode(memory_.read(
      q.rq_base + std::uint64_t{slot} * ReceiveQueueEntry::kBytes, ReceiveQueueEntry::kBytes));
  ++q.rq_consumer_idx;
  const SpaceKind space = space_of(q.config.location);
  ready = read_port_[static_cast<int>(space)].complete(
      now, timing_.read_latency(space, ReceiveQueueEntry::kBytes),
      timing_.port_occupancy(space, ReceiveQueueEntry::kBytes));
  return rqe;
}

std::vector<EgressPacket> Engine::responder_step(const wire::RocePacket& p, SimTime now) {
  bump("packets_in");
  bump("rx_" + lower(wire::opcode_name(p.bth.opcode)));
  std::vector<EgressPacket> out;
  auto it = qps_.find(p.bth.dest_qp);
  if (it == qps_.end()) {
    bump("unknown_qp");
    return out;
  }
  auto& q = it->second;
  if (q.state == QpState::Error) {
    bump("dropped_in_error_state");
    return out;
  }
  const std::int32_t diff = psn_diff(p.bth.psn, q.expected_psn);
  if (diff < 0) {
    bump("duplicate_requests");
    return out;
  }
  if (diff > 0) {
    nak(q, out, q.expected_psn, wire::syndrome::kNakPsnSequenceError, now, false);
    return out;
  }
  if (p.bth.opcode == Opcode::RdmaReadRequest) return respond_read(q, p, now);
  if (is_write_opcode(p.bth.opcode)) return respond_write(q, p, now);
  return respond_send(q, p, now);
}

std::vector<EgressPacket> Engine::respond_read(QueuePair& q, const wire::RocePacket& p,
                                               SimTime now) {
  std::vector<EgressPacket> out;
  const auto& reth = *p.reth;
  if (reth.dma_length > 0) {
    const auto check =
        regions_.validate(reth.rkey, reth.virtual_address, reth.dma_length, mem::access::kRemoteRead);
    if (check != mem::AccessCheck::Ok) {
      bump("remote_access_errors");
      nak(q, out, p.bth.psn, wire::syndrome::kNakRemoteAccessError, now, true);
      return out;
    }
  }
  Bytes data;
  SimTime done = now;
  if (reth.dma_length > 0) {
    const SpaceKind space = memory_.route(reth.virtual_address);
    done = read_port_[static_cast<int>(space)].complete(
        now, timing_.read_latency(space, reth.dma_length),
        timing_.port_occupancy(space, reth.dma_length));
    data = memory_.read(reth.virtual_address, reth.dma_length);
  }
  const std::uint32_t mtu = q.config.mtu;
  const std::uint32_t n = packet_count(reth.dma_length, mtu);
  q.msn = psn_add(q.msn, 1);
  const SimTime ready = response_time(q, done);
  for (std::uint32_t i = 0; i < n; ++i) {
    Opcode op = Opcode::RdmaReadResponseMiddle;
    if (n == 1) op = Opcode::RdmaReadResponseOnly;
    else if (i == 0) op = Opcode::RdmaReadResponseFirst;
    else if (i + 1 == n) op = Opcode::RdmaReadResponseLast;
    auto r = make_packet(q, op, psn_add(p.bth.psn, i));
    const std::size_t begin = std::size_t{i} * mtu;
    const std::size_t end = std::min<std::size_t>(begin + mtu, data.size());
    if (begin < end) r.payload.assign(data.begin() + begin, data.begin() + end);
    if (wire::required_headers(op).aeth) r.aeth = wire::Aeth{wire::syndrome::kAck, q.msn};
    emit(out, ready, std::move(r));
  }
  q.expected_psn = psn_add(p.bth.psn, n);
  return out;
}

std::vector<EgressPacket> Engine::respond_write(QueuePair& q, const wire::RocePacket& p,
                                                SimTime now) {
  std::vector<EgressPacket> out;
  const Opcode op = p.bth.opcode;
  const bool first = op == Opcode::RdmaWriteFirst || op == Opcode::RdmaWriteOnly ||
                     op == Opcode::RdmaWriteOnlyWithImmediate;
  const bool last = wire::is_message_end(op);
  const bool imm = op == Opcode::RdmaWriteLastWithImmediate ||
                   op == Opcode::RdmaWriteOnlyWithImmediate;
  if (first) {
    if (q.inbound) {
      nak(q, out, p.bth.psn, wire::syndrome::kNakInvalidRequest, now, true);
      return out;
    }
    const auto& reth = *p.reth;
    if (reth.dma_length > 0) {
      const auto check = regions_.validate(reth.rkey, reth.virtual_address, reth.dma_length,
                                           mem::access::kRemoteWrite);
      if (check != mem::AccessCheck::Ok) {
        bump("remote_access_errors");
        nak(q, out, p.bth.psn, wire::syndrome::kNakRemoteAccessError, now, true);
        return out;
      }
    }
    QueuePair::InboundMessage msg;
    msg.is_write = true;
    msg.base = reth.virtual_address;
    msg.total = reth.dma_length;
    q.inbound = msg;
  } else if (!q.inbound || !q.inbound->is_write) {
    nak(q, out, p.bth.psn, wire::syndrome::kNakInvalidRequest, now, true);
    return out;
  }

  auto& msg = *q.inbound;
  const std::size_t size = p.payload.size();
  if ((!last && size != q.config.mtu) || msg.offset + size > msg.total ||
      (last && msg.offset + size != msg.total)) {
    nak(q, out, p.bth.psn, wire::syndrome::kNakInvalidRequest, now, true);
    return out;
  }
  std::optional<ReceiveQueueEntry> rqe;
  SimTime rqe_ready = now;
  if (imm) {
    rqe = take_rqe(q, now, rqe_ready);
    if (!rqe) {
      if (first) q.inbound.reset();
      nak(q, out, p.bth.psn, wire::syndrome::kRnrNak | 0x01, now, false);
      return out;
    }
  }
  SimTime done = now;
  if (size > 0) {
    const PhysicalAddress addr = msg.base + msg.offset;
    const SpaceKind space = memory_.route(addr);
    done = write_port_[static_cast<int>(space)].complete(
        now, timing_.write_latency(space, size), timing_.port_occupancy(space, size));
    memory_.write(addr, p.payload);
  }
  msg.offset += size;
  q.expected_psn = psn_add(q.expected_psn, 1);
  if (last) {
    q.msn = psn_add(q.msn, 1);
    if (imm) {
      CompletionEntry cqe;
      cqe.wrid = rqe->wrid;
      cqe.opcode = WcOpcode::RecvWriteImmdt;
      cqe.byte_count = static_cast<std::uint32_t>(msg.total);
      cqe.immediate = p.immdt->immediate;
      complete(q, cqe, std::max(done, rqe_ready));
    }
    q.inbound.reset();
  }
  if (p.bth.ack_request) {
    emit(out, response_time(q, now), make_ack(q, p.bth.psn, wire::syndrome::kAck));
  }
  return out;
}

std::vector<EgressPacket> Engine::respond_send(QueuePair& q, const wire::RocePacket& p,
                                               SimTime now) {
  std::vector<EgressPacket> out;
  const Opcode op = p.bth.opcode;
  const bool first = op == Opcode::SendFirst || op == Opcode::SendOnly ||
                     op == Opcode::SendOnlyWithImmediate || op == Opcode::SendOnlyWithInvalidate;
  const bool last = wire::is_message_end(op);
  if (first) {
    if (q.inbound) {
      nak(q, out, p.bth.psn, wire::syndrome::kNakInvalidRequest, now, true);
      return out;
    }
    SimTime ready = now;
    auto rqe = take_rqe(q, now, ready);
    if (!rqe) {
      nak(q, out, p.bth.psn, wire::syndrome::kRnrNak | 0x01, now, false);
      return out;
    }
    QueuePair::InboundMessage msg;
    msg.base = rqe->local_addr;
    msg.total = rqe->length;
    msg.rqe = rqe;
    msg.rqe_ready = ready;
    q.inbound = msg;
  } else if (!q.inbound || q.inbound->is_write) {
    nak(q, out, p.bth.psn, wire::syndrome::kNakInvalidRequest, now, true);
    return out;
  }

  auto& msg = *q.inbound;
  const std::size_t size = p.payload.size();
  auto fail_message = [&](CompletionStatus status, std::uint8_t syndrome) {
    CompletionEntry cqe;
    cqe.wrid = msg.rqe->wrid;
    cqe.status = status;
    cqe.opcode = WcOpcode::Recv;
    complete(q, cqe, now);
    nak(q, out, p.bth.psn, syndrome, now, true);
  };
  if (!last && size != q.config.mtu) {
    nak(q, out, p.bth.psn, wire::syndrome::kNakInvalidRequest, now, true);
    return out;
  }
  if (msg.offset + size > msg.total) {
    bump("receive_length_errors");
    fail_message(CompletionStatus::LengthError, wire::syndrome::kNakInvalidRequest);
    return out;
  }
  const PhysicalAddress addr = msg.base + msg.offset;
  if (size > 0 && !memory_.contains(addr, size)) {
    fail_message(CompletionStatus::LocalAccessError, wire::syndrome::kNakRemoteOperationalError);
    return out;
  }
  SimTime done = std::max(now, msg.rqe_ready);
  if (size > 0) {
    const SpaceKind space = memory_.route(addr);
    done = write_port_[static_cast<int>(space)].complete(
        done, timing_.write_latency(space, size), timing_.port_occupancy(space, size));
    memory_.write(addr, p.payload);
  }
  msg.offset += size;
  q.expected_psn = psn_add(q.expected_psn, 1);
  if (last) {
    q.msn = psn_add(q.msn, 1);
    CompletionEntry cqe;
    cqe.wrid = msg.rqe->wrid;
    cqe.byte_count = static_cast<std::uint32_t>(msg.offset);
    cqe.opcode = WcOpcode::Recv;
    if (p.immdt) {
      cqe.opcode = WcOpcode::RecvImmdt;
      cqe.immediate = p.immdt->immediate;
    }
    if (p.ieth) {
      cqe.opcode = WcOpcode::RecvInvalidate;
      cqe.invalidated_rkey = p.ieth->invalidate_rkey;
      bump(regions_.invalidate(p.ieth->invalidate_rkey) ? "rkeys_invalidated"
                                                        : "invalidate_unknown_rkey");
    }
    complete(q, cqe, done);
    q.inbound.reset();
  }
  if (p.bth.ack_request) {
    emit(out, response_time(q, now), make_ack(q, p.bth.psn, wire::syndrome::kAck));
  }
  return out;
}

void Engine::flush_outstanding(QueuePair& q, SimTime now) {
  while (!q.outstanding.empty()) {
    CompletionEntry cqe;
    cqe.wrid = q.outstanding.front().wqe.wrid;
    cqe.status = CompletionStatus::Flushed;
    cqe.opcode = wc_opcode_for(q.outstanding.front().wqe.opcode);
    complete(q, cqe, now);
    q.outstanding.pop_front();
  }
}

void Engine::process_ack(const wire::RocePacket& p, SimTime now) {
  bump("packets_in");
  bump("rx_" + lower(wire::opcode_name(p.bth.opcode)));
  auto it = qps_.find(p.bth.dest_qp);
  if (it == qps_.end()) {
    bump("unknown_qp");
    return;
  }
  auto& q = it->second;
  const std::uint32_t psn = p.bth.psn;

  auto succeed = [&](const QueuePair::Outstanding& o, SimTime earliest) {
    CompletionEntry cqe;
    cqe.wrid = o.wqe.wrid;
    cqe.opcode = wc_opcode_for(o.wqe.opcode);
    cqe.byte_count = o.wqe.length;
    complete(q, cqe, earliest);
  };

  if (wire::is_read_response(p.bth.opcode)) {
    auto hit = std::find_if(q.outstanding.begin(), q.outstanding.end(), [&](const auto& o) {
      const std::int32_t d = psn_diff(psn, o.first_psn);
      return o.wqe.opcode == WqeOpcode::Read && d >= 0 && d < static_cast<std::int32_t>(o.npkts);
    });
    if (hit == q.outstanding.end() || psn != hit->next_response_psn) {
      bump("unknown_psn");
      return;
    }
    // A read response implicitly acknowledges every earlier write/send.
    while (&q.outstanding.front() != &*hit && q.outstanding.front().wqe.opcode != WqeOpcode::Read) {
      succeed(q.outstanding.front(), now);
      q.outstanding.pop_front();
    }
    auto& o = *std::find_if(q.outstanding.begin(), q.outstanding.end(),
                            [&](const auto& x) { return x.next_response_psn == psn && x.wqe.opcode == WqeOpcode::Read; });
    const std::uint64_t offset = std::uint64_t(psn_diff(psn, o.first_psn)) * q.config.mtu;
    const std::size_t size = p.payload.size();
    if (offset + size > o.wqe.length) {
      bump("read_response_length_errors");
      return;
    }
    if (size > 0) {
      const PhysicalAddress addr = o.wqe.local_addr + offset;
      const SpaceKind space = memory_.route(addr);
      const SimTime done = write_port_[static_cast<int>(space)].complete(
          now, timing_.write_latency(space, size), timing_.port_occupancy(space, size));
      memory_.write(addr, p.payload);
      o.data_done = std::max(o.data_done, done);
    } else {
      o.data_done = std::max(o.data_done, now);
    }
    o.next_response_psn = psn_add(o.next_response_psn, 1);
    if (psn == o.last_psn()) {
      succeed(o, o.data_done);
      q.outstanding.erase(std::find_if(q.outstanding.begin(), q.outstanding.end(),
                                       [&](const auto& x) { return &x == &o; }));
    }
    return;
  }

  if (p.bth.opcode != Opcode::Acknowledge || !p.aeth) {
    bump("unexpected_packets");
    return;
  }
  const std::uint8_t syn = p.aeth->syndrome;
  if (wire::syndrome::is_ack(syn)) {
    bool any = false;
    while (!q.outstanding.empty()) {
      const auto& f = q.outstanding.front();
      if (f.wqe.opcode == WqeOpcode::Read || psn_diff(f.last_psn(), psn) > 0) break;
      succeed(f, now);
      q.outstanding.pop_front();
      any = true;
    }
    if (!any) bump("dup_ack");
    return;
  }

  bump("naks_received");
  while (!q.outstanding.empty()) {
    const auto& f = q.outstanding.front();
    if (f.wqe.opcode == WqeOpcode::Read || psn_diff(f.last_psn(), psn) >= 0) break;
    succeed(f, now);
    q.outstanding.pop_front();
  }
  if (q.outstanding.empty()) {
    bump("unknown_psn");
    return;
  }
  CompletionEntry cqe;
  cqe.wrid = q.outstanding.front().wqe.wrid;
  cqe.status = status_for_syndrome(syn);
  cqe.opcode = wc_opcode_for(q.outstanding.front().wqe.opcode);
  complete(q, cqe, now);
  q.outstanding.pop_front();
  flush_outstanding(q, now);
  q.state = QpState::Error;
}

std::vector<EgressPacket> Engine::receive(const wire::RocePacket& p, SimTime now) {
  if (wire::is_read_response(p.bth.opcode) || p.bth.opcode == Opcode::Acknowledge) {
    process_ack(p, now);
    return {};
  }
  return responder_step(p, now);
}

std::uint32_t Engine::cq_doorbell(std::uint32_t qpn, SimTime now) const {
  const auto& q = qp(qpn);
  std::uint32_t visible = q.cq_consumer_idx;
  for (SimTime t : q.cq_visible_at) {
    if (t > now) break;
    ++visible;
  }
  return visible;
}

std::optional<SimTime> Engine::next_cq_visibility(std::uint32_t qpn, SimTime now) const {
  for (SimTime t : qp(qpn).cq_visible_at) {
    if (t > now) return t;
  }
  return std::nullopt;
}

std::vector<CompletionEntry> Engine::poll_cq(std::uint32_t qpn, std::uint32_t max, SimTime now) {
  auto& q = qp(qpn);
  std::vector<CompletionEntry> out;
  while (out.size() < max && !q.cq_visible_at.empty() && q.cq_visible_at.front() <= now) {
    const std::uint32_t slot = q.cq_consumer_idx % q.config.cq_depth;
    out.push_back(CompletionEntry::decode(memory_.read(
        q.cq_base + std::uint64_t{slot} * CompletionEntry::kBytes, CompletionEntry::kBytes)));
    ++q.cq_consumer_idx;
    q.cq_visible_at.pop_front();
  }
  return out;
}

std::uint64_t Engine::stat(const std::string& key) const {
  auto it = stats_.find(key);
  return it == stats_.end() ? 0 : it->second;
}

std::string Engine::stats_dump() const {
  std::ostringstream out;
  for (const auto& [k, v] : stats_) out << k << ' ' << v << '\n';
  return out.str();
}

}  // namespace snicsim::rdma

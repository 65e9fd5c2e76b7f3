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

#include "snicsim/sim.hpp"

#include <algorithm>
#include <cstdio>

namespace snicsim::sim {

std::uint64_t EventQueue::schedule(SimTime time, std::uint32_t actor, std::string kind,
                                   Action action) {
  if (time < now_) {
    fail(ErrorCode::EventInPast, "event '" + kind + "' at " + std::to_string(time) +
                                     " ns scheduled at " + std::to_string(now_) + " ns");
  }
  const std::uint64_t seq = next_seq_++;
  heap_.push(Event{time, seq, actor, std::move(kind), std::move(action)});
  return seq;
}

std::optional<SimTime> EventQueue::next_time() const {
  if (heap_.empty()) return std::nullopt;
  return heap_.top().time;
}

bool EventQueue::step() {
  if (heap_.empty()) return false;
  // priority_queue::top is const; the event is copied out before popping.
  Event ev = heap_.top();
  heap_.pop();
  now_ = ev.time;
  ++dispatched_;
  if (tracing_) trace_.push_back({ev.time, ev.seq, ev.actor, ev.kind});
  if (ev.action) ev.action();
  return true;
}

SimTime EventQueue::run_until_idle() {
  while (step()) {
  }
  return now_;
}

SimTime EventQueue::run_until(SimTime limit) {
  while (!heap_.empty() && heap_.top().time <= limit) step();
  now_ = std::max(now_, limit);
  return now_;
}

Link::Link(const LinkModel& model) : model_(model) { model_.validate(); }

SimTime Link::transmit(std::size_t frame_bytes, SimTime now) {
  const SimTime ser = model_.serialization(frame_bytes);
  const SimTime start = std::max(now, busy_until_);
  busy_until_ = start + ser;
  ++frames_;
  bytes_ += frame_bytes;
  SimTime arrival = busy_until_ + model_.propagation_delay;
  if (model_.via_switch) arrival += model_.switch_delay + ser;
  return arrival;
}

PeerConfig default_peer(std::size_t index) {
  PeerConfig p;
  p.name = "peer" + std::to_string(index + 1);
  p.mac = {0x02, 0x00, 0x00, 0x00, 0x00, static_cast<std::uint8_t>(index + 1)};
  p.ip = 0xc0a80100u + static_cast<std::uint32_t>(index + 1);
  return p;
}

Peer::Peer(std::uint32_t id, const PeerConfig& config, const TimingModel& timing)
    : memory(config.memory),
      engine(memory, regions, timing, rdma::NicIdentity{config.mac, config.ip}),
      lookaside(memory, regions, timing),
      id_(id),
      config_(config) {
  next_[static_cast<int>(SpaceKind::Host)] = memory.host().base() + (4ull << 30);
  next_[static_cast<int>(SpaceKind::Device)] = memory.device().base();
}

PhysicalAddress Peer::alloc(SpaceKind space, std::uint64_t bytes, std::uint64_t align) {
  if (align == 0 || (align & (align - 1)) != 0) {
    fail(ErrorCode::InvalidArgument, "alignment must be a power of two");
  }
  PhysicalAddress& next = next_[static_cast<int>(space)];
  const PhysicalAddress addr = (next + align - 1) & ~(align - 1);
  if (!memory.space(space).contains(addr, std::max<std::uint64_t>(bytes, 1))) {
    fail(ErrorCode::OutOfBounds, "cannot allocate " + std::to_string(bytes) + " bytes of " +
                                     std::string(mem::space_name(space)) + " memory");
  }
  next = addr + bytes;
  return addr;
}

Testbed::Testbed(const TestbedConfig& config) : config_(config) {
  config_.timing.validate();
  config_.link.validate();
  if (config_.peers.empty()) config_.peers = {default_peer(0), default_peer(1)};
  if (config_.peers.size() != 2) fail(ErrorCode::InvalidArgument, "a testbed has two peers");
  for (std::uint32_t i = 0; i < 2; ++i) {
    peers_.push_back(std::make_unique<Peer>(i, config_.peers[i], config_.timing));
    links_.emplace_back(config_.link);
  }
  events_.set_tracing(config_.trace);
}

Peer& Testbed::peer(std::size_t index) {
  if (index >= peers_.size()) fail(ErrorCode::InvalidArgument, "peer index out of range");
  return *peers_[index];
}

void Testbed::connect(std::uint32_t qpn_a, std::uint32_t qpn_b, const rdma::QpConfig& base) {
  rdma::QpConfig a = base;
  a.qpn = qpn_a;
  a.dest_qpn = qpn_b;
  a.dest_ip = peers_[1]->config().ip;
  a.dest_mac = peers_[1]->config().mac;
  rdma::QpConfig b = base;
  b.qpn = qpn_b;
  b.dest_qpn = qpn_a;
  b.dest_ip = peers_[0]->config().ip;
  b.dest_mac = peers_[0]->config().mac;
  b.initial_psn = base.peer_initial_psn;
  b.peer_initial_psn = base.initial_psn;
  peers_[0]->engine.create_qp(a);
  peers_[1]->engine.create_qp(b);
}

void Testbed::ring_sq_doorbell(std::size_t p, std::uint32_t qpn, std::uint32_t producer_idx,
                               SimTime at) {
  peer(p);
  events_.schedule(at, kCpuActor + static_cast<std::uint32_t>(p), "sq_doorbell",
                   [this, p, qpn, producer_idx] {
                     peers_[p]->engine.ring_sq_doorbell(qpn, producer_idx, events_.now());
                     arm_requester(p);
                   });
}

void Testbed::inject_frame(std::size_t p, Bytes frame, SimTime at) {
  peer(p);
  events_.schedule(at, static_cast<std::uint32_t>(p), "rx",
                   [this, p, f = std::move(frame)] { deliver(p, f); });
}

void Testbed::arm_requester(std::size_t p) {
  const auto wake = peers_[p]->engine.next_requester_wakeup();
  if (!wake) return;
  auto& pending = pending_wakeup_[p];
  if (pending && *pending <= *wake) return;
  const SimTime t = std::max(*wake, events_.now());
  pending = t;
  events_.schedule(t, static_cast<std::uint32_t>(p), "requester", [this, p, t] {
    if (pending_wakeup_[p] == t) pending_wakeup_[p].reset();
    send(p, peers_[p]->engine.requester_step(events_.now()));
    arm_requester(p);
  });
}

void Testbed::send(std::size_t from, std::vector<rdma::EgressPacket> packets) {
  for (auto& e : packets) {
    const SimTime t = std::max(e.ready, events_.now());
    events_.schedule(t, static_cast<std::uint32_t>(from), "tx",
                     [this, from, pkt = std::move(e.packet)] {
                       Bytes frame = wire::serialize(pkt);
                       const SimTime arrival = links_[from].transmit(frame.size(), events_.now());
                       if (config_.capture) captured_.push_back({events_.now(), frame});
                       const std::size_t to = 1 - from;
                       events_.schedule(arrival, static_cast<std::uint32_t>(to), "rx",
                                        [this, to, f = std::move(frame)] { deliver(to, f); });
                     });
  }
}

void Testbed::deliver(std::size_t to, Bytes frame) {
  auto& p = *peers_[to];
  for (auto& out : p.classifier.process(frame, events_.now())) {
    if (out.port == compute::StreamPort::Host) {
      ++p.host_rx_frames;
      p.host_rx_bytes += out.frame.size();
      continue;
    }
    wire::ClassifiedPacket parsed;
    try {
      parsed = wire::parse(out.frame, {p.engine.identity().roce_port, true});
    } catch (const Error&) {
      ++frames_dropped_;
      continue;
    }
    send(to, p.engine.receive(*parsed.packet, events_.now()));
    arm_requester(to);
  }
}

PollResult Testbed::poll_cq_until(std::size_t p, std::uint32_t qpn, std::uint32_t count,
                                  SimTime start) {
  auto& engine = peer(p).engine;
  const SimTime period = config_.timing.poll_period();
  const std::uint32_t base = engine.qp(qpn).cq_consumer_idx;
  std::uint64_t k = 1;
  for (;;) {
    const SimTime t = start + k * period;
    events_.run_until(t);
    if (engine.cq_doorbell(qpn, t) - base >= count) {
      PollResult r;
      r.time = t;
      r.polls = static_cast<std::uint32_t>(k);
      r.completions = engine.poll_cq(qpn, count, t);
      return r;
    }
    auto target = events_.next_time();
    const auto visible = engine.next_cq_visibility(qpn, t);
    if (!target && !visible) {
      fail(ErrorCode::SimDeadlock, "QP " + std::to_string(qpn) + " of peer " +
                                       std::to_string(p) + " waits for " + std::to_string(count) +
                                       " completions with nothing left to run");
    }
    if (!target || (visible && *visible < *target)) target = visible;
    k = std::max<std::uint64_t>(k + 1, ceil_div(*target - start, period));
  }
}

void Testbed::lc_submit(std::size_t p, std::uint32_t kernel_id, compute::ControlMessage msg,
                        SimTime at) {
  auto& lc = peer(p).lookaside;
  lc.slot(kernel_id);
  events_.schedule(at + config_.timing.mmio_write_latency,
                   kCpuActor + static_cast<std::uint32_t>(p), "lc_submit",
                   [this, p, kernel_id, m = std::move(msg)] {
                     peers_[p]->lookaside.lc_submit(kernel_id, m, events_.now());
                     arm_kernel(p, kernel_id);
                   });
}

void Testbed::arm_kernel(std::size_t p, std::uint32_t kernel_id) {
  const auto next = peers_[p]->lookaside.next_event(kernel_id);
  if (!next) return;
  const auto key = std::make_pair(p, kernel_id);
  auto it = pending_kernel_.find(key);
  if (it != pending_kernel_.end() && it->second <= *next) return;
  const SimTime t = std::max(*next, events_.now());
  pending_kernel_[key] = t;
  events_.schedule(t, 10 + static_cast<std::uint32_t>(p), "lc_step", [this, p, kernel_id, t] {
    const auto k = std::make_pair(p, kernel_id);
    if (auto i = pending_kernel_.find(k); i != pending_kernel_.end() && i->second == t) {
      pending_kernel_.erase(i);
    }
    peers_[p]->lookaside.lc_step(kernel_id, events_.now());
    arm_kernel(p, kernel_id);
  });
}

compute::WaitResult Testbed::lc_wait(std::size_t p, std::uint32_t kernel_id, SimTime start) {
  auto& lc = peer(p).lookaside;
  const auto& slot = lc.slot(kernel_id);
  while (slot.status_fifo.empty() && events_.step()) {
  }
  return lc.lc_wait(kernel_id, start);
}

std::string_view request_mode_name(RequestMode m) noexcept {
  return m == RequestMode::Single ? "single" : "batch";
}

RequestMode parse_request_mode(std::string_view text) {
  if (text == "single") return RequestMode::Single;
  if (text == "batch") return RequestMode::Batch;
  fail(ErrorCode::InvalidArgument, "mode must be single or batch, got '" + std::string(text) + "'");
}

namespace {

void fill_random(mem::Crossbar& xbar, PhysicalAddress addr, std::uint64_t len,
                 std::uint64_t seed) {
  // splitmix64: cheap, and the stream only has to be reproducible.
  Bytes data(len);
  std::uint64_t state = seed;
  for (std::uint64_t i = 0; i < len; i += 8) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z ^= z >> 31;
    for (std::uint64_t b = 0; b < 8 && i + b < len; ++b) {
      data[i + b] = static_cast<std::uint8_t>(z >> (8 * b));
    }
  }
  if (len) xbar.write(addr, data);
}

bool needs_receive(rdma::WqeOpcode op) {
  return rdma::is_send_family(op) || op == rdma::WqeOpcode::WriteImmdt;
}

}  // namespace

ScenarioReport run_scenario(const ScenarioConfig& cfg) {
  if (cfg.batch == 0) fail(ErrorCode::InvalidArgument, "batch size must be at least 1");
  if (cfg.batch > 4096) fail(ErrorCode::InvalidArgument, "batch size is limited to 4096");
  if (cfg.payload_size > (1u << 30)) fail(ErrorCode::InvalidArgument, "payload above 1 GiB");

  TestbedConfig tbc = cfg.testbed;
  if (tbc.peers.empty()) tbc.peers = {default_peer(0), default_peer(1)};
  tbc.peers[0].ip = cfg.client_ip;
  tbc.peers[1].ip = cfg.server_ip;
  Testbed tb(tbc);
  auto& client = tb.peer(0);
  auto& server = tb.peer(1);

  rdma::QpConfig qpc;
  qpc.mtu = cfg.mtu;
  qpc.location = cfg.location;
  qpc.sq_depth = qpc.rq_depth = qpc.cq_depth = std::max<std::uint32_t>(128, cfg.batch);
  qpc.initial_psn = cfg.initial_psn;
  qpc.peer_initial_psn = cfg.initial_psn;
  qpc.udp_sport = cfg.udp_sport;
  tb.connect(cfg.client_qpn, cfg.server_qpn, qpc);

  const SpaceKind space = rdma::space_of(cfg.location);
  const std::uint64_t span = std::uint64_t{cfg.payload_size} * cfg.batch;
  const PhysicalAddress local = client.alloc(space, span, 4096);
  const PhysicalAddress remote = server.alloc(space, span, 4096);
  client.regions.register_region(client.memory.space(space), local, std::max<std::uint64_t>(span, 1),
                                 mem::access::kAll);
  const auto& region = server.regions.register_region(
      server.memory.space(space), remote, std::max<std::uint64_t>(span, 1), mem::access::kAll);
  const std::uint32_t rkey = region.rkey;

  const bool is_read = cfg.op == rdma::WqeOpcode::Read;
  mem::Crossbar& src_mem = is_read ? server.memory : client.memory;
  mem::Crossbar& dst_mem = is_read ? client.memory : server.memory;
  const PhysicalAddress src = is_read ? remote : local;
  const PhysicalAddress dst = is_read ? local : remote;
  fill_random(src_mem, src, span, cfg.seed);

  std::vector<std::uint32_t> victims;
  if (needs_receive(cfg.op)) {
    for (std::uint32_t i = 0; i < cfg.batch; ++i) {
      server.engine.post_recv(cfg.server_qpn,
                              {1000u + i, remote + std::uint64_t{i} * cfg.payload_size,
                               cfg.payload_size});
    }
  }
  if (cfg.op == rdma::WqeOpcode::SendInvalidate) {
    for (std::uint32_t i = 0; i < cfg.batch; ++i) {
      const PhysicalAddress a = server.alloc(SpaceKind::Host, 64);
      victims.push_back(
          server.regions.register_region(server.memory.host(), a, 64, mem::access::kAll).rkey);
    }
  }

  auto wqe_for = [&](std::uint32_t i) {
    rdma::WorkQueueElement w;
    w.wrid = i + 1;
    w.opcode = cfg.op;
    w.local_addr = local + std::uint64_t{i} * cfg.payload_size;
    w.remote_addr = remote + std::uint64_t{i} * cfg.payload_size;
    w.length = cfg.payload_size;
    w.rkey = rkey;
    w.immediate = 0x1000 + i;
    if (!victims.empty()) w.invalidate_rkey = victims[i];
    return w;
  };

  ScenarioReport rep;
  rep.wqes = cfg.batch;
  std::vector<rdma::CompletionEntry> cqes;
  try {
    if (cfg.mode == RequestMode::Batch) {
      for (std::uint32_t i = 0; i < cfg.batch; ++i) client.engine.post_wqe(cfg.client_qpn, wqe_for(i));
      tb.ring_sq_doorbell(0, cfg.client_qpn, cfg.batch, 0);
      auto r = tb.poll_cq_until(0, cfg.client_qpn, cfg.batch, 0);
      cqes = std::move(r.completions);
      rep.end = r.time;
    } else {
      SimTime t = 0;
      for (std::uint32_t i = 0; i < cfg.batch; ++i) {
        client.engine.post_wqe(cfg.client_qpn, wqe_for(i));
        tb.ring_sq_doorbell(0, cfg.client_qpn, i + 1, t);
        auto r = tb.poll_cq_until(0, cfg.client_qpn, 1, t);
        cqes.insert(cqes.end(), r.completions.begin(), r.completions.end());
        t = r.time;
      }
      rep.end = t;
    }
    tb.run_until_idle();
  } catch (const Error& e) {
    if (e.code() != ErrorCode::SimDeadlock) throw;
    rep.failure = e.what();
    tb.run_until_idle();
    for (auto& c : client.engine.poll_cq(cfg.client_qpn, cfg.batch)) cqes.push_back(c);
  }

  for (std::uint32_t i = 0; i < cqes.size(); ++i) {
    const auto& c = cqes[i];
    if (c.status == rdma::CompletionStatus::Success && c.wrid == i + 1u) {
      ++rep.completions;
    } else if (rep.failure.empty()) {
      rep.failure = "completion " + std::to_string(i) + " wrid=" + std::to_string(c.wrid) +
                    " status=" + std::string(rdma::completion_status_name(c.status));
    }
  }

  if (needs_receive(cfg.op)) {
    const auto rcqes = server.engine.poll_cq(cfg.server_qpn, cfg.batch);
    for (std::uint32_t i = 0; i < rcqes.size(); ++i) {
      const auto& c = rcqes[i];
      bool ok = c.status == rdma::CompletionStatus::Success && c.wrid == 1000u + i &&
                c.byte_count == cfg.payload_size;
      if (cfg.op == rdma::WqeOpcode::WriteImmdt || cfg.op == rdma::WqeOpcode::SendImmdt) {
        ok = ok && c.immediate == 0x1000u + i;
      }
      if (cfg.op == rdma::WqeOpcode::SendInvalidate) {
        ok = ok && c.invalidated_rkey == victims[i] && !server.regions.find(victims[i])->valid;
      }
      if (ok) {
        ++rep.peer_completions;
      } else if (rep.failure.empty()) {
        rep.failure = "responder completion " + std::to_string(i) + " is wrong";
      }
    }
  }

  if (cfg.verify && span > 0) {
    const Bytes want = src_mem.read(src, span);
    const Bytes got = dst_mem.read(dst, span);
    for (std::uint64_t i = 0; i < span; ++i) rep.mismatched_bytes += want[i] != got[i];
  }
  const bool peer_ok = !needs_receive(cfg.op) || rep.peer_completions == cfg.batch;
  rep.verified = rep.failure.empty() && rep.completions == cfg.batch && peer_ok &&
                 rep.mismatched_bytes == 0;
  if (rep.failure.empty() && rep.mismatched_bytes) {
    rep.failure = std::to_string(rep.mismatched_bytes) + " destination bytes differ";
  }
  if (rep.end > rep.start) {
    rep.latency_ns = static_cast<double>(rep.elapsed()) / cfg.batch;
    rep.throughput_gbps = static_cast<double>(span) * 8.0 / static_cast<double>(rep.elapsed());
  }
  rep.client_stats = client.engine.stats_dump();
  rep.server_stats = server.engine.stats_dump();
  return rep;
}

MetricSeries run_benchmark(const BenchScenario& s) {
  if (s.op != rdma::WqeOpcode::Read && s.op != rdma::WqeOpcode::Write) {
    fail(ErrorCode::InvalidArgument, "benchmarks cover read and write only");
  }
  if (s.sizes.empty()) fail(ErrorCode::InvalidArgument, "no payload sizes given");
  MetricSeries out;
  for (RequestMode mode : s.modes) {
    for (std::uint64_t size : s.sizes) {
      if (size == 0 || size > (1u << 30)) {
        fail(ErrorCode::InvalidArgument, "payload size " + std::to_string(size) + " out of range");
      }
      ScenarioConfig c;
      c.op = s.op;
      c.payload_size = static_cast<std::uint32_t>(size);
      c.batch = s.batch;
      c.mode = mode;
      c.mtu = s.mtu;
      c.location = s.location;
      c.verify = false;
      c.testbed = s.testbed;
      const auto r = run_scenario(c);
      if (!r.failure.empty()) fail(ErrorCode::VerificationFailed, r.failure);
      MetricRecord m;
      m.op = std::string(rdma::wqe_opcode_name(s.op));
      m.mode = std::string(request_mode_name(mode));
      m.payload_bytes = size;
      m.batch = mode == RequestMode::Batch ? s.batch : 1;
      m.start = r.start;
      m.end = r.end;
      m.throughput_gbps = r.throughput_gbps;
      m.latency_ns = r.latency_ns;
      out.push_back(std::move(m));
    }
  }
  return out;
}

std::string format_series(const MetricSeries& series) {
  std::string out = "op,mode,payload_bytes,batch,throughput_gbps,latency_ns\n";
  char line[256];
  for (const auto& m : series) {
    std::snprintf(line, sizeof line, "%s,%s,%llu,%u,%.3f,%.1f\n", m.op.c_str(), m.mode.c_str(),
                  static_cast<unsigned long long>(m.payload_bytes), m.batch, m.throughput_gbps,
                  m.latency_ns);
    out += line;
  }
  return out;
}

void emit_series(const MetricSeries& series, const std::filesystem::path& path) {
  if (series.empty()) fail(ErrorCode::InvalidArgument, "refusing to write an empty series");
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) fail(ErrorCode::IoError, "cannot open " + path.string());
  const std::string text = format_series(series);
  const bool ok = std::fwrite(text.data(), 1, text.size(), f) == text.size();
  if (std::fclose(f) != 0 || !ok) fail(ErrorCode::IoError, "short write to " + path.string());
}

}  // namespace snicsim::sim

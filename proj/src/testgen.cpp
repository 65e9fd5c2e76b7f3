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

// Spec parsing and generation. The generator deliberately depends only on
// the wire and memory modules.

#include "snicsim/testgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "json.hpp"
#include "testgen_files.hpp"

namespace snicsim::testgen {

using nlohmann::json;

namespace {

[[noreturn]] void schema(const std::string& path, const std::string& what) {
  fail(ErrorCode::SchemaError, path + ": " + what);
}

void only_keys(const json& obj, const std::string& path, std::initializer_list<const char*> keys,
               std::initializer_list<const char*> required) {
  if (!obj.is_object()) schema(path, "expected an object");
  for (const auto& [k, v] : obj.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* a) { return k == a; })) {
      schema(path + "." + k, "unknown key");
    }
  }
  for (const char* r : required) {
    if (!obj.contains(r)) schema(path + "." + r, "required key missing");
  }
}

std::uint64_t get_uint(const json& obj, const char* key, const std::string& path, std::uint64_t lo,
                       std::uint64_t hi, std::uint64_t fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  const std::string p = path + "." + key;
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
    schema(p, "expected a non-negative integer");
  }
  const auto x = v.get<std::uint64_t>();
  if (x < lo || x > hi) {
    schema(p, "must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  return x;
}

std::string get_string(const json& obj, const char* key, const std::string& path,
                       const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_string()) schema(path + "." + key, "expected a string");
  return obj.at(key).get<std::string>();
}

template <typename T, typename Fn>
T parse_enum(const json& obj, const char* key, const std::string& path, Fn&& parse, T fallback) {
  if (!obj.contains(key)) return fallback;
  const std::string text = get_string(obj, key, path, "");
  try {
    return parse(text);
  } catch (const Error&) {
    schema(path + "." + key, "unsupported value '" + text + "'");
  }
}

}  // namespace

TestcaseSpec parse_spec(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    schema("$", std::string("invalid JSON: ") + e.what());
  }
  only_keys(j, "$", {"name", "seed", "rdma", "memory", "traffic", "non_rdma_ratio", "checks"},
            {"name", "rdma", "memory", "traffic"});
  TestcaseSpec s;
  s.name = get_string(j, "name", "$", "");
  if (s.name.empty() || !std::all_of(s.name.begin(), s.name.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
      })) {
    schema("$.name", "must be a non-empty [A-Za-z0-9_-] identifier");
  }
  s.seed = get_uint(j, "seed", "$", 0, UINT64_MAX, 0);

  const auto& r = j.at("rdma");
  only_keys(r, "$.rdma", {"num_qps", "mtu", "initial_psn", "qp_location"}, {});
  s.num_qps = static_cast<std::uint32_t>(get_uint(r, "num_qps", "$.rdma", 1, 16, 1));
  s.mtu = static_cast<std::uint32_t>(get_uint(r, "mtu", "$.rdma", 256, 4096, 4096));
  if ((s.mtu & (s.mtu - 1)) != 0) schema("$.rdma.mtu", "must be a power of two");
  s.initial_psn = static_cast<std::uint32_t>(get_uint(r, "initial_psn", "$.rdma", 0, wire::kPsnMask, 0));
  s.qp_location = parse_enum(r, "qp_location", "$.rdma", rdma::parse_qp_location,
                             rdma::QpLocation::HostMem);

  const auto& m = j.at("memory");
  if (!m.is_array() || m.empty()) schema("$.memory", "expected a non-empty array");
  for (std::size_t i = 0; i < m.size(); ++i) {
    const std::string p = "$.memory[" + std::to_string(i) + "]";
    only_keys(m[i], p, {"peer", "space", "size", "access"}, {"peer", "space", "size"});
    MemorySpec ms;
    ms.peer = static_cast<std::uint32_t>(get_uint(m[i], "peer", p, 0, 1, 0));
    ms.space = parse_enum(m[i], "space", p, mem::parse_space, SpaceKind::Host);
    ms.size = get_uint(m[i], "size", p, 1, 64ull << 20, 0);
    if (m[i].contains("access")) {
      const auto& a = m[i].at("access");
      if (!a.is_array()) schema(p + ".access", "expected an array");
      ms.access = 0;
      for (std::size_t k = 0; k < a.size(); ++k) {
        const std::string ap = p + ".access[" + std::to_string(k) + "]";
        if (!a[k].is_string()) schema(ap, "expected a string");
        const auto v = a[k].get<std::string>();
        if (v == "local") ms.access |= mem::access::kLocal;
        else if (v == "remote_read") ms.access |= mem::access::kRemoteRead;
        else if (v == "remote_write") ms.access |= mem::access::kRemoteWrite;
        else schema(ap, "unknown access '" + v + "'");
      }
    }
    s.memory.push_back(ms);
  }

  const auto& t = j.at("traffic");
  if (!t.is_array() || t.empty()) schema("$.traffic", "expected a non-empty array");
  for (std::size_t i = 0; i < t.size(); ++i) {
    const std::string p = "$.traffic[" + std::to_string(i) + "]";
    only_keys(t[i], p, {"op", "payload_size", "batch", "src_peer", "qp", "mode"},
              {"op", "payload_size"});
    TrafficSpec ts;
    ts.op = parse_enum(t[i], "op", p, rdma::parse_wqe_opcode, rdma::WqeOpcode::Write);
    ts.payload_size = static_cast<std::uint32_t>(get_uint(t[i], "payload_size", p, 0, 1u << 20, 0));
    ts.batch = static_cast<std::uint32_t>(get_uint(t[i], "batch", p, 1, 256, 1));
    ts.src_peer = static_cast<std::uint32_t>(get_uint(t[i], "src_peer", p, 0, 1, 0));
    ts.qp = static_cast<std::uint32_t>(get_uint(t[i], "qp", p, 0, s.num_qps - 1, 0));
    const std::string mode = get_string(t[i], "mode", p, ts.batch > 1 ? "batch" : "single");
    if (mode != "single" && mode != "batch") schema(p + ".mode", "must be single or batch");
    ts.batch_mode = mode == "batch";
    s.traffic.push_back(ts);
  }

  if (j.contains("non_rdma_ratio")) {
    const auto& v = j.at("non_rdma_ratio");
    if (!v.is_number()) schema("$.non_rdma_ratio", "expected a number");
    s.non_rdma_ratio = v.get<double>();
    if (!(s.non_rdma_ratio >= 0.0 && s.non_rdma_ratio <= 0.9)) {
      schema("$.non_rdma_ratio", "must be in [0, 0.9]");
    }
  }
  if (j.contains("checks")) {
    const auto& c = j.at("checks");
    if (!c.is_array() || c.empty()) schema("$.checks", "expected a non-empty array");
    s.checks.clear();
    for (std::size_t i = 0; i < c.size(); ++i) {
      const std::string p = "$.checks[" + std::to_string(i) + "]";
      const std::string v = c[i].is_string() ? c[i].get<std::string>() : "";
      if (v == "memory") s.checks.push_back(Check::Memory);
      else if (v == "stats") s.checks.push_back(Check::Stats);
      else if (v == "packets") s.checks.push_back(Check::Packets);
      else schema(p, "must be memory, stats or packets");
    }
  }
  return s;
}

TestcaseSpec load_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_spec(buf.str());
}

namespace {

struct Region {
  std::uint32_t peer = 0;
  SpaceKind space = SpaceKind::Host;
  PhysicalAddress base = 0;
  std::uint64_t size = 0;
  std::uint32_t access = 0;
  std::uint32_t rkey = 0;
  bool victim = false;
  std::uint64_t used = 0;
};

PhysicalAddress carve(std::vector<Region>& regions, std::uint32_t peer, std::uint64_t len,
                      std::uint32_t needed, const std::string& path, std::uint32_t* rkey) {
  for (auto& r : regions) {
    if (r.peer != peer || r.victim || (r.access & needed) != needed) continue;
    const std::uint64_t off = (r.used + 63) & ~std::uint64_t{63};
    if (off + len > r.size) continue;
    r.used = off + len;
    *rkey = r.rkey;
    return r.base + off;
  }
  schema(path, "no registered region of peer " + std::to_string(peer) + " has " +
                   std::to_string(len) + " free bytes with the required access");
}

Bytes random_bytes(std::mt19937_64& rng, std::uint64_t len) {
  Bytes out(len);
  for (std::uint64_t i = 0; i < len; i += 8) {
    const std::uint64_t z = rng();
    for (std::uint64_t b = 0; b < 8 && i + b < len; ++b) out[i + b] = static_cast<std::uint8_t>(z >> (8 * b));
  }
  return out;
}

// Expected request packets of one WQE, derived from the transport rules:
// FIRST/MIDDLE/LAST segmentation at the MTU, RETH on the first packet of a
// write and on a read request, ImmDt/IETH on the last packet, AckReq on the
// last packet, SE on the last packet of everything but a plain write.
std::vector<Bytes> request_frames(const CaseFile::Peer& src, const CaseFile::Peer& dst,
                                  std::uint32_t qpn, std::uint32_t mtu, std::uint32_t& psn,
                                  const CaseFile::Wqe& w) {
  using wire::Opcode;
  const auto op = w.op;
  const std::uint32_t n = w.length == 0 ? 1 : static_cast<std::uint32_t>(ceil_div(w.length, mtu));
  auto base = [&](Opcode code) {
    wire::RocePacket p;
    p.eth.dst_mac = dst.mac;
    p.eth.src_mac = src.mac;
    p.ip.src_ip = src.ip;
    p.ip.dst_ip = dst.ip;
    p.udp.src_port = CaseFile::kUdpSport;
    p.udp.dst_port = wire::kRoceV2Port;
    p.bth.opcode = code;
    p.bth.dest_qp = qpn;
    p.bth.psn = psn;
    return p;
  };
  std::vector<Bytes> out;
  if (op == rdma::WqeOpcode::Read) {
    auto p = base(Opcode::RdmaReadRequest);
    p.reth = wire::Reth{w.remote, w.rkey, w.length};
    wire::seal(p);
    out.push_back(wire::serialize(p));
    psn = (psn + n) & wire::kPsnMask;
    return out;
  }
  const bool write = op == rdma::WqeOpcode::Write || op == rdma::WqeOpcode::WriteImmdt;
  for (std::uint32_t i = 0; i < n; ++i) {
    const bool first = i == 0, last = i + 1 == n;
    Opcode code;
    if (write) {
      if (first && last) {
        code = op == rdma::WqeOpcode::WriteImmdt ? Opcode::RdmaWriteOnlyWithImmediate : Opcode::RdmaWriteOnly;
      } else if (first) {
        code = Opcode::RdmaWriteFirst;
      } else if (last) {
        code = op == rdma::WqeOpcode::WriteImmdt ? Opcode::RdmaWriteLastWithImmediate : Opcode::RdmaWriteLast;
      } else {
        code = Opcode::RdmaWriteMiddle;
      }
    } else {
      const Opcode only = op == rdma::WqeOpcode::Send        ? Opcode::SendOnly
                          : op == rdma::WqeOpcode::SendImmdt ? Opcode::SendOnlyWithImmediate
                                                             : Opcode::SendOnlyWithInvalidate;
      const Opcode tail = op == rdma::WqeOpcode::Send        ? Opcode::SendLast
                          : op == rdma::WqeOpcode::SendImmdt ? Opcode::SendLastWithImmediate
                                                             : Opcode::SendLastWithInvalidate;
      code = first && last ? only : first ? Opcode::SendFirst : last ? tail : Opcode::SendMiddle;
    }
    auto p = base(code);
    const std::uint64_t begin = std::uint64_t{i} * mtu;
    const std::uint64_t end = std::min<std::uint64_t>(begin + mtu, w.length);
    p.payload.assign(w.payload.begin() + static_cast<std::ptrdiff_t>(begin),
                     w.payload.begin() + static_cast<std::ptrdiff_t>(end));
    if (write && first) p.reth = wire::Reth{w.remote, w.rkey, w.length};
    if (last && (op == rdma::WqeOpcode::WriteImmdt || op == rdma::WqeOpcode::SendImmdt)) {
      p.immdt = wire::ImmDt{w.immediate};
    }
    if (last && op == rdma::WqeOpcode::SendInvalidate) p.ieth = wire::Ieth{w.invalidate_rkey};
    p.bth.ack_request = last;
    p.bth.solicited_event = last && op != rdma::WqeOpcode::Write;
    wire::seal(p);
    out.push_back(wire::serialize(p));
    psn = (psn + 1) & wire::kPsnMask;
  }
  return out;
}

}  // namespace

GeneratedTestcase generate(const TestcaseSpec& spec, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  std::mt19937_64 rng(spec.seed);

  CaseFile cf;
  cf.name = spec.name;
  cf.seed = spec.seed;
  cf.mtu = spec.mtu;
  cf.initial_psn = spec.initial_psn;
  cf.location = spec.qp_location;
  cf.peers[0] = {{0x02, 0, 0, 0, 0, 0x01}, 0xc0a80101};
  cf.peers[1] = {{0x02, 0, 0, 0, 0, 0x02}, 0xc0a80102};

  // Region placement: host from 4 GiB up, device from the bottom of the
  // device window, page aligned, rkeys sequential per peer from 1.
  std::vector<Region> regions;
  PhysicalAddress next[2][2] = {{4ull << 30, mem::MsbMaskConfig{}.device_base()},
                                {4ull << 30, mem::MsbMaskConfig{}.device_base()}};
  std::uint32_t next_rkey[2] = {1, 1};
  auto place = [&](std::uint32_t peer, SpaceKind space, std::uint64_t size, std::uint32_t access,
                   bool victim) {
    PhysicalAddress& n = next[peer][static_cast<int>(space)];
    Region r{peer, space, n, size, access, next_rkey[peer]++, victim, 0};
    n += ceil_div(size, 4096) * 4096;
    regions.push_back(r);
    return r.rkey;
  };
  for (const auto& m : spec.memory) place(m.peer, m.space, m.size, m.access, false);

  // Initial memory: every region starts with seeded random content.
  mem::Crossbar state[2];
  for (const auto& r : regions) state[r.peer].space(r.space).write(r.base, random_bytes(rng, r.size));
  mem::Crossbar init[2];
  for (const auto& r : regions) {
    init[r.peer].space(r.space).write(r.base, state[r.peer].space(r.space).read(r.base, r.size));
  }

  std::uint32_t depth_need[2][16] = {};
  std::uint32_t recv_need[2][16] = {};
  std::uint32_t wrid = 1;
  std::uint32_t psn[2][16];
  for (auto& row : psn) std::fill(std::begin(row), std::end(row), spec.initial_psn);
  std::map<std::string, std::uint64_t> stats;
  for (int p = 0; p < 2; ++p) {
    for (const char* k : {"completions", "completion_errors", "packets_out", "rkeys_invalidated",
                          "host_rx_frames"}) {
      stats["peer" + std::to_string(p) + "." + k] = 0;
    }
  }
  std::vector<Bytes> requests;
  std::uint32_t request_packets = 0;

  for (std::size_t e = 0; e < spec.traffic.size(); ++e) {
    const auto& t = spec.traffic[e];
    const std::string path = "$.traffic[" + std::to_string(e) + "]";
    const std::uint32_t req = t.src_peer, rsp = 1 - t.src_peer;
    const std::uint32_t qpn = t.qp + 1;
    const bool read = t.op == rdma::WqeOpcode::Read;
    const bool recv = rdma::is_send_family(t.op) || t.op == rdma::WqeOpcode::WriteImmdt;
    const std::uint32_t remote_access = read ? mem::access::kRemoteRead
                                        : rdma::is_send_family(t.op) ? mem::access::kLocal
                                                                     : mem::access::kRemoteWrite;
    const std::uint64_t span = std::uint64_t{t.payload_size} * t.batch;
    std::uint32_t local_rkey = 0, remote_rkey = 0;
    const PhysicalAddress local = carve(regions, req, span, 0, path, &local_rkey);
    const PhysicalAddress remote = carve(regions, rsp, span, remote_access, path, &remote_rkey);

    CaseFile::Entry entry;
    entry.peer = req;
    entry.qpn = qpn;
    entry.batch_mode = t.batch_mode;
    const std::uint32_t np = t.payload_size == 0 ? 1 : static_cast<std::uint32_t>(ceil_div(t.payload_size, spec.mtu));
    for (std::uint32_t i = 0; i < t.batch; ++i) {
      CaseFile::Wqe w;
      w.wrid = wrid++;
      w.op = t.op;
      w.local = local + std::uint64_t{i} * t.payload_size;
      w.remote = remote + std::uint64_t{i} * t.payload_size;
      w.length = t.payload_size;
      w.rkey = remote_rkey;
      w.immediate = static_cast<std::uint32_t>((e << 16) | i);
      if (t.op == rdma::WqeOpcode::SendInvalidate) {
        w.invalidate_rkey = place(rsp, SpaceKind::Host, 64, mem::access::kAll, true);
      }
      if (recv) {
        cf.recvs.push_back({rsp, qpn, 0x10000u + w.wrid, w.remote, t.payload_size});
        ++recv_need[rsp][t.qp];
      }
      // Golden placement: a straight copy from source to destination.
      const std::uint32_t src_peer = read ? rsp : req, dst_peer = read ? req : rsp;
      const PhysicalAddress src = read ? w.remote : w.local, dst = read ? w.local : w.remote;
      if (w.length) {
        const Bytes data = state[src_peer].read(src, w.length);
        state[dst_peer].write(dst, data);
      }
      w.payload = read || w.length == 0 ? Bytes{} : state[req].read(w.local, w.length);
      auto frames = request_frames(cf.peers[req], cf.peers[rsp], qpn, spec.mtu, psn[req][t.qp], w);
      request_packets += static_cast<std::uint32_t>(frames.size());
      for (auto& f : frames) requests.push_back(std::move(f));
      w.payload.clear();
      entry.wqes.push_back(w);
    }
    depth_need[req][t.qp] += t.batch;

    const std::string rq = "peer" + std::to_string(req) + ".";
    const std::string rs = "peer" + std::to_string(rsp) + ".";
    stats[rq + "completions"] += t.batch;
    if (read) {
      stats[rq + "packets_out"] += t.batch;
      stats[rs + "packets_out"] += std::uint64_t{t.batch} * np;
    } else {
      stats[rq + "packets_out"] += std::uint64_t{t.batch} * np;
      stats[rs + "packets_out"] += t.batch;
    }
    if (recv) stats[rs + "completions"] += t.batch;
    if (t.op == rdma::WqeOpcode::SendInvalidate) stats[rs + "rkeys_invalidated"] += t.batch;
    cf.entries.push_back(std::move(entry));
  }

  for (std::uint32_t q = 0; q < spec.num_qps; ++q) {
    std::uint32_t depth = 128;
    for (int p = 0; p < 2; ++p) depth = std::max({depth, depth_need[p][q], recv_need[p][q]});
    cf.qps.push_back({q + 1, depth});
  }
  for (const auto& r : regions) {
    cf.regions.push_back({r.peer, r.space, r.base, r.size, r.access, r.rkey, r.victim});
  }

  // Non-RDMA share of the stimulus.
  const auto non_rdma = static_cast<std::uint32_t>(std::llround(
      spec.non_rdma_ratio >= 1.0 ? 0.0
                                 : request_packets * spec.non_rdma_ratio / (1.0 - spec.non_rdma_ratio)));
  const wire::MacAddress outsider{0x02, 0, 0, 0, 0, 0x99};
  const std::uint32_t outsider_ip = 0xc0a801fe;
  for (std::uint32_t i = 0; i < non_rdma; ++i) {
    const std::uint32_t to = static_cast<std::uint32_t>(rng() % 2);
    const Bytes payload = random_bytes(rng, rng() % 200);
    Bytes frame;
    switch (rng() % 3) {
      case 0: {
        static constexpr std::uint16_t kPorts[] = {53, 123, 5000, 4790, 4792};
        frame = wire::make_udp_frame(cf.peers[to].mac, outsider, outsider_ip, cf.peers[to].ip,
                                     static_cast<std::uint16_t>(1024 + rng() % 1000),
                                     kPorts[rng() % 5], payload);
        break;
      }
      case 1:
        frame = wire::make_tcp_frame(cf.peers[to].mac, outsider, outsider_ip, cf.peers[to].ip,
                                     static_cast<std::uint16_t>(1024 + rng() % 1000), 4791, payload);
        break;
      default:
        frame = wire::make_arp_frame(outsider, outsider_ip, cf.peers[to].ip);
        break;
    }
    cf.stimulus[to].push_back({SimTime{i} * 250, std::move(frame)});
    ++stats["peer" + std::to_string(to) + ".host_rx_frames"];
  }

  // Write the tree.
  std::error_code ec;
  fs::remove_all(out_dir, ec);
  fs::create_directories(out_dir / "init");
  fs::create_directories(out_dir / "golden");
  cf.write(out_dir);
  for (std::uint32_t p = 0; p < 2; ++p) {
    const auto ranges = cf.image_ranges(p);
    const std::string stem = "peer" + std::to_string(p);
    mem::export_image(init[p], ranges, out_dir / "init" / (stem + ".bin"),
                      out_dir / "init" / (stem + ".manifest"));
    mem::export_image(state[p], ranges, out_dir / "golden" / (stem + ".bin"),
                      out_dir / "golden" / (stem + ".manifest"));
  }
  write_stats(out_dir / "golden" / "stats.txt", stats);
  std::vector<wire::DumpRecord> req_records;
  for (auto& f : requests) req_records.push_back({0, std::move(f)});
  wire::write_dump(out_dir / "golden" / "requests.bin", req_records);

  GeneratedTestcase g;
  g.dir = out_dir;
  for (const auto& entry : fs::recursive_directory_iterator(out_dir)) {
    if (entry.is_regular_file()) g.files.push_back(fs::relative(entry.path(), out_dir));
  }
  std::sort(g.files.begin(), g.files.end());
  for (const auto& e : cf.entries) g.wqes += static_cast<std::uint32_t>(e.wqes.size());
  g.request_packets = request_packets;
  g.non_rdma_frames = non_rdma;
  return g;
}

}  // namespace snicsim::testgen

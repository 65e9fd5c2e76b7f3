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

// Replay of generated testcases through the simulator, and the analysis that
// diffs results/ against golden/.

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "snicsim/sim.hpp"
#include "snicsim/testgen.hpp"
#include "testgen_files.hpp"

namespace snicsim::testgen {

namespace fs = std::filesystem;

namespace {

std::string peer_stem(std::uint32_t p) { return "peer" + std::to_string(p); }

Bytes slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void simulate(const fs::path& gen, const fs::path& out, bool debug) {
  const CaseFile cf = CaseFile::read(gen);

  sim::TestbedConfig tc;
  for (std::uint32_t p = 0; p < 2; ++p) {
    auto pc = sim::default_peer(p);
    pc.mac = cf.peers[p].mac;
    pc.ip = cf.peers[p].ip;
    tc.peers.push_back(pc);
  }
  tc.capture = true;
  tc.trace = debug;
  sim::Testbed tb(tc);

  for (const auto& q : cf.qps) {
    rdma::QpConfig base;
    base.mtu = cf.mtu;
    base.location = cf.location;
    base.sq_depth = q.depth;
    base.rq_depth = q.depth;
    // Requester and responder completions share one CQ per QP.
    base.cq_depth = 2 * q.depth;
    base.initial_psn = cf.initial_psn;
    base.peer_initial_psn = cf.initial_psn;
    base.udp_sport = CaseFile::kUdpSport;
    tb.connect(q.qpn, q.qpn, base);
  }
  for (const auto& r : cf.regions) {
    auto& peer = tb.peer(r.peer);
    const auto& mr = peer.regions.register_region(peer.memory.space(r.space), r.base, r.size, r.access);
    if (mr.rkey != r.rkey) {
      fail(ErrorCode::VerificationFailed, "region at " + hex64(r.base) + " got rkey " +
                                              std::to_string(mr.rkey) + ", configuration says " +
                                              std::to_string(r.rkey));
    }
  }
  for (std::uint32_t p = 0; p < 2; ++p) {
    mem::import_image(tb.peer(p).memory, gen / "init" / (peer_stem(p) + ".bin"),
                      gen / "init" / (peer_stem(p) + ".manifest"));
  }
  for (const auto& r : cf.recvs) tb.peer(r.peer).engine.post_recv(r.qpn, {r.wrid, r.addr, r.length});
  for (std::uint32_t p = 0; p < 2; ++p) {
    for (const auto& rec : cf.stimulus[p]) tb.inject_frame(p, rec.bytes, rec.timestamp_ns);
  }

  SimTime t = 0;
  for (const auto& e : cf.entries) {
    auto& engine = tb.peer(e.peer).engine;
    auto post = [&](const CaseFile::Wqe& w) {
      rdma::WorkQueueElement wqe;
      wqe.wrid = w.wrid;
      wqe.opcode = w.op;
      wqe.local_addr = w.local;
      wqe.remote_addr = w.remote;
      wqe.length = w.length;
      wqe.rkey = w.rkey;
      wqe.immediate = w.immediate;
      wqe.invalidate_rkey = w.invalidate_rkey;
      engine.post_wqe(e.qpn, wqe);
    };
    if (e.batch_mode) {
      for (const auto& w : e.wqes) post(w);
      tb.ring_sq_doorbell(e.peer, e.qpn, engine.qp(e.qpn).sq_posted, t);
      t = tb.poll_cq_until(e.peer, e.qpn, static_cast<std::uint32_t>(e.wqes.size()), t).time;
    } else {
      for (const auto& w : e.wqes) {
        post(w);
        tb.ring_sq_doorbell(e.peer, e.qpn, engine.qp(e.qpn).sq_posted, t);
        t = tb.poll_cq_until(e.peer, e.qpn, 1, t).time;
      }
    }
    // Receive completions on the far side would otherwise be counted by a
    // later poll on the same QP in the opposite direction.
    tb.events().run_until(t);
    tb.peer(1 - e.peer).engine.poll_cq(e.qpn, ~std::uint32_t{0}, t);
  }
  tb.run_until_idle();

  StatMap stats;
  for (std::uint32_t p = 0; p < 2; ++p) {
    auto& peer = tb.peer(p);
    const auto ranges = cf.image_ranges(p);
    mem::export_image(peer.memory, ranges, out / (peer_stem(p) + ".bin"),
                      out / (peer_stem(p) + ".manifest"));
    for (const char* k : {"completions", "completion_errors", "packets_out", "rkeys_invalidated"}) {
      stats[peer_stem(p) + "." + k] = peer.engine.stat(k);
    }
    stats[peer_stem(p) + ".host_rx_frames"] = peer.host_rx_frames;
  }
  write_stats(out / "stats.txt", stats);
  wire::write_dump(out / "capture.bin", tb.captured());
  if (debug) {
    std::ofstream tr(out / "trace.txt", std::ios::trunc);
    for (const auto& r : tb.events().trace()) {
      tr << r.time << ' ' << r.seq << ' ' << r.actor << ' ' << r.kind << '\n';
    }
  }
}

// Byte-exact comparison of two text files the runner and the generator both
// write in canonical form. Catches edits the parsers would tolerate.
std::string compare_text(const char* check, const fs::path& gold, const fs::path& res) {
  const Bytes a = slurp(gold);
  const Bytes b = slurp(res);
  const auto [ia, ib] = std::mismatch(a.begin(), a.end(), b.begin(), b.end());
  if (ia == a.end() && ib == b.end()) return {};
  return std::string(check) + ": " + gold.filename().string() + " differs at byte " +
         std::to_string(ia - a.begin());
}

std::string compare_images(const fs::path& gold, const fs::path& res) {
  for (std::uint32_t p = 0; p < 2; ++p) {
    const std::string stem = peer_stem(p);
    if (mem::read_manifest(gold / (stem + ".manifest")) != mem::read_manifest(res / (stem + ".manifest"))) {
      return "memory: " + stem + ".manifest ranges differ";
    }
    if (auto d = compare_text("memory", gold / (stem + ".manifest"), res / (stem + ".manifest"));
        !d.empty()) {
      return d;
    }
    const Bytes a = slurp(gold / (stem + ".bin"));
    const Bytes b = slurp(res / (stem + ".bin"));
    const auto [ia, ib] = std::mismatch(a.begin(), a.end(), b.begin(), b.end());
    if (ia != a.end() || ib != b.end()) {
      return "memory: " + stem + ".bin differs at offset " +
             hex64(static_cast<std::uint64_t>(ia - a.begin()));
    }
  }
  return {};
}

std::string compare_stats(const fs::path& gold, const fs::path& res) {
  const StatMap want = read_stats(gold / "stats.txt");
  const StatMap got = read_stats(res / "stats.txt");
  for (const auto& [k, v] : want) {
    auto it = got.find(k);
    const std::uint64_t g = it == got.end() ? 0 : it->second;
    if (g != v) return "stats: " + k + " expected " + std::to_string(v) + " got " + std::to_string(g);
  }
  for (const auto& [k, v] : got) {
    if (!want.count(k)) return "stats: " + k + " not expected";
  }
  return compare_text("stats", gold / "stats.txt", res / "stats.txt");
}

// Request packets grouped by (sending peer, destination QP); order within a
// group is the wire order.
using Groups = std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<Bytes>>;

Groups group_requests(const std::vector<wire::DumpRecord>& frames, const CaseFile& cf) {
  Groups g;
  for (const auto& rec : frames) {
    if (wire::classify(rec.bytes) != wire::TrafficClass::Rdma) continue;
    const auto cp = wire::parse(rec.bytes);
    const auto& pkt = *cp.packet;
    if (!wire::is_request(pkt.bth.opcode)) continue;
    std::uint32_t src = 2;
    for (std::uint32_t p = 0; p < 2; ++p) {
      if (pkt.eth.src_mac == cf.peers[p].mac) src = p;
    }
    g[{src, pkt.bth.dest_qp}].push_back(rec.bytes);
  }
  return g;
}

std::string compare_packets(const fs::path& gen, const fs::path& res, const CaseFile& cf) {
  const auto golden = wire::read_dump(gen / "golden" / "requests.bin");
  // Golden requests carry no timing; the generator writes timestamp 0.
  for (std::size_t i = 0; i < golden.size(); ++i) {
    if (golden[i].timestamp_ns != 0) {
      return "packets: golden request record " + std::to_string(i) + " has timestamp " +
             std::to_string(golden[i].timestamp_ns);
    }
  }
  const Groups want = group_requests(golden, cf);
  const Groups got = group_requests(wire::read_dump(res / "capture.bin"), cf);
  auto label = [](const auto& key) {
    return "peer" + std::to_string(key.first) + " qp" + std::to_string(key.second);
  };
  for (const auto& [key, frames] : want) {
    auto it = got.find(key);
    const std::size_t have = it == got.end() ? 0 : it->second.size();
    for (std::size_t i = 0; i < frames.size(); ++i) {
      if (i >= have) {
        return "packets: " + label(key) + " expected " + std::to_string(frames.size()) +
               " requests, captured " + std::to_string(have);
      }
      const Bytes& a = frames[i];
      const Bytes& b = it->second[i];
      const auto [ia, ib] = std::mismatch(a.begin(), a.end(), b.begin(), b.end());
      if (ia != a.end() || ib != b.end()) {
        return "packets: " + label(key) + " request " + std::to_string(i) + " differs at byte " +
               std::to_string(ia - a.begin());
      }
    }
    if (have > frames.size()) {
      return "packets: " + label(key) + " captured " + std::to_string(have - frames.size()) +
             " unexpected requests";
    }
  }
  for (const auto& [key, frames] : got) {
    if (!want.count(key)) return "packets: unexpected requests from " + label(key);
  }
  return {};
}

std::string analyse(const fs::path& dir, const TestcaseSpec& spec) {
  const fs::path gen = dir / "generated", res = dir / "results";
  if (fs::exists(res / "sim_error.txt")) {
    std::ifstream in(res / "sim_error.txt");
    std::string line;
    std::getline(in, line);
    return "simulation: " + line;
  }
  const CaseFile cf = CaseFile::read(gen);
  for (const Check c : spec.checks) {
    std::string diff;
    switch (c) {
      case Check::Memory: diff = compare_images(gen / "golden", res); break;
      case Check::Stats: diff = compare_stats(gen / "golden", res); break;
      case Check::Packets: diff = compare_packets(gen, res, cf); break;
    }
    if (!diff.empty()) return diff;
  }
  return {};
}

nlohmann::json case_json(const CaseResult& c) {
  return {{"case", c.name}, {"verdict", c.passed ? "PASS" : "FAIL"}, {"first_diff", c.first_diff}};
}

CaseResult run_case(const fs::path& dir, const std::string& name, const RunOptions& opt) {
  CaseResult r;
  r.name = name;
  const fs::path gen = dir / "generated", res = dir / "results";
  try {
    const TestcaseSpec spec = load_spec(dir / "spec.json");
    if (!opt.no_pktgen && !opt.no_sim) generate(spec, gen);
    if (!fs::exists(gen / "global.json")) fail(ErrorCode::IoError, "generated/ is missing");
    if (!opt.no_sim) {
      std::error_code ec;
      fs::remove_all(res, ec);
      fs::create_directories(res);
      try {
        simulate(gen, res, opt.debug);
      } catch (const std::exception& e) {
        std::ofstream(res / "sim_error.txt") << e.what() << '\n';
      }
    }
    if (!fs::exists(res)) fail(ErrorCode::IoError, "results/ is missing");
    r.first_diff = analyse(dir, spec);
  } catch (const std::exception& e) {
    r.first_diff = e.what();
  }
  r.passed = r.first_diff.empty();
  if (fs::exists(res)) {
    std::ofstream(res / "report.txt") << (r.passed ? "PASS " : "FAIL ") << name
                                      << (r.passed ? "" : ": " + r.first_diff) << '\n';
    std::ofstream(res / "report.json") << case_json(r).dump(2, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
  }
  return r;
}

}  // namespace

bool Report::all_passed() const { return failures() == 0; }

std::size_t Report::failures() const {
  return static_cast<std::size_t>(
      std::count_if(cases.begin(), cases.end(), [](const CaseResult& c) { return !c.passed; }));
}

std::string Report::text() const {
  std::ostringstream out;
  for (const auto& c : cases) {
    out << (c.passed ? "PASS " : "FAIL ") << c.name;
    if (!c.passed) out << ": " << c.first_diff;
    out << '\n';
  }
  out << (cases.size() - failures()) << '/' << cases.size() << " testcases passed\n";
  return out.str();
}

std::string Report::json() const {
  auto arr = nlohmann::json::array();
  for (const auto& c : cases) arr.push_back(case_json(c));
  return arr.dump(2, ' ', false, nlohmann::json::error_handler_t::replace);
}

std::vector<std::string> discover(const fs::path& root) {
  std::vector<std::string> names;
  if (!fs::is_directory(root)) fail(ErrorCode::IoError, "no testcase directory " + root.string());
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && fs::exists(e.path() / "spec.json")) names.push_back(e.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

Report run_testcases(const fs::path& root, const std::vector<std::string>& names,
                     const RunOptions& options) {
  std::vector<std::string> selected = names;
  if (selected.empty() || (selected.size() == 1 && selected[0] == "regression")) selected = discover(root);
  Report rep;
  for (const auto& n : selected) rep.cases.push_back(run_case(root / n, n, options));
  return rep;
}

}  // namespace snicsim::testgen

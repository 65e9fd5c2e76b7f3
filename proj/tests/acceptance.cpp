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


// Acceptance checks. Prints one "criterion N: PASS|FAIL <detail>" line per
// criterion and exits nonzero when any fails.
//
//   acceptance [--testcases DIR] [--only N]

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>

#include "snicsim/sim.hpp"
#include "snicsim/testgen.hpp"
#include "snicsim/wire.hpp"
#include "snicsim/workflow.hpp"

using namespace snicsim;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Bytes random_bytes(std::mt19937_64& rng, std::size_t n) {
  Bytes b(n);
  for (auto& x : b) x = static_cast<std::uint8_t>(rng());
  return b;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("snicsim_accept_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// 1. Codec round trip.
Outcome codec_roundtrip() {
  std::mt19937_64 rng(1001);
  const auto t0 = std::chrono::steady_clock::now();
  const auto ops = wire::supported_opcodes();
  int bad = 0;
  for (int i = 0; i < 10000; ++i) {
    wire::RocePacket p;
    for (auto& b : p.eth.dst_mac) b = static_cast<std::uint8_t>(rng());
    for (auto& b : p.eth.src_mac) b = static_cast<std::uint8_t>(rng());
    p.ip.src_ip = static_cast<std::uint32_t>(rng());
    p.ip.dst_ip = static_cast<std::uint32_t>(rng());
    p.ip.ttl = static_cast<std::uint8_t>(1 + rng() % 255);
    p.udp.src_port = static_cast<std::uint16_t>(rng());
    p.bth.opcode = ops[rng() % ops.size()];
    p.bth.dest_qp = static_cast<std::uint32_t>(rng()) & wire::kQpnMask;
    p.bth.psn = static_cast<std::uint32_t>(rng()) & wire::kPsnMask;
    p.bth.ack_request = rng() & 1;
    p.bth.solicited_event = rng() & 1;
    const auto h = wire::required_headers(p.bth.opcode);
    if (h.reth) p.reth = wire::Reth{rng(), static_cast<std::uint32_t>(rng()), static_cast<std::uint32_t>(rng())};
    if (h.aeth) p.aeth = wire::Aeth{static_cast<std::uint8_t>(rng() & 0x7f), static_cast<std::uint32_t>(rng()) & 0xffffff};
    if (h.immdt) p.immdt = wire::ImmDt{static_cast<std::uint32_t>(rng())};
    if (h.ieth) p.ieth = wire::Ieth{static_cast<std::uint32_t>(rng())};
    if (wire::carries_payload(p.bth.opcode)) p.payload = random_bytes(rng, rng() % 4097);
    wire::seal(p);
    const auto parsed = wire::parse(wire::serialize(p), {wire::kRoceV2Port, true});
    if (!parsed.packet || !(*parsed.packet == p)) ++bad;
  }
  const double secs = seconds_since(t0);
  return {bad == 0 && secs < 10.0, fmt("10000 packets, %d mismatches, %.2f s (limit 10 s)", bad, secs)};
}

// 2. MSB-mask routing.
Outcome routing() {
  int bad = 0;
  for (std::uint64_t a : {0xa350000000000000ull, 0xa3500003ffffffffull}) {
    bad += mem::route_address(a) != SpaceKind::Device;
  }
  std::mt19937_64 rng(1002);
  int n = 0;
  while (n < 10000) {
    const std::uint64_t a = rng();
    if ((a >> 52) == 0xa35) continue;
    bad += mem::route_address(a) != SpaceKind::Host;
    ++n;
  }
  return {bad == 0, fmt("2 boundary + 10000 random addresses, %d misrouted", bad)};
}

// 3. Data integrity over random scenarios.
Outcome data_integrity() {
  std::mt19937_64 rng(1003);
  const std::uint32_t mtus[] = {256, 512, 1024, 2048, 4096};
  const auto ops = rdma::all_wqe_opcodes();
  int bad = 0;
  std::string first;
  for (int i = 0; i < 200; ++i) {
    sim::ScenarioConfig c;
    c.op = ops[i % ops.size()];
    // Log-uniform payload in [1 B, 1 MiB].
    c.payload_size = static_cast<std::uint32_t>(std::min<double>(
        1 << 20, std::floor(std::exp2(std::uniform_real_distribution<double>(0, 20)(rng)))));
    if (i == 0) c.payload_size = 1;
    if (i == 1) c.payload_size = 1 << 20;
    c.mtu = mtus[rng() % 5];
    c.batch = 1 + static_cast<std::uint32_t>(rng() % (c.payload_size > (64u << 10) ? 4 : 16));
    c.mode = rng() % 2 ? sim::RequestMode::Batch : sim::RequestMode::Single;
    c.location = rng() % 2 ? rdma::QpLocation::DevMem : rdma::QpLocation::HostMem;
    c.seed = rng();
    const auto r = sim::run_scenario(c);
    if (!r.verified || r.completions != c.batch || r.mismatched_bytes != 0) {
      if (!bad++) {
        first = fmt("; first failure #%d %s %u B x%u: %s", i, std::string(rdma::wqe_opcode_name(c.op)).c_str(),
                    c.payload_size, c.batch, r.failure.c_str());
      }
    }
  }
  return {bad == 0, fmt("200 scenarios, %d failed", bad) + first};
}

// 4. WQE fetch pipelining.
Outcome wqe_pipelining() {
  sim::Testbed tb;
  rdma::QpConfig base;
  tb.connect(2, 2, base);
  auto& a = tb.peer(0);
  auto& b = tb.peer(1);
  const auto la = a.alloc(SpaceKind::Host, 4096);
  const auto lb = b.alloc(SpaceKind::Host, 4096);
  a.regions.register_region(a.memory.host(), la, 4096, mem::access::kAll);
  const auto rk = b.regions.register_region(b.memory.host(), lb, 4096, mem::access::kAll).rkey;
  for (std::uint32_t i = 0; i < 50; ++i) {
    rdma::WorkQueueElement w;
    w.wrid = i;
    w.opcode = rdma::WqeOpcode::Read;
    w.local_addr = la;
    w.length = 64;
    w.remote_addr = lb;
    w.rkey = rk;
    a.engine.post_wqe(2, w);
  }
  tb.ring_sq_doorbell(0, 2, 50, 0);
  tb.poll_cq_until(0, 2, 50, 0);
  const auto& log = a.engine.fetch_log();
  if (log.size() != 50) return {false, fmt("%zu fetches logged, expected 50", log.size())};
  const SimTime t0 = log[0].doorbell;
  int bad = 0;
  for (std::uint32_t i = 0; i < 50; ++i) bad += log[i].done != t0 + 680 + 40 * i;
  return {bad == 0, fmt("t0=%llu ns, first=%llu, last=%llu, %d off the t0+680+40i schedule",
                        (unsigned long long)t0, (unsigned long long)(log[0].done - t0),
                        (unsigned long long)(log[49].done - t0), bad)};
}

// 5. and 6. Throughput and latency bands from one read sweep.
sim::MetricSeries g_sweep;
double g_sweep_secs = 0;

const sim::MetricSeries& read_sweep() {
  if (g_sweep.empty()) {
    sim::BenchScenario s;
    s.op = rdma::WqeOpcode::Read;
    for (std::uint64_t b = 64; b <= (1u << 20); b *= 2) s.sizes.push_back(b);
    const auto t0 = std::chrono::steady_clock::now();
    g_sweep = sim::run_benchmark(s);
    g_sweep_secs = seconds_since(t0);
  }
  return g_sweep;
}

const sim::MetricRecord* row(const std::string& mode, std::uint64_t size) {
  for (const auto& r : read_sweep()) {
    if (r.mode == mode && r.payload_bytes == size) return &r;
  }
  return nullptr;
}

Outcome throughput_bands() {
  const auto* b16 = row("batch", 16384);
  const auto* b32 = row("batch", 32768);
  const auto* s16 = row("single", 16384);
  const bool ok = b16 && b32 && s16 && std::fabs(b16->throughput_gbps - 89.0) <= 8.9 &&
                  b32->throughput_gbps >= 90.0 && std::fabs(s16->throughput_gbps - 18.0) <= 3.6 &&
                  g_sweep_secs < 60.0;
  return {ok, fmt("batch 16K %.2f Gb/s (89 +/-10%%), batch 32K %.2f Gb/s (>= 90), single 16K %.2f Gb/s "
                  "(18 +/-20%%), sweep %.2f s (limit 60 s)",
                  b16 ? b16->throughput_gbps : 0.0, b32 ? b32->throughput_gbps : 0.0,
                  s16 ? s16->throughput_gbps : 0.0, g_sweep_secs)};
}

Outcome batch_latency() {
  double lo = 1e18, hi = 0;
  int n = 0;
  for (const auto& r : read_sweep()) {
    if (r.mode != "batch" || r.payload_bytes > 4096) continue;
    lo = std::min(lo, r.latency_ns);
    hi = std::max(hi, r.latency_ns);
    ++n;
  }
  return {n > 0 && lo >= 300 && hi <= 500,
          fmt("%d batch sizes 64 B..4 KB, per-read latency %.1f..%.1f ns (band [300, 500])", n, lo, hi)};
}

// 7. DMA bandwidth arithmetic.
Outcome dma_model() {
  mem::Crossbar xbar;
  TimingModel tm;
  const std::uint64_t gib = 1ull << 30;
  const SimTime h2d = mem::dma_transfer(xbar, {mem::DmaDirection::HostToDevice, 0, mem::kDeviceBase, gib}, tm);
  const SimTime d2h = mem::dma_transfer(xbar, {mem::DmaDirection::DeviceToHost, mem::kDeviceBase, 0, gib}, tm);
  const double g_h2d = static_cast<double>(gib) / static_cast<double>(h2d);
  const double g_d2h = static_cast<double>(gib) / static_cast<double>(d2h);
  const bool ok = std::fabs(g_h2d / 13.07 - 1) <= 0.01 && std::fabs(g_d2h / 13.00 - 1) <= 0.01;
  return {ok, fmt("1 GiB H2D %.4f GB/s (13.07 +/-1%%), D2H %.4f GB/s (13.00 +/-1%%)", g_h2d, g_d2h)};
}

// 8. Matrix multiplication workflow against a naive product.
Outcome mm_oracle() {
  std::mt19937_64 rng(1008);
  int bad = 0, order = 0;
  for (int i = 0; i < 100; ++i) {
    workflow::MatMulConfig c;
    c.m = 1 + static_cast<std::uint32_t>(rng() % 16);
    c.k = 1 + static_cast<std::uint32_t>(rng() % 16);
    c.n = 1 + static_cast<std::uint32_t>(rng() % 16);
    c.location = rng() % 2 ? rdma::QpLocation::DevMem : rdma::QpLocation::HostMem;
    c.mode = rng() % 2 ? compute::CompletionMode::Interrupt : compute::CompletionMode::Polling;
    c.seed = rng();
    const auto r = workflow::run_mm_workflow(c);
    for (std::uint32_t x = 0; x < c.m; ++x) {
      for (std::uint32_t y = 0; y < c.n; ++y) {
        std::uint32_t s = 0;
        for (std::uint32_t z = 0; z < c.k; ++z) {
          s += static_cast<std::uint32_t>(r.a[x * c.k + z]) * static_cast<std::uint32_t>(r.b[z * c.n + y]);
        }
        if (r.c.at(x * c.n + y) != static_cast<std::int32_t>(s)) {
          ++bad;
          goto next;
        }
      }
    }
  next:
    std::vector<int> seen;
    for (const auto& s : r.steps) {
      if (seen.empty() || seen.back() != s.step) seen.push_back(s.step);
    }
    order += seen != std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8};
  }
  return {bad == 0 && order == 0,
          fmt("100 random products up to 16x16x16, %d wrong, %d with steps out of order", bad, order)};
}

// 9. Shipped regression suite and corruption sensitivity.
Outcome regression_suite(const fs::path& shipped) {
  if (!fs::is_directory(shipped)) return {false, "testcase directory " + shipped.string() + " not found"};
  const fs::path root = scratch("suite");
  for (const auto& name : testgen::discover(shipped)) {
    fs::create_directories(root / name);
    fs::copy_file(shipped / name / "spec.json", root / name / "spec.json");
  }
  const auto names = testgen::discover(root);
  std::set<std::string> ops, locs, modes;
  for (const auto& n : names) {
    const auto s = testgen::load_spec(root / n / "spec.json");
    locs.insert(std::string(rdma::qp_location_name(s.qp_location)));
    for (const auto& t : s.traffic) {
      ops.insert(std::string(rdma::wqe_opcode_name(t.op)));
      modes.insert(t.batch_mode ? "batch" : "single");
    }
  }
  const auto report = testgen::run_testcases(root, {"regression"}, {});
  std::size_t passed = report.cases.size() - report.failures();

  // Flip golden bytes one at a time and re-analyse: every flip must turn the
  // case to FAIL. Small files are swept completely, large ones at 48 random
  // offsets plus both ends. One flip per case also goes through a full
  // re-simulation.
  std::mt19937_64 rng(1009);
  testgen::RunOptions analyse;
  analyse.no_sim = true;
  testgen::RunOptions reuse;
  reuse.no_pktgen = true;
  std::size_t flips = 0, caught = 0;
  std::string missed;
  auto flipped_fails = [&](const fs::path& f, std::size_t pos, const std::string& n,
                           const testgen::RunOptions& opt) {
    const std::string orig = slurp(f);
    std::string bytes = orig;
    bytes[pos] = static_cast<char>(bytes[pos] ^ static_cast<char>(1 + rng() % 255));
    std::ofstream(f, std::ios::binary | std::ios::trunc) << bytes;
    const auto r = testgen::run_testcases(root, {n}, opt);
    std::ofstream(f, std::ios::binary | std::ios::trunc) << orig;
    return !r.cases.empty() && !r.cases[0].passed;
  };
  for (const auto& n : names) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(root / n / "generated" / "golden")) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const std::size_t size = fs::file_size(f);
      std::vector<std::size_t> positions;
      if (size <= 512) {
        for (std::size_t i = 0; i < size; ++i) positions.push_back(i);
      } else {
        positions = {0, size - 1};
        for (int i = 0; i < 48; ++i) positions.push_back(rng() % size);
      }
      for (std::size_t pos : positions) {
        ++flips;
        if (flipped_fails(f, pos, n, analyse)) {
          ++caught;
        } else if (missed.size() < 200) {
          missed += " " + n + "/" + f.filename().string() + "@" + std::to_string(pos);
        }
      }
    }
    const fs::path f = files[rng() % files.size()];
    ++flips;
    if (flipped_fails(f, rng() % fs::file_size(f), n, reuse)) {
      ++caught;
    } else {
      missed += " " + n + "/" + f.filename().string() + "(resim)";
    }
  }
  fs::remove_all(root);
  const bool ok = names.size() >= 8 && passed == names.size() && ops.size() == 6 && locs.size() == 2 &&
                  modes.size() == 2 && flips > 0 && caught == flips;
  return {ok, fmt("%zu/%zu cases pass, %zu opcodes, %zu QP locations, %zu modes; %zu/%zu golden byte flips detected",
                  passed, names.size(), ops.size(), locs.size(), modes.size(), caught, flips) +
                  (missed.empty() ? "" : "; missed:" + missed)};
}

// 10. Determinism of CSV, reports and memory images.
Outcome determinism(const fs::path& shipped) {
  std::vector<std::string> diffs;
  sim::BenchScenario s;
  s.op = rdma::WqeOpcode::Write;
  s.sizes = {512, 4096, 65536};
  if (sim::format_series(sim::run_benchmark(s)) != sim::format_series(sim::run_benchmark(s))) diffs.push_back("csv");

  sim::ScenarioConfig c;
  c.op = rdma::WqeOpcode::SendImmdt;
  c.payload_size = 7777;
  c.batch = 9;
  const auto r1 = sim::run_scenario(c);
  const auto r2 = sim::run_scenario(c);
  if (r1.client_stats != r2.client_stats || r1.server_stats != r2.server_stats || r1.end != r2.end) {
    diffs.push_back("scenario report");
  }

  const fs::path dir = scratch("det");
  workflow::MatMulConfig m;
  m.m = 7;
  m.k = 9;
  m.n = 5;
  workflow::run_mm_workflow(m, dir / "a.bin", dir / "a.manifest");
  workflow::run_mm_workflow(m, dir / "b.bin", dir / "b.manifest");
  if (slurp(dir / "a.bin") != slurp(dir / "b.bin") || slurp(dir / "a.manifest") != slurp(dir / "b.manifest")) {
    diffs.push_back("mm image");
  }

  // Whole testcase result trees, minus nothing: every file must match.
  std::map<std::string, std::string> trees[2];
  const auto names = fs::is_directory(shipped) ? testgen::discover(shipped) : std::vector<std::string>{};
  for (int run = 0; run < 2; ++run) {
    const fs::path root = dir / ("run" + std::to_string(run));
    for (const auto& n : names) {
      fs::create_directories(root / n);
      fs::copy_file(shipped / n / "spec.json", root / n / "spec.json");
    }
    testgen::RunOptions dbg;
    dbg.debug = true;
    testgen::run_testcases(root, {}, dbg);
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      if (e.is_regular_file()) trees[run][fs::relative(e.path(), root).string()] = slurp(e.path());
    }
  }
  if (names.empty() || trees[0] != trees[1]) diffs.push_back("testcase trees");
  const std::size_t files = trees[0].size();
  fs::remove_all(dir);

  std::string what;
  for (const auto& d : diffs) what += " " + d;
  return {diffs.empty(), diffs.empty() ? fmt("bench CSV, scenario report, MM image and %zu testcase files identical across runs", files)
                                       : "differs:" + what};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path testcases = SNICSIM_TESTCASE_DIR;
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--testcases" && i + 1 < argc) {
      testcases = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else {
      std::fprintf(stderr, "usage: %s [--testcases DIR] [--only N]\n", argv[0]);
      return 2;
    }
  }

  const std::vector<std::function<Outcome()>> criteria{
      codec_roundtrip, routing,       data_integrity, wqe_pipelining,
      throughput_bands, batch_latency, dma_model,      mm_oracle,
      [&] { return regression_suite(testcases); },
      [&] { return determinism(testcases); },
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only && static_cast<int>(i + 1) != only) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = criteria[i]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %zu: %s %s [%.2f s]\n", i + 1, o.pass ? "PASS" : "FAIL", o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}

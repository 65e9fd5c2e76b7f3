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

// snicsim command-line front end. Talks to the simulator through the C API
// only. Exit codes: 0 success, 1 verification or simulation failure, 2 usage.

#include <arpa/inet.h>

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "snicsim/snicsim.h"

namespace {

constexpr int kOk = 0;
constexpr int kFail = 1;
constexpr int kUsage = 2;

struct Globals {
  std::string config;
  std::uint64_t seed = 1;
  int verbosity = 1;
};

int report_error(const char* what, snicsim_status s) {
  std::cerr << "error: " << what << ": " << snicsim_last_error() << '\n';
  return s == SNICSIM_ERR_INVALID_ARGUMENT || s == SNICSIM_ERR_SCHEMA ? kUsage : kFail;
}

std::uint64_t parse_u64(const std::string& text, const char* flag) {
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(text, &used, 0);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || text.empty() || text[0] == '-') {
    throw CLI::ValidationError(flag, "'" + text + "' is not an unsigned integer");
  }
  return v;
}

// Sizes with an optional K or M suffix (binary units).
std::uint64_t parse_size(std::string text) {
  std::uint64_t mult = 1;
  if (!text.empty() && (text.back() == 'K' || text.back() == 'k')) mult = 1024;
  if (!text.empty() && (text.back() == 'M' || text.back() == 'm')) mult = 1024 * 1024;
  if (mult != 1) text.pop_back();
  return parse_u64(text, "--sizes") * mult;
}

std::uint32_t parse_ip(const std::string& text, const char* flag) {
  in_addr a{};
  if (inet_pton(AF_INET, text.c_str(), &a) != 1) {
    throw CLI::ValidationError(flag, "'" + text + "' is not a dotted-quad IPv4 address");
  }
  return ntohl(a.s_addr);
}

std::string format_ip(std::uint32_t ip) {
  return std::to_string(ip >> 24) + "." + std::to_string((ip >> 16) & 0xff) + "." +
         std::to_string((ip >> 8) & 0xff) + "." + std::to_string(ip & 0xff);
}

// ---------------------------------------------------------------- dma_test

struct DmaArgs {
  std::string device = "/dev/snicsim-mm";
  std::string address;
  std::uint64_t size = 32;
  std::uint64_t offset = 0;
  std::uint64_t count = 1;
  std::string infile;
  std::string outfile;
  bool verbose = false;
  bool read = false;
};

int cmd_dma_test(const DmaArgs& a, const Globals& g) {
  constexpr std::uint64_t kHostBuffer = 0x10000000;
  const std::uint64_t base =
      a.address.empty() ? snicsim_device_base() : parse_u64(a.address, "--address");
  const std::uint64_t dev = base + a.offset;
  const std::uint64_t total = a.size * a.count;
  if (a.size == 0 || a.count == 0) {
    std::cerr << "error: size and count must be positive\n";
    return kUsage;
  }
  if (!snicsim_route_is_device(dev) || !snicsim_route_is_device(dev + total - 1)) {
    std::cerr << "error: device range 0x" << std::hex << dev << " +" << std::dec << total
              << " is outside device memory\n";
    return kFail;
  }

  std::vector<std::uint8_t> data(total);
  if (!a.read && !a.infile.empty()) {
    std::ifstream in(a.infile, std::ios::binary);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(total));
    if (static_cast<std::uint64_t>(in.gcount()) != total) {
      std::cerr << "error: " << a.infile << " holds fewer than " << total << " bytes\n";
      return kFail;
    }
  } else {
    std::mt19937_64 rng(g.seed);
    for (std::uint64_t i = 0; i < total; i += 8) {
      const std::uint64_t z = rng();
      for (std::uint64_t b = 0; b < 8 && i + b < total; ++b) data[i + b] = static_cast<std::uint8_t>(z >> (8 * b));
    }
  }

  snicsim_dma* dma = nullptr;
  if (auto s = snicsim_dma_create(&dma); s != SNICSIM_OK) return report_error("dma", s);
  int rc = kOk;
  std::vector<std::uint8_t> back(total);
  std::uint64_t elapsed = 0;
  auto check = [&](snicsim_status s) {
    if (s != SNICSIM_OK) {
      rc = report_error("dma", s);
      return false;
    }
    return true;
  };
  // The read scenario starts from device memory already holding the data;
  // the write scenario starts from the host buffer.
  if (a.read ? check(snicsim_dma_poke(dma, dev, data.data(), total))
             : check(snicsim_dma_poke(dma, kHostBuffer, data.data(), total))) {
    for (std::uint64_t i = 0; i < a.count && rc == kOk; ++i) {
      const std::uint64_t h = kHostBuffer + i * a.size, d = dev + i * a.size;
      std::uint64_t ns = 0;
      const auto dir = a.read ? SNICSIM_DMA_D2H : SNICSIM_DMA_H2D;
      if (!check(snicsim_dma_transfer(dma, dir, a.read ? d : h, a.read ? h : d, a.size, &ns))) break;
      elapsed += ns;
      if (a.verbose || g.verbosity > 1 || a.count <= 16) {
        std::printf("transfer %" PRIu64 ": %s %" PRIu64 " B host 0x%" PRIx64 " device 0x%" PRIx64
                    " in %" PRIu64 " ns (%.3f GB/s)\n",
                    i, a.read ? "d2h" : "h2d", a.size, h, d, ns, static_cast<double>(a.size) / ns);
      }
    }
    if (rc == kOk) {
      // Read back the destination side to verify the copy.
      check(a.read ? snicsim_dma_peek(dma, kHostBuffer, back.data(), total)
                   : snicsim_dma_peek(dma, dev, back.data(), total));
    }
  }
  snicsim_dma_destroy(dma);
  if (rc != kOk) return rc;

  if (!a.outfile.empty()) {
    std::ofstream out(a.outfile, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(back.data()), static_cast<std::streamsize>(total));
    if (!out) {
      std::cerr << "error: cannot write " << a.outfile << '\n';
      return kFail;
    }
  }
  const bool ok = back == data;
  std::printf("%s: %" PRIu64 " transfer(s) of %" PRIu64 " B, %" PRIu64 " ns total, %.3f GB/s, data %s\n",
              ok ? "PASS" : "FAIL", a.count, a.size, elapsed,
              elapsed ? static_cast<double>(total) / elapsed : 0.0, ok ? "verified" : "MISMATCH");
  return ok ? kOk : kFail;
}

// -------------------------------------------------------- read/write/send

struct RdmaArgs {
  std::string device = "/dev/snicsim-mm";
  std::string pcie_resource;
  std::string src_ip = "192.168.1.1";
  std::string dst_ip = "192.168.1.2";
  std::uint16_t udp_sport = 49152;
  std::uint16_t tcp_sport = 0;
  std::uint32_t dst_qp = 2;
  std::uint32_t payload_size = 4096;
  std::uint32_t batch_size = 1;
  std::string qp_location = "host_mem";
  bool server = false;
  bool client = false;
  bool debug = false;
  std::string mode;
  std::uint32_t mtu = 4096;
};

int cmd_rdma(const char* op, const RdmaArgs& a, const Globals& g) {
  snicsim_scenario_config cfg;
  snicsim_scenario_config_init(&cfg);
  cfg.op = op;
  cfg.payload_size = a.payload_size;
  cfg.batch = a.batch_size;
  const std::string mode = a.mode.empty() ? (a.batch_size > 1 ? "batch" : "single") : a.mode;
  cfg.batch_mode = mode == "batch";
  cfg.mtu = a.mtu;
  cfg.qp_location = a.qp_location.c_str();
  // Both peers run in this process; the role picks which side the local
  // addresses describe.
  const std::uint32_t local = parse_ip(a.src_ip, "--src_ip"), remote = parse_ip(a.dst_ip, "--dst_ip");
  cfg.client_ip = a.server ? remote : local;
  cfg.server_ip = a.server ? local : remote;
  cfg.udp_sport = a.udp_sport;
  cfg.server_qpn = a.dst_qp;
  cfg.seed = g.seed;

  if (g.verbosity > 0) {
    std::printf("config: op=%s role=%s src_ip=%s dst_ip=%s udp_sport=%u tcp_sport=%u (unused) "
                "dst_qp=%u payload=%u batch=%u mode=%s mtu=%u qp_location=%s\n",
                op, a.server ? "server" : "client", a.src_ip.c_str(), a.dst_ip.c_str(), a.udp_sport,
                a.tcp_sport, a.dst_qp, a.payload_size, a.batch_size, mode.c_str(), a.mtu,
                a.qp_location.c_str());
  }
  snicsim_scenario* s = nullptr;
  if (auto st = snicsim_scenario_run(&cfg, &s); st != SNICSIM_OK) return report_error(op, st);
  const bool ok = snicsim_scenario_verified(s);
  std::printf("%s: %u WQEs, %u completions, %u on the remote peer, %" PRIu64 " mismatched bytes\n",
              ok ? "PASS" : "FAIL", snicsim_scenario_wqes(s), snicsim_scenario_completions(s),
              snicsim_scenario_peer_completions(s), snicsim_scenario_mismatched_bytes(s));
  if (!ok && *snicsim_scenario_failure(s)) std::printf("failure: %s\n", snicsim_scenario_failure(s));
  std::printf("elapsed: %" PRIu64 " ns, latency: %.1f ns, throughput: %.3f Gb/s\n",
              snicsim_scenario_end_ns(s) - snicsim_scenario_start_ns(s), snicsim_scenario_latency_ns(s),
              snicsim_scenario_throughput_gbps(s));
  if (a.debug || g.verbosity > 1) {
    std::printf("-- client (%s) counters\n%s-- server (%s) counters\n%s", format_ip(cfg.client_ip).c_str(),
                snicsim_scenario_client_stats(s), format_ip(cfg.server_ip).c_str(),
                snicsim_scenario_server_stats(s));
  }
  snicsim_scenario_destroy(s);
  return ok ? kOk : kFail;
}

// ----------------------------------------------------------------- mm_demo

struct MmArgs {
  std::uint32_t m = 8, k = 8, n = 8;
  std::string qp_location = "host_mem";
  std::string completion_mode = "polling";
};

int cmd_mm_demo(const MmArgs& a, const Globals& g) {
  snicsim_mm_config cfg;
  snicsim_mm_config_init(&cfg);
  cfg.m = a.m;
  cfg.k = a.k;
  cfg.n = a.n;
  cfg.qp_location = a.qp_location.c_str();
  cfg.completion_mode = a.completion_mode.c_str();
  cfg.seed = g.seed;
  snicsim_mm* mm = nullptr;
  if (auto s = snicsim_mm_run(&cfg, &mm); s != SNICSIM_OK) return report_error("mm_demo", s);

  for (std::size_t i = 0; i < snicsim_mm_step_count(mm); ++i) {
    int step = 0;
    std::uint64_t t = 0;
    const char* detail = nullptr;
    snicsim_mm_step(mm, i, &step, &t, &detail);
    std::printf("step %d  t=%" PRIu64 " ns  %s\n", step, t, detail);
  }
  // Naive triple loop with wrapping 32-bit arithmetic.
  std::size_t na = 0, nb = 0, nc = 0;
  const std::int32_t* A = snicsim_mm_a(mm, &na);
  const std::int32_t* B = snicsim_mm_b(mm, &nb);
  const std::int32_t* C = snicsim_mm_c(mm, &nc);
  std::size_t bad = 0;
  for (std::uint32_t i = 0; i < a.m; ++i) {
    for (std::uint32_t j = 0; j < a.n; ++j) {
      std::uint32_t acc = 0;
      for (std::uint32_t p = 0; p < a.k; ++p) {
        acc += static_cast<std::uint32_t>(A[i * a.k + p]) * static_cast<std::uint32_t>(B[p * a.n + j]);
      }
      if (static_cast<std::int32_t>(acc) != C[i * a.n + j]) ++bad;
    }
  }
  const bool ok = bad == 0 && nc == std::size_t{a.m} * a.n;
  std::printf("%s: C = A(%ux%u) * B(%ux%u), %zu of %zu elements match the reference\n",
              ok ? "PASS" : "FAIL", a.m, a.k, a.k, a.n, nc - bad, nc);
  snicsim_mm_destroy(mm);
  return ok ? kOk : kFail;
}

// ------------------------------------------------------------------- bench

struct BenchArgs {
  std::string op = "read";
  std::vector<std::string> sizes{"1K", "2K", "4K", "8K", "16K", "32K", "64K", "128K", "256K", "512K", "1M"};
  std::vector<std::string> modes{"single", "batch"};
  std::uint32_t batch_size = 50;
  std::string qp_location = "host_mem";
  std::uint32_t mtu = 4096;
  std::string csv;
};

int cmd_bench(const BenchArgs& a, const Globals& g) {
  std::vector<std::uint64_t> sizes;
  for (const auto& s : a.sizes) sizes.push_back(parse_size(s));
  snicsim_bench_config cfg;
  snicsim_bench_config_init(&cfg);
  cfg.op = a.op.c_str();
  cfg.sizes = sizes.data();
  cfg.num_sizes = sizes.size();
  cfg.single = 0;
  cfg.batch_mode = 0;
  for (const auto& m : a.modes) (m == "single" ? cfg.single : cfg.batch_mode) = 1;
  cfg.batch = a.batch_size;
  cfg.mtu = a.mtu;
  cfg.qp_location = a.qp_location.c_str();
  snicsim_bench* b = nullptr;
  if (auto s = snicsim_bench_run(&cfg, &b); s != SNICSIM_OK) return report_error("bench", s);
  int rc = kOk;
  if (a.csv.empty()) {
    std::fputs(snicsim_bench_csv(b), stdout);
  } else {
    if (auto s = snicsim_bench_write_csv(b, a.csv.c_str()); s != SNICSIM_OK) {
      rc = report_error("bench", s);
    } else if (g.verbosity > 0) {
      std::printf("wrote %zu rows to %s\n", snicsim_bench_rows(b), a.csv.c_str());
    }
  }
  snicsim_bench_destroy(b);
  return rc;
}

// ----------------------------------------------------------- run_testcases

struct RunArgs {
  std::string root = "testcases";
  std::vector<std::string> positional;
  std::string tc;
  bool debug = false;
  bool roce = false;
  bool no_pktgen = false;
  bool no_sim = false;
  bool analysis_only = false;
  std::string json;
};

int cmd_run_testcases(const RunArgs& a, const Globals&) {
  std::vector<std::string> names;
  for (const auto& p : a.positional) {
    if (p != "regression") names.push_back(p);
  }
  std::istringstream tcs(a.tc);
  for (std::string n; tcs >> n;) names.push_back(n);
  std::vector<const char*> ptrs;
  for (const auto& n : names) ptrs.push_back(n.c_str());
  unsigned flags = 0;
  if (a.debug) flags |= SNICSIM_RUN_DEBUG;
  if (a.no_pktgen) flags |= SNICSIM_RUN_NO_PKTGEN;
  if (a.no_sim || a.analysis_only) flags |= SNICSIM_RUN_NO_SIM;
  snicsim_report* r = nullptr;
  if (auto s = snicsim_testgen_run(a.root.c_str(), ptrs.data(), ptrs.size(), flags, &r); s != SNICSIM_OK) {
    return report_error("run_testcases", s);
  }
  std::fputs(snicsim_report_text(r), stdout);
  int rc = snicsim_report_failures(r) == 0 && snicsim_report_cases(r) > 0 ? kOk : kFail;
  if (!a.json.empty()) {
    std::ofstream out(a.json, std::ios::trunc);
    out << snicsim_report_json(r) << '\n';
    if (!out) {
      std::cerr << "error: cannot write " << a.json << '\n';
      rc = kFail;
    }
  }
  snicsim_report_destroy(r);
  return rc;
}

// Listing-style single-dash long options of run_testcases become CLI11 long
// options.
std::vector<std::string> rewrite_run_args(std::vector<std::string> args) {
  static const std::map<std::string, std::string> kLong{
      {"-debug", "--debug"}, {"-roce", "--roce"}, {"-no_pktgen", "--no_pktgen"},
      {"-no_sim", "--no_sim"}, {"-analysis_only", "--analysis_only"}, {"-tc", "--tc"}};
  bool in_run = false;
  for (auto& a : args) {
    if (a == "run_testcases") in_run = true;
    else if (in_run) {
      auto it = kLong.find(a);
      if (it != kLong.end()) a = it->second;
    }
  }
  return args;
}

// Config file: {"seed": N, "verbosity": N, "<subcommand>": {"<long flag>": value}}.
// Values become option defaults, so explicit flags still win.
void apply_config(CLI::App& app, Globals& g, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CLI::ValidationError("--config", "cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw CLI::ValidationError("--config", e.what());
  }
  if (!j.is_object()) throw CLI::ValidationError("--config", "top level must be an object");
  auto as_text = [](const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return std::string(v.get<bool>() ? "true" : "false");
    return v.dump();
  };
  for (const auto& [key, value] : j.items()) {
    if (key == "seed") {
      g.seed = value.get<std::uint64_t>();
      continue;
    }
    if (key == "verbosity") {
      g.verbosity = value.get<int>();
      continue;
    }
    CLI::App* sub = nullptr;
    try {
      sub = app.get_subcommand(key);
    } catch (const CLI::OptionNotFound&) {
      throw CLI::ValidationError("--config", "unknown key '" + key + "'");
    }
    if (!value.is_object()) throw CLI::ValidationError("--config", "'" + key + "' must be an object");
    for (const auto& [flag, v] : value.items()) {
      CLI::Option* opt = sub->get_option_no_throw("--" + flag);
      if (!opt) throw CLI::ValidationError("--config", "unknown flag '" + key + "." + flag + "'");
      if (v.is_array()) {
        std::vector<std::string> items;
        for (const auto& x : v) items.push_back(as_text(x));
        opt->default_str(CLI::detail::join(items, ","));
        opt->default_val(CLI::detail::join(items, ","));
      } else {
        opt->default_val(as_text(v));
      }
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"snicsim: SmartNIC and RoCEv2 simulator", "snicsim"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON file with option defaults");
  auto* seed_opt = app.add_option("--seed", g.seed, "Seed for generated data")->capture_default_str();
  auto* verb_opt = app.add_option("--verbosity", g.verbosity, "0 quiet, 1 normal, 2 detailed")
                       ->check(CLI::Range(0, 2))
                       ->capture_default_str();

  DmaArgs dma;
  auto* dma_cmd = app.add_subcommand("dma_test", "Host <-> device DMA transfers");
  dma_cmd->add_option("-d,--device", dma.device, "Character device name (accepted, unused)")->capture_default_str();
  dma_cmd->add_option("-a,--address", dma.address, "Start address on the device bus (default: device base)");
  dma_cmd->add_option("-s,--size", dma.size, "Size of a single transfer in bytes")->capture_default_str();
  dma_cmd->add_option("-o,--offset", dma.offset, "Page offset of transfer")->capture_default_str();
  dma_cmd->add_option("-c,--count", dma.count, "Number of transfers")->capture_default_str();
  dma_cmd->add_option("-f,--infile", dma.infile, "File to read the data from (ignored for read)")
      ->check(CLI::ExistingFile);
  dma_cmd->add_option("-w,--outfile", dma.outfile, "File to write the transferred data to");
  dma_cmd->add_flag("-v,--verbose", dma.verbose, "Verbose output");
  dma_cmd->add_flag("-r,--read", dma.read, "Read scenario (write scenario without this flag)");

  RdmaArgs rd;
  std::map<std::string, CLI::App*> rdma_cmds;
  for (const char* name : {"read", "write", "send_recv"}) {
    const std::string desc = std::string("RDMA ") + (std::string(name) == "send_recv" ? "send/receive" : name) +
                             " scenario between two simulated peers";
    auto* c = app.add_subcommand(name, desc);
    c->add_option("-d,--device", rd.device, "Character device name (accepted, unused)")->capture_default_str();
    c->add_option("-p,--pcie_resource", rd.pcie_resource, "PCIe resource (accepted, unused)");
    c->add_option("-r,--src_ip", rd.src_ip, "Source IP address")->capture_default_str();
    c->add_option("-i,--dst_ip", rd.dst_ip, "Destination IP address")->capture_default_str();
    c->add_option("-u,--udp_sport", rd.udp_sport, "UDP source port")->capture_default_str();
    c->add_option("-t,--tcp_sport", rd.tcp_sport, "TCP source port (accepted, unused)")->capture_default_str();
    c->add_option("-q,--dst_qp", rd.dst_qp, "Destination QP number")->capture_default_str();
    c->add_option("-z,--payload_size", rd.payload_size, "Payload size in bytes")->capture_default_str();
    c->add_option("-b,--batch_size", rd.batch_size, "Batch size, number of WQEs per QP")->capture_default_str();
    c->add_option("-l,--qp_location", rd.qp_location, "QP/mem-registered buffers' location")
        ->check(CLI::IsMember({"host_mem", "dev_mem"}))
        ->capture_default_str();
    auto* srv = c->add_flag("-s,--server", rd.server, "Server node");
    c->add_flag("-c,--client", rd.client, "Client node (default)")->excludes(srv);
    c->add_flag("-g,--debug", rd.debug, "Debug mode: print engine counters");
    c->add_option("--mode", rd.mode, "single or batch (default: batch when batch_size > 1)")
        ->check(CLI::IsMember({"single", "batch"}));
    c->add_option("--mtu", rd.mtu, "Path MTU")->capture_default_str();
    rdma_cmds[name] = c;
  }

  MmArgs mm;
  auto* mm_cmd = app.add_subcommand("mm_demo", "Networked matrix multiplication on the lookaside kernel");
  mm_cmd->add_option("M", mm.m, "Rows of A")->capture_default_str();
  mm_cmd->add_option("K", mm.k, "Columns of A, rows of B")->capture_default_str();
  mm_cmd->add_option("N", mm.n, "Columns of B")->capture_default_str();
  mm_cmd->add_option("-l,--qp_location", mm.qp_location, "QP and source buffer location")
      ->check(CLI::IsMember({"host_mem", "dev_mem"}))
      ->capture_default_str();
  mm_cmd->add_option("-m,--completion_mode", mm.completion_mode, "Kernel completion: polling or interrupt")
      ->check(CLI::IsMember({"polling", "interrupt"}))
      ->capture_default_str();

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Throughput/latency sweep to CSV");
  bench_cmd->add_option("--op", bench.op, "read or write")
      ->check(CLI::IsMember({"read", "write"}))
      ->capture_default_str();
  bench_cmd->add_option("--sizes", bench.sizes, "Payload sizes, K/M suffixes allowed")
      ->delimiter(',')
      ->capture_default_str();
  bench_cmd->add_option("--modes", bench.modes, "Request modes")
      ->delimiter(',')
      ->check(CLI::IsMember({"single", "batch"}))
      ->capture_default_str();
  bench_cmd->add_option("-b,--batch_size", bench.batch_size, "WQEs per batch")->capture_default_str();
  bench_cmd->add_option("-l,--qp_location", bench.qp_location, "QP location")
      ->check(CLI::IsMember({"host_mem", "dev_mem"}))
      ->capture_default_str();
  bench_cmd->add_option("--mtu", bench.mtu, "Path MTU")->capture_default_str();
  bench_cmd->add_option("--csv", bench.csv, "Output CSV path (stdout when omitted)");

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run_testcases", "Generate, simulate and diff JSON testcases");
  run_cmd->usage("snicsim run_testcases [options] regression\n"
                 "       snicsim run_testcases [options] -tc \"testcase1 testcase2 ... testcasek\"");
  run_cmd->add_option("cases", run.positional, "'regression' or testcase names");
  run_cmd->add_option("--tc", run.tc, "Space-separated testcase names");
  run_cmd->add_option("--root", run.root, "Testcase directory")->capture_default_str();
  run_cmd->add_flag("--debug", run.debug, "Debug mode: keep an event trace in results/");
  run_cmd->add_flag("--roce", run.roce, "Generate configuration files for RDMA simulation (always on)");
  run_cmd->add_flag("--no_pktgen", run.no_pktgen, "Run testcases without re-generating packets");
  run_cmd->add_flag("--no_sim", run.no_sim, "Only run analysis on the previous simulation results");
  run_cmd->add_flag("--analysis_only", run.analysis_only, "Same as --no_sim");
  run_cmd->add_option("--json", run.json, "Also write the report as JSON");

  std::string gen_spec, gen_out;
  auto* gen_cmd = app.add_subcommand("generate", "Generate one testcase from its JSON spec");
  gen_cmd->add_option("spec", gen_spec, "spec.json")->required()->check(CLI::ExistingFile);
  gen_cmd->add_option("out_dir", gen_out, "Output directory (default: generated/ beside the spec)");

  const std::vector<std::string> fwd = rewrite_run_args({argv + 1, argv + argc});

  // The config file sets defaults, so it has to be read before parsing.
  for (std::size_t i = 0; i + 1 < fwd.size(); ++i) {
    if (fwd[i] == "--config") g.config = fwd[i + 1];
    else if (fwd[i].rfind("--config=", 0) == 0) g.config = fwd[i].substr(9);
  }
  try {
    if (!g.config.empty()) {
      apply_config(app, g, g.config);
      seed_opt->default_val(g.seed);
      verb_opt->default_val(g.verbosity);
    }
    std::vector<std::string> rev(fwd.rbegin(), fwd.rend());  // CLI11 consumes from the back
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*dma_cmd) return cmd_dma_test(dma, g);
    for (const auto& [name, c] : rdma_cmds) {
      if (*c) return cmd_rdma(name == "send_recv" ? "send" : name.c_str(), rd, g);
    }
    if (*mm_cmd) return cmd_mm_demo(mm, g);
    if (*bench_cmd) return cmd_bench(bench, g);
    if (*run_cmd) return cmd_run_testcases(run, g);
    if (*gen_cmd) {
      if (gen_out.empty()) gen_out = (std::filesystem::path(gen_spec).parent_path() / "generated").string();
      std::uint32_t wqes = 0, pkts = 0, other = 0;
      if (auto s = snicsim_testgen_generate(gen_spec.c_str(), gen_out.c_str(), &wqes, &pkts, &other);
          s != SNICSIM_OK) {
        return report_error("generate", s);
      }
      std::printf("generated %s: %u WQEs, %u request packets, %u non-RDMA frames\n", gen_out.c_str(), wqes,
                  pkts, other);
      return kOk;
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}

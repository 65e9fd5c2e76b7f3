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


#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "snicsim/sim.hpp"
#include "snicsim/workflow.hpp"
#include "support.hpp"

using namespace snicsim;
using namespace snicsim::sim;

namespace {

sim::ScenarioReport scenario(rdma::WqeOpcode op, std::uint32_t size, std::uint32_t batch,
                             RequestMode mode, rdma::QpLocation loc = rdma::QpLocation::HostMem,
                             std::uint32_t mtu = 4096) {
  ScenarioConfig c;
  c.op = op;
  c.payload_size = size;
  c.batch = batch;
  c.mode = mode;
  c.location = loc;
  c.mtu = mtu;
  return run_scenario(c);
}

// Upper bound on goodput: every packet carries at least 82 bytes of framing
// (Ethernet, IPv4, UDP, BTH, ICRC and the 24 byte preamble/gap) on 100 Gb/s.
double line_bound_gbps(std::uint64_t payload, std::uint32_t mtu) {
  const std::uint64_t pkts = payload == 0 ? 1 : (payload + mtu - 1) / mtu;
  return 100.0 * static_cast<double>(payload) / static_cast<double>(payload + 82 * pkts);
}

std::vector<std::int32_t> naive_mm(const std::vector<std::int32_t>& a,
                                   const std::vector<std::int32_t>& b, std::uint32_t m,
                                   std::uint32_t k, std::uint32_t n) {
  std::vector<std::int32_t> c(std::size_t{m} * n);
  for (std::uint32_t i = 0; i < m; ++i)
    for (std::uint32_t j = 0; j < n; ++j) {
      std::uint32_t s = 0;
      for (std::uint32_t x = 0; x < k; ++x)
        s += static_cast<std::uint32_t>(a[i * k + x]) * static_cast<std::uint32_t>(b[x * n + j]);
      c[i * n + j] = static_cast<std::int32_t>(s);
    }
  return c;
}

}  // namespace

TEST_SUITE("sim") {

TEST_CASE("every opcode verifies in both modes and both QP locations") {
  for (auto op : rdma::all_wqe_opcodes()) {
    for (auto loc : {rdma::QpLocation::HostMem, rdma::QpLocation::DevMem}) {
      for (auto mode : {RequestMode::Single, RequestMode::Batch}) {
        const auto r = scenario(op, 5000, 4, mode, loc, 2048);
        CAPTURE(rdma::wqe_opcode_name(op));
        CAPTURE(rdma::qp_location_name(loc));
        CAPTURE(request_mode_name(mode));
        CHECK(r.failure == "");
        CHECK(r.verified);
        CHECK(r.completions == 4);
      }
    }
  }
}

TEST_CASE("random scenarios verify and respect the line rate") {
  std::mt19937_64 rng(30);
  const std::uint32_t mtus[] = {256, 512, 1024, 2048, 4096};
  for (int i = 0; i < 40; ++i) {
    const auto op = rdma::all_wqe_opcodes()[rng() % rdma::all_wqe_opcodes().size()];
    const std::uint32_t size = static_cast<std::uint32_t>(rng() % 20000);
    const std::uint32_t batch = 1 + static_cast<std::uint32_t>(rng() % 8);
    const std::uint32_t mtu = mtus[rng() % 5];
    const auto mode = rng() % 2 ? RequestMode::Batch : RequestMode::Single;
    const auto r = scenario(op, size, batch, mode, rng() % 2 ? rdma::QpLocation::HostMem : rdma::QpLocation::DevMem, mtu);
    CAPTURE(i);
    CHECK(r.verified);
    CHECK(r.end > r.start);
    CHECK(r.throughput_gbps <= line_bound_gbps(size, mtu) + 1e-9);
  }
}

TEST_CASE("batching never lowers throughput") {
  for (auto op : {rdma::WqeOpcode::Read, rdma::WqeOpcode::Write}) {
    for (std::uint32_t size : {64u, 1024u, 4096u, 16384u, 65536u}) {
      const auto s = scenario(op, size, 50, RequestMode::Single);
      const auto b = scenario(op, size, 50, RequestMode::Batch);
      CAPTURE(size);
      CHECK(b.throughput_gbps >= s.throughput_gbps);
      CHECK(b.latency_ns <= s.latency_ns);
    }
  }
}

TEST_CASE("single-request latency is at least one doorbell plus one fetch") {
  const auto r = scenario(rdma::WqeOpcode::Write, 64, 1, RequestMode::Single);
  CHECK(r.latency_ns >= 300 + 680);
}

TEST_CASE("scenarios are deterministic") {
  const auto a = scenario(rdma::WqeOpcode::Read, 3000, 10, RequestMode::Batch);
  const auto b = scenario(rdma::WqeOpcode::Read, 3000, 10, RequestMode::Batch);
  CHECK(a.start == b.start);
  CHECK(a.end == b.end);
  CHECK(a.client_stats == b.client_stats);
  CHECK(a.server_stats == b.server_stats);
}

TEST_CASE("benchmark CSV layout and determinism") {
  BenchScenario s;
  s.op = rdma::WqeOpcode::Write;
  s.sizes = {1024, 4096};
  s.batch = 8;
  const auto a = run_benchmark(s);
  REQUIRE(a.size() == 4);
  CHECK(a[0].mode == "single");
  CHECK(a[0].batch == 1);
  CHECK(a[2].mode == "batch");
  CHECK(a[2].batch == 8);
  CHECK(a[1].payload_bytes == 4096);
  const std::string csv = format_series(a);
  CHECK(csv.rfind("op,mode,payload_bytes,batch,throughput_gbps,latency_ns\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  CHECK(format_series(run_benchmark(s)) == csv);

  test::TempDir dir("bench");
  emit_series(a, dir.path() / "b.csv");
  std::ifstream in(dir.path() / "b.csv");
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() == csv);
  CHECK_THROWS_AS(emit_series({}, dir.path() / "empty.csv"), Error);
  CHECK_THROWS_AS(emit_series(a, dir.path() / "missing" / "x.csv"), Error);
}

TEST_CASE("benchmark argument checks") {
  BenchScenario s;
  s.op = rdma::WqeOpcode::Send;
  s.sizes = {1024};
  CHECK_THROWS_AS(run_benchmark(s), Error);
  s.op = rdma::WqeOpcode::Read;
  s.sizes = {};
  CHECK_THROWS_AS(run_benchmark(s), Error);
  s.sizes = {0};
  CHECK_THROWS_AS(run_benchmark(s), Error);
}

TEST_CASE("non-RDMA frames are delivered to the host, not the engine") {
  Testbed tb;
  const auto& p0 = tb.peer(0).config();
  const auto& p1 = tb.peer(1).config();
  tb.inject_frame(1, wire::make_tcp_frame(p1.mac, p0.mac, p0.ip, p1.ip, 1, 80, Bytes(100, 1)), 10);
  tb.inject_frame(1, wire::make_arp_frame(p0.mac, p0.ip, p1.ip), 20);
  tb.run_until_idle();
  CHECK(tb.peer(1).host_rx_frames == 2);
  CHECK(tb.peer(1).engine.stat("packets_in") == 0);
}

}  // TEST_SUITE

TEST_SUITE("workflow") {

TEST_CASE("matrix multiplication workflow runs steps 1 to 8 in order") {
  workflow::MatMulConfig c;
  c.m = 4;
  c.k = 6;
  c.n = 3;
  const auto r = workflow::run_mm_workflow(c);
  REQUIRE(r.steps.size() >= 8);
  int expect = 1;
  SimTime prev = 0;
  for (const auto& s : r.steps) {
    CHECK(s.step >= expect);
    CHECK(s.time >= prev);
    expect = s.step;
    prev = s.time;
  }
  std::vector<int> distinct;
  for (const auto& s : r.steps)
    if (distinct.empty() || distinct.back() != s.step) distinct.push_back(s.step);
  CHECK(distinct == std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8});
  CHECK(r.c == naive_mm(r.a, r.b, 4, 6, 3));
  CHECK(r.log().find("step=8") != std::string::npos);
}

TEST_CASE("completion modes agree on the result and differ in timing") {
  std::mt19937_64 rng(31);
  for (auto loc : {rdma::QpLocation::HostMem, rdma::QpLocation::DevMem}) {
    workflow::MatMulConfig c;
    c.m = 9;
    c.k = 5;
    c.n = 7;
    c.location = loc;
    c.seed = rng();
    const auto poll = workflow::run_mm_workflow(c);
    c.mode = compute::CompletionMode::Interrupt;
    const auto irq = workflow::run_mm_workflow(c);
    CHECK(poll.c == irq.c);
    CHECK(poll.c == naive_mm(poll.a, poll.b, 9, 5, 7));
    CHECK(irq.wait.returned_at == irq.wait.status.finished + 1500);
  }
}

TEST_CASE("given inputs are used as is") {
  workflow::MatMulConfig c;
  c.m = 2;
  c.k = 2;
  c.n = 2;
  c.a = {1, 2, 3, 4};
  c.b = {5, 6, 7, 8};
  CHECK(workflow::run_mm_workflow(c).c == std::vector<std::int32_t>{19, 22, 43, 50});
}

TEST_CASE("bad dimensions fail at step 2") {
  workflow::MatMulConfig c;
  c.m = 0;
  try {
    workflow::run_mm_workflow(c);
    FAIL("zero dimension accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::WorkflowError);
    CHECK(std::string(e.what()).rfind("WorkflowError: step 2:", 0) == 0);
  }
  c.m = 2;
  c.a = {1, 2, 3};
  CHECK_THROWS_AS(workflow::run_mm_workflow(c), Error);
}

TEST_CASE("result image export") {
  test::TempDir dir("mm");
  workflow::MatMulConfig c;
  c.m = 3;
  c.k = 3;
  c.n = 3;
  const auto r = workflow::run_mm_workflow(c, dir.path() / "c.bin", dir.path() / "c.manifest");
  CHECK(std::filesystem::file_size(dir.path() / "c.bin") == 4 * 9);
  const auto ranges = mem::read_manifest(dir.path() / "c.manifest");
  REQUIRE(ranges.size() == 1);
  CHECK(ranges[0].base == r.c_addr);
  CHECK(ranges[0].space == SpaceKind::Device);
}

}  // TEST_SUITE

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

#include "snicsim/snicsim.h"

#include <new>
#include <string>

#include "snicsim/memory.hpp"
#include "snicsim/sim.hpp"
#include "snicsim/testgen.hpp"
#include "snicsim/wire.hpp"
#include "snicsim/workflow.hpp"

using namespace snicsim;

struct snicsim_dma {
  mem::Crossbar memory;
  TimingModel timing;
};

struct snicsim_scenario {
  sim::ScenarioReport report;
};

struct snicsim_mm {
  workflow::WorkflowReport report;
  std::string log;
};

struct snicsim_bench {
  sim::MetricSeries series;
  std::string csv;
};

struct snicsim_report {
  testgen::Report report;
  std::string text;
  std::string json;
};

namespace {

thread_local std::string g_last_error;

snicsim_status set_error(snicsim_status s, std::string msg) {
  g_last_error = std::move(msg);
  return s;
}

// Runs `fn`, mapping exceptions onto status codes.
template <typename Fn>
snicsim_status guarded(Fn&& fn) {
  try {
    fn();
    return SNICSIM_OK;
  } catch (const Error& e) {
    return set_error(static_cast<snicsim_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(SNICSIM_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(SNICSIM_ERR_INTERNAL, e.what());
  }
}

void require(bool ok, const char* what) {
  if (!ok) fail(ErrorCode::InvalidArgument, what);
}

std::string text_or(const char* s, const char* fallback) { return s ? s : fallback; }

}  // namespace

extern "C" {

const char* snicsim_version(void) { return "1.0.0"; }

const char* snicsim_status_name(snicsim_status status) {
  if (status == SNICSIM_OK) return "Ok";
  if (status == SNICSIM_ERR_INTERNAL) return "Internal";
  if (status >= SNICSIM_ERR_INVALID_ARGUMENT && status <= SNICSIM_ERR_WORKFLOW) {
    return error_code_name(static_cast<ErrorCode>(status)).data();
  }
  return "Unknown";
}

const char* snicsim_last_error(void) { return g_last_error.c_str(); }

uint64_t snicsim_device_base(void) { return mem::kDeviceBase; }

int snicsim_route_is_device(uint64_t addr) { return mem::route_address(addr) == SpaceKind::Device; }

int snicsim_classify_is_rdma(const uint8_t* frame, size_t len, uint16_t roce_port) {
  if (!frame && len) return 0;
  return wire::classify(ByteView(frame, len), roce_port) == wire::TrafficClass::Rdma;
}

// ---- DMA

snicsim_status snicsim_dma_create(snicsim_dma** out) {
  return guarded([&] {
    require(out, "null output handle");
    *out = new snicsim_dma();
  });
}

void snicsim_dma_destroy(snicsim_dma* dma) { delete dma; }

snicsim_status snicsim_dma_poke(snicsim_dma* dma, uint64_t addr, const uint8_t* data, size_t len) {
  return guarded([&] {
    require(dma && (data || !len), "null argument");
    dma->memory.write(addr, ByteView(data, len));
  });
}

snicsim_status snicsim_dma_peek(snicsim_dma* dma, uint64_t addr, uint8_t* out, size_t len) {
  return guarded([&] {
    require(dma && (out || !len), "null argument");
    dma->memory.read(addr, std::span<std::uint8_t>(out, len));
  });
}

snicsim_status snicsim_dma_transfer(snicsim_dma* dma, snicsim_dma_direction dir, uint64_t src,
                                    uint64_t dst, uint64_t size, uint64_t* duration_ns) {
  return guarded([&] {
    require(dma, "null handle");
    require(dir == SNICSIM_DMA_H2D || dir == SNICSIM_DMA_D2H, "unknown DMA direction");
    mem::DmaDescriptor d;
    d.direction = dir == SNICSIM_DMA_H2D ? mem::DmaDirection::HostToDevice
                                         : mem::DmaDirection::DeviceToHost;
    d.src = src;
    d.dst = dst;
    d.size = size;
    const SimTime t = mem::dma_transfer(dma->memory, d, dma->timing);
    if (duration_ns) *duration_ns = t;
  });
}

// ---- scenarios

void snicsim_scenario_config_init(snicsim_scenario_config* cfg) {
  if (!cfg) return;
  const sim::ScenarioConfig d;
  cfg->op = "read";
  cfg->payload_size = d.payload_size;
  cfg->batch = d.batch;
  cfg->batch_mode = d.mode == sim::RequestMode::Batch;
  cfg->mtu = d.mtu;
  cfg->qp_location = "host_mem";
  cfg->client_ip = d.client_ip;
  cfg->server_ip = d.server_ip;
  cfg->udp_sport = d.udp_sport;
  cfg->client_qpn = d.client_qpn;
  cfg->server_qpn = d.server_qpn;
  cfg->seed = d.seed;
}

snicsim_status snicsim_scenario_run(const snicsim_scenario_config* cfg, snicsim_scenario** out) {
  return guarded([&] {
    require(cfg && out, "null argument");
    sim::ScenarioConfig c;
    c.op = rdma::parse_wqe_opcode(text_or(cfg->op, "read"));
    c.payload_size = cfg->payload_size;
    c.batch = cfg->batch;
    c.mode = cfg->batch_mode ? sim::RequestMode::Batch : sim::RequestMode::Single;
    c.mtu = cfg->mtu;
    c.location = rdma::parse_qp_location(text_or(cfg->qp_location, "host_mem"));
    c.client_ip = cfg->client_ip;
    c.server_ip = cfg->server_ip;
    c.udp_sport = cfg->udp_sport;
    c.client_qpn = cfg->client_qpn;
    c.server_qpn = cfg->server_qpn;
    c.seed = cfg->seed;
    auto* s = new snicsim_scenario();
    try {
      s->report = sim::run_scenario(c);
    } catch (...) {
      delete s;
      throw;
    }
    *out = s;
  });
}

void snicsim_scenario_destroy(snicsim_scenario* s) { delete s; }
int snicsim_scenario_verified(const snicsim_scenario* s) { return s && s->report.verified; }
uint32_t snicsim_scenario_wqes(const snicsim_scenario* s) { return s ? s->report.wqes : 0; }
uint32_t snicsim_scenario_completions(const snicsim_scenario* s) { return s ? s->report.completions : 0; }
uint32_t snicsim_scenario_peer_completions(const snicsim_scenario* s) {
  return s ? s->report.peer_completions : 0;
}
uint64_t snicsim_scenario_mismatched_bytes(const snicsim_scenario* s) {
  return s ? s->report.mismatched_bytes : 0;
}
uint64_t snicsim_scenario_start_ns(const snicsim_scenario* s) { return s ? s->report.start : 0; }
uint64_t snicsim_scenario_end_ns(const snicsim_scenario* s) { return s ? s->report.end : 0; }
double snicsim_scenario_latency_ns(const snicsim_scenario* s) { return s ? s->report.latency_ns : 0; }
double snicsim_scenario_throughput_gbps(const snicsim_scenario* s) {
  return s ? s->report.throughput_gbps : 0;
}
const char* snicsim_scenario_failure(const snicsim_scenario* s) { return s ? s->report.failure.c_str() : ""; }
const char* snicsim_scenario_client_stats(const snicsim_scenario* s) {
  return s ? s->report.client_stats.c_str() : "";
}
const char* snicsim_scenario_server_stats(const snicsim_scenario* s) {
  return s ? s->report.server_stats.c_str() : "";
}

// ---- matrix multiplication

void snicsim_mm_config_init(snicsim_mm_config* cfg) {
  if (!cfg) return;
  cfg->m = cfg->k = cfg->n = 8;
  cfg->qp_location = "host_mem";
  cfg->completion_mode = "polling";
  cfg->seed = 1;
  cfg->a = nullptr;
  cfg->b = nullptr;
}

snicsim_status snicsim_mm_run(const snicsim_mm_config* cfg, snicsim_mm** out) {
  return guarded([&] {
    require(cfg && out, "null argument");
    workflow::MatMulConfig c;
    c.m = cfg->m;
    c.k = cfg->k;
    c.n = cfg->n;
    c.location = rdma::parse_qp_location(text_or(cfg->qp_location, "host_mem"));
    c.mode = compute::parse_completion_mode(text_or(cfg->completion_mode, "polling"));
    c.seed = cfg->seed;
    if (cfg->a) c.a.assign(cfg->a, cfg->a + std::size_t{cfg->m} * cfg->k);
    if (cfg->b) c.b.assign(cfg->b, cfg->b + std::size_t{cfg->k} * cfg->n);
    auto* mm = new snicsim_mm();
    try {
      mm->report = workflow::run_mm_workflow(c);
      mm->log = mm->report.log();
    } catch (...) {
      delete mm;
      throw;
    }
    *out = mm;
  });
}

void snicsim_mm_destroy(snicsim_mm* mm) { delete mm; }

static const int32_t* matrix(const std::vector<std::int32_t>& v, size_t* count) {
  if (count) *count = v.size();
  return v.data();
}
const int32_t* snicsim_mm_a(const snicsim_mm* mm, size_t* count) { return matrix(mm->report.a, count); }
const int32_t* snicsim_mm_b(const snicsim_mm* mm, size_t* count) { return matrix(mm->report.b, count); }
const int32_t* snicsim_mm_c(const snicsim_mm* mm, size_t* count) { return matrix(mm->report.c, count); }
size_t snicsim_mm_step_count(const snicsim_mm* mm) { return mm ? mm->report.steps.size() : 0; }

snicsim_status snicsim_mm_step(const snicsim_mm* mm, size_t index, int* step, uint64_t* time_ns,
                               const char** detail) {
  return guarded([&] {
    require(mm, "null handle");
    if (index >= mm->report.steps.size()) fail(ErrorCode::OutOfBounds, "step index out of range");
    const auto& s = mm->report.steps[index];
    if (step) *step = s.step;
    if (time_ns) *time_ns = s.time;
    if (detail) *detail = s.detail.c_str();
  });
}

const char* snicsim_mm_log(const snicsim_mm* mm) { return mm ? mm->log.c_str() : ""; }

// ---- benchmarks

void snicsim_bench_config_init(snicsim_bench_config* cfg) {
  if (!cfg) return;
  const sim::BenchScenario d;
  cfg->op = "read";
  cfg->sizes = nullptr;
  cfg->num_sizes = 0;
  cfg->single = 1;
  cfg->batch_mode = 1;
  cfg->batch = d.batch;
  cfg->mtu = d.mtu;
  cfg->qp_location = "host_mem";
}

snicsim_status snicsim_bench_run(const snicsim_bench_config* cfg, snicsim_bench** out) {
  return guarded([&] {
    require(cfg && out, "null argument");
    require(cfg->sizes || !cfg->num_sizes, "null size list");
    sim::BenchScenario b;
    b.op = rdma::parse_wqe_opcode(text_or(cfg->op, "read"));
    b.sizes.assign(cfg->sizes, cfg->sizes + cfg->num_sizes);
    b.modes.clear();
    if (cfg->single) b.modes.push_back(sim::RequestMode::Single);
    if (cfg->batch_mode) b.modes.push_back(sim::RequestMode::Batch);
    require(!b.modes.empty(), "no request mode selected");
    b.batch = cfg->batch;
    b.mtu = cfg->mtu;
    b.location = rdma::parse_qp_location(text_or(cfg->qp_location, "host_mem"));
    auto* r = new snicsim_bench();
    try {
      r->series = sim::run_benchmark(b);
      r->csv = sim::format_series(r->series);
    } catch (...) {
      delete r;
      throw;
    }
    *out = r;
  });
}

void snicsim_bench_destroy(snicsim_bench* b) { delete b; }
size_t snicsim_bench_rows(const snicsim_bench* b) { return b ? b->series.size() : 0; }

snicsim_status snicsim_bench_row(const snicsim_bench* b, size_t index, uint64_t* payload_bytes,
                                 const char** mode, double* throughput_gbps, double* latency_ns) {
  return guarded([&] {
    require(b, "null handle");
    if (index >= b->series.size()) fail(ErrorCode::OutOfBounds, "row index out of range");
    const auto& r = b->series[index];
    if (payload_bytes) *payload_bytes = r.payload_bytes;
    if (mode) *mode = r.mode.c_str();
    if (throughput_gbps) *throughput_gbps = r.throughput_gbps;
    if (latency_ns) *latency_ns = r.latency_ns;
  });
}

const char* snicsim_bench_csv(const snicsim_bench* b) { return b ? b->csv.c_str() : ""; }

snicsim_status snicsim_bench_write_csv(const snicsim_bench* b, const char* path) {
  return guarded([&] {
    require(b && path, "null argument");
    sim::emit_series(b->series, path);
  });
}

// ---- testcases

snicsim_status snicsim_testgen_validate(const char* spec_path) {
  return guarded([&] {
    require(spec_path, "null path");
    testgen::load_spec(spec_path);
  });
}

snicsim_status snicsim_testgen_generate(const char* spec_path, const char* out_dir, uint32_t* wqes,
                                        uint32_t* request_packets, uint32_t* non_rdma_frames) {
  return guarded([&] {
    require(spec_path && out_dir, "null path");
    const auto g = testgen::generate(testgen::load_spec(spec_path), out_dir);
    if (wqes) *wqes = g.wqes;
    if (request_packets) *request_packets = g.request_packets;
    if (non_rdma_frames) *non_rdma_frames = g.non_rdma_frames;
  });
}

snicsim_status snicsim_testgen_run(const char* root, const char* const* names, size_t num_names,
                                   unsigned flags, snicsim_report** out) {
  return guarded([&] {
    require(root && out, "null argument");
    require(names || !num_names, "null name list");
    std::vector<std::string> list;
    for (size_t i = 0; i < num_names; ++i) {
      require(names[i], "null testcase name");
      list.emplace_back(names[i]);
    }
    testgen::RunOptions o;
    o.debug = flags & SNICSIM_RUN_DEBUG;
    o.no_pktgen = flags & SNICSIM_RUN_NO_PKTGEN;
    o.no_sim = flags & SNICSIM_RUN_NO_SIM;
    auto* r = new snicsim_report();
    try {
      r->report = testgen::run_testcases(root, list, o);
      r->text = r->report.text();
      r->json = r->report.json();
    } catch (...) {
      delete r;
      throw;
    }
    *out = r;
  });
}

void snicsim_report_destroy(snicsim_report* r) { delete r; }
size_t snicsim_report_cases(const snicsim_report* r) { return r ? r->report.cases.size() : 0; }
size_t snicsim_report_failures(const snicsim_report* r) { return r ? r->report.failures() : 0; }

snicsim_status snicsim_report_case(const snicsim_report* r, size_t index, const char** name,
                                   int* passed, const char** first_diff) {
  return guarded([&] {
    require(r, "null handle");
    if (index >= r->report.cases.size()) fail(ErrorCode::OutOfBounds, "case index out of range");
    const auto& c = r->report.cases[index];
    if (name) *name = c.name.c_str();
    if (passed) *passed = c.passed;
    if (first_diff) *first_diff = c.first_diff.c_str();
  });
}

const char* snicsim_report_text(const snicsim_report* r) { return r ? r->text.c_str() : ""; }
const char* snicsim_report_json(const snicsim_report* r) { return r ? r->json.c_str() : ""; }

}  // extern "C"

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

#ifndef SNICSIM_SNICSIM_H
#define SNICSIM_SNICSIM_H

/* Stable C interface of libsnicsim.
 *
 * Every fallible call returns snicsim_status. On failure the message is
 * available from snicsim_last_error() on the calling thread until the next
 * failing call. Objects are opaque handles released by their _destroy
 * function; strings and arrays returned by accessors are owned by the handle
 * and stay valid until it is destroyed. Handles are not thread safe, but
 * distinct handles may be used from different threads. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define SNICSIM_API __attribute__((visibility("default")))
#else
#define SNICSIM_API
#endif

typedef enum snicsim_status {
  SNICSIM_OK = 0,
  SNICSIM_ERR_INVALID_ARGUMENT = 1,
  SNICSIM_ERR_INVALID_HEADER_COMBINATION = 2,
  SNICSIM_ERR_TRUNCATED_PACKET = 3,
  SNICSIM_ERR_BAD_ICRC = 4,
  SNICSIM_ERR_UNSUPPORTED_OPCODE = 5,
  SNICSIM_ERR_OUT_OF_BOUNDS = 6,
  SNICSIM_ERR_DUPLICATE_QPN = 7,
  SNICSIM_ERR_UNKNOWN_QPN = 8,
  SNICSIM_ERR_QUEUE_FULL = 9,
  SNICSIM_ERR_INDEX_REGRESSION = 10,
  SNICSIM_ERR_FIFO_FULL = 11,
  SNICSIM_ERR_SIM_DEADLOCK = 12,
  SNICSIM_ERR_EVENT_IN_PAST = 13,
  SNICSIM_ERR_SCHEMA = 14,
  SNICSIM_ERR_IO = 15,
  SNICSIM_ERR_VERIFICATION_FAILED = 16,
  SNICSIM_ERR_WORKFLOW = 17,
  SNICSIM_ERR_INTERNAL = 100
} snicsim_status;

SNICSIM_API const char* snicsim_version(void);
SNICSIM_API const char* snicsim_status_name(snicsim_status status);
SNICSIM_API const char* snicsim_last_error(void);

/* ---- addressing and classification ---------------------------------- */

SNICSIM_API uint64_t snicsim_device_base(void);
/* 1 when the address routes to device memory under the default mask. */
SNICSIM_API int snicsim_route_is_device(uint64_t addr);
/* 1 for RoCEv2 frames on `roce_port`, 0 otherwise. Never fails. */
SNICSIM_API int snicsim_classify_is_rdma(const uint8_t* frame, size_t len, uint16_t roce_port);

/* ---- host <-> device DMA -------------------------------------------- */

typedef struct snicsim_dma snicsim_dma;

typedef enum snicsim_dma_direction {
  SNICSIM_DMA_H2D = 0,
  SNICSIM_DMA_D2H = 1
} snicsim_dma_direction;

SNICSIM_API snicsim_status snicsim_dma_create(snicsim_dma** out);
SNICSIM_API void snicsim_dma_destroy(snicsim_dma* dma);
/* Direct (untimed) access to either memory, by physical address. */
SNICSIM_API snicsim_status snicsim_dma_poke(snicsim_dma* dma, uint64_t addr, const uint8_t* data,
                                            size_t len);
SNICSIM_API snicsim_status snicsim_dma_peek(snicsim_dma* dma, uint64_t addr, uint8_t* out,
                                            size_t len);
/* Copies `size` bytes and reports the modelled duration. */
SNICSIM_API snicsim_status snicsim_dma_transfer(snicsim_dma* dma, snicsim_dma_direction dir,
                                                uint64_t src, uint64_t dst, uint64_t size,
                                                uint64_t* duration_ns);

/* ---- RDMA transfer scenarios ---------------------------------------- */

typedef struct snicsim_scenario_config {
  const char* op;          /* read, write, send, write_imm, send_imm, send_inv */
  uint32_t payload_size;
  uint32_t batch;
  int batch_mode;          /* nonzero: one doorbell for the whole batch */
  uint32_t mtu;
  const char* qp_location; /* host_mem or dev_mem */
  uint32_t client_ip;
  uint32_t server_ip;
  uint16_t udp_sport;
  uint32_t client_qpn;
  uint32_t server_qpn;
  uint64_t seed;
} snicsim_scenario_config;

typedef struct snicsim_scenario snicsim_scenario;

SNICSIM_API void snicsim_scenario_config_init(snicsim_scenario_config* cfg);
/* Runs to completion. A scenario that fails verification still returns
 * SNICSIM_OK with snicsim_scenario_verified() == 0. */
SNICSIM_API snicsim_status snicsim_scenario_run(const snicsim_scenario_config* cfg,
                                                snicsim_scenario** out);
SNICSIM_API void snicsim_scenario_destroy(snicsim_scenario* s);
SNICSIM_API int snicsim_scenario_verified(const snicsim_scenario* s);
SNICSIM_API uint32_t snicsim_scenario_wqes(const snicsim_scenario* s);
SNICSIM_API uint32_t snicsim_scenario_completions(const snicsim_scenario* s);
SNICSIM_API uint32_t snicsim_scenario_peer_completions(const snicsim_scenario* s);
SNICSIM_API uint64_t snicsim_scenario_mismatched_bytes(const snicsim_scenario* s);
SNICSIM_API uint64_t snicsim_scenario_start_ns(const snicsim_scenario* s);
SNICSIM_API uint64_t snicsim_scenario_end_ns(const snicsim_scenario* s);
SNICSIM_API double snicsim_scenario_latency_ns(const snicsim_scenario* s);
SNICSIM_API double snicsim_scenario_throughput_gbps(const snicsim_scenario* s);
SNICSIM_API const char* snicsim_scenario_failure(const snicsim_scenario* s);
SNICSIM_API const char* snicsim_scenario_client_stats(const snicsim_scenario* s);
SNICSIM_API const char* snicsim_scenario_server_stats(const snicsim_scenario* s);

/* ---- lookaside matrix multiplication workflow ----------------------- */

typedef struct snicsim_mm_config {
  uint32_t m, k, n;
  const char* qp_location;     /* host_mem or dev_mem */
  const char* completion_mode; /* polling or interrupt */
  uint64_t seed;
  const int32_t* a;            /* optional m*k inputs, row major */
  const int32_t* b;            /* optional k*n inputs */
} snicsim_mm_config;

typedef struct snicsim_mm snicsim_mm;

SNICSIM_API void snicsim_mm_config_init(snicsim_mm_config* cfg);
SNICSIM_API snicsim_status snicsim_mm_run(const snicsim_mm_config* cfg, snicsim_mm** out);
SNICSIM_API void snicsim_mm_destroy(snicsim_mm* mm);
SNICSIM_API const int32_t* snicsim_mm_a(const snicsim_mm* mm, size_t* count);
SNICSIM_API const int32_t* snicsim_mm_b(const snicsim_mm* mm, size_t* count);
SNICSIM_API const int32_t* snicsim_mm_c(const snicsim_mm* mm, size_t* count);
SNICSIM_API size_t snicsim_mm_step_count(const snicsim_mm* mm);
SNICSIM_API snicsim_status snicsim_mm_step(const snicsim_mm* mm, size_t index, int* step,
                                           uint64_t* time_ns, const char** detail);
SNICSIM_API const char* snicsim_mm_log(const snicsim_mm* mm);

/* ---- benchmark sweeps ----------------------------------------------- */

typedef struct snicsim_bench_config {
  const char* op;          /* read or write */
  const uint64_t* sizes;
  size_t num_sizes;
  int single;              /* include single-request rows */
  int batch_mode;          /* include batch rows */
  uint32_t batch;
  uint32_t mtu;
  const char* qp_location;
} snicsim_bench_config;

typedef struct snicsim_bench snicsim_bench;

SNICSIM_API void snicsim_bench_config_init(snicsim_bench_config* cfg);
SNICSIM_API snicsim_status snicsim_bench_run(const snicsim_bench_config* cfg, snicsim_bench** out);
SNICSIM_API void snicsim_bench_destroy(snicsim_bench* b);
SNICSIM_API size_t snicsim_bench_rows(const snicsim_bench* b);
SNICSIM_API snicsim_status snicsim_bench_row(const snicsim_bench* b, size_t index,
                                             uint64_t* payload_bytes, const char** mode,
                                             double* throughput_gbps, double* latency_ns);
SNICSIM_API const char* snicsim_bench_csv(const snicsim_bench* b);
SNICSIM_API snicsim_status snicsim_bench_write_csv(const snicsim_bench* b, const char* path);

/* ---- JSON testcases ------------------------------------------------- */

SNICSIM_API snicsim_status snicsim_testgen_validate(const char* spec_path);
SNICSIM_API snicsim_status snicsim_testgen_generate(const char* spec_path, const char* out_dir,
                                                    uint32_t* wqes, uint32_t* request_packets,
                                                    uint32_t* non_rdma_frames);

enum {
  SNICSIM_RUN_DEBUG = 1 << 0,
  SNICSIM_RUN_NO_PKTGEN = 1 << 1,
  SNICSIM_RUN_NO_SIM = 1 << 2
};

typedef struct snicsim_report snicsim_report;

/* names == NULL or num_names == 0 selects every case under root. */
SNICSIM_API snicsim_status snicsim_testgen_run(const char* root, const char* const* names,
                                               size_t num_names, unsigned flags,
                                               snicsim_report** out);
SNICSIM_API void snicsim_report_destroy(snicsim_report* r);
SNICSIM_API size_t snicsim_report_cases(const snicsim_report* r);
SNICSIM_API size_t snicsim_report_failures(const snicsim_report* r);
SNICSIM_API snicsim_status snicsim_report_case(const snicsim_report* r, size_t index,
                                               const char** name, int* passed,
                                               const char** first_diff);
SNICSIM_API const char* snicsim_report_text(const snicsim_report* r);
SNICSIM_API const char* snicsim_report_json(const snicsim_report* r);

#ifdef __cplusplus
}
#endif

#endif /* SNICSIM_SNICSIM_H */

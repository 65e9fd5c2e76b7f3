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

// JSON-driven testcases. A case directory holds spec.json; generate()
// derives configuration, stimulus and golden data under generated/, and
// run_testcases() replays the case through the simulator into results/ and
// diffs against the golden files.
//
// Golden data is computed here by plain byte copies and header arithmetic,
// never by the RDMA engine, so the engine is checked against an independent
// model.

#include <filesystem>
#include <optional>
#include <string>

#include "snicsim/rdma.hpp"

namespace snicsim::testgen {

struct MemorySpec {
  std::uint32_t peer = 0;
  SpaceKind space = SpaceKind::Host;
  std::uint64_t size = 0;
  std::uint32_t access = mem::access::kAll;
};

struct TrafficSpec {
  rdma::WqeOpcode op = rdma::WqeOpcode::Write;
  std::uint32_t payload_size = 0;
  std::uint32_t batch = 1;
  std::uint32_t src_peer = 0;  // the peer that posts the WQEs
  std::uint32_t qp = 0;        // index into the connected QPs
  bool batch_mode = false;     // one doorbell for the whole batch
};

enum class Check { Memory, Stats, Packets };

struct TestcaseSpec {
  std::string name;
  std::uint64_t seed = 0;
  std::uint32_t num_qps = 1;
  std::uint32_t mtu = 4096;
  std::uint32_t initial_psn = 0;
  rdma::QpLocation qp_location = rdma::QpLocation::HostMem;
  std::vector<MemorySpec> memory;
  std::vector<TrafficSpec> traffic;
  double non_rdma_ratio = 0.0;
  std::vector<Check> checks{Check::Memory, Check::Stats, Check::Packets};
};

/// Validates and decodes a spec document. Throws SchemaError whose message
/// starts with the JSON path of the offending element (e.g. "$.foo").
TestcaseSpec parse_spec(std::string_view json_text);
TestcaseSpec load_spec(const std::filesystem::path& spec_json);

struct GeneratedTestcase {
  std::filesystem::path dir;
  std::vector<std::filesystem::path> files;  // relative to dir, sorted
  std::uint32_t wqes = 0;
  std::uint32_t request_packets = 0;
  std::uint32_t non_rdma_frames = 0;
};

/// Writes <out_dir>/... deterministically from the spec and its seed.
/// Existing content of out_dir is replaced.
GeneratedTestcase generate(const TestcaseSpec& spec, const std::filesystem::path& out_dir);

struct RunOptions {
  bool debug = false;
  bool no_pktgen = false;      // reuse generated/ as is
  bool no_sim = false;         // analyse existing results/ only
};

struct CaseResult {
  std::string name;
  bool passed = false;
  std::string first_diff;  // empty when passed
};

struct Report {
  std::vector<CaseResult> cases;
  bool all_passed() const;
  std::size_t failures() const;
  /// "PASS <name>" / "FAIL <name>: <first diff>" lines plus a summary.
  std::string text() const;
  /// Array of {"case","verdict","first_diff"} objects.
  std::string json() const;
};

/// Case names are directories under `root` holding spec.json. An empty list
/// or the single name "regression" selects every case, sorted by name.
std::vector<std::string> discover(const std::filesystem::path& root);
Report run_testcases(const std::filesystem::path& root, const std::vector<std::string>& names,
                     const RunOptions& options);

}  // namespace snicsim::testgen

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

// Networked matrix multiplication. Peer 0 ("peer1") holds A and B; peer 1
// ("peer2", the SmartNIC) pulls both with RDMA reads into device memory,
// runs the lookaside matmul kernel and reports to its host CPU.
//
//   1 connection setup          5 read completions observed
//   2 WQEs constructed          6 control message to the kernel
//   3 SQ doorbell rung          7 kernel completion (polling or interrupt)
//   4 CQ polling starts         8 result in device memory

#include <filesystem>

#include "snicsim/compute.hpp"
#include "snicsim/rdma.hpp"
#include "snicsim/sim.hpp"

namespace snicsim::workflow {

struct MatMulConfig {
  std::uint32_t m = 8;
  std::uint32_t k = 8;
  std::uint32_t n = 8;
  rdma::QpLocation location = rdma::QpLocation::HostMem;
  compute::CompletionMode mode = compute::CompletionMode::Polling;
  std::uint64_t seed = 1;
  /// Inputs; generated from `seed` in [-1024, 1024] when empty.
  std::vector<std::int32_t> a;
  std::vector<std::int32_t> b;
  sim::TestbedConfig testbed;
};

struct WorkflowStep {
  int step = 0;
  SimTime time = 0;
  std::string detail;
};

struct WorkflowReport {
  std::vector<WorkflowStep> steps;
  std::uint32_t m = 0, k = 0, n = 0;
  std::vector<std::int32_t> a;
  std::vector<std::int32_t> b;
  std::vector<std::int32_t> c;  // read back from peer2 device memory
  PhysicalAddress c_addr = 0;
  compute::WaitResult wait;

  /// One "step=<n> t=<ns> detail=..." line per step.
  std::string log() const;
};

/// Runs steps 1-8. Errors are rethrown as WorkflowError naming the step.
WorkflowReport run_mm_workflow(const MatMulConfig& config);
/// Same, also exporting the result matrix as a memory image.
WorkflowReport run_mm_workflow(const MatMulConfig& config, const std::filesystem::path& image_bin,
                               const std::filesystem::path& image_manifest);

}  // namespace snicsim::workflow

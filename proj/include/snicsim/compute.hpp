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

// Compute blocks of the NIC shell. The lookaside block hosts kernels driven
// by control messages through per-kernel control/status FIFOs; the
// streaming block sits on the packet path between MAC and NIC core.

#include <deque>
#include <map>
#include <memory>
#include <optional>

#include "snicsim/memory.hpp"
#include "snicsim/timing.hpp"
#include "snicsim/wire.hpp"

namespace snicsim::compute {

/// workload_id understood by the built-in matrix multiplication kernel.
inline constexpr std::uint32_t kMatMulWorkload = 1;
inline constexpr std::size_t kDefaultFifoDepth = 16;

struct ControlMessage {
  std::uint32_t workload_id = 0;
  std::uint32_t num_args = 0;
  std::vector<std::uint64_t> args;
};

enum class KernelStatus : std::uint8_t { Done = 0, Error = 1 };

// StatusEntry::detail values reported by the built-in kernels.
namespace detail {
inline constexpr std::uint32_t kOk = 0;
inline constexpr std::uint32_t kBadArguments = 1;
inline constexpr std::uint32_t kMemoryFault = 2;
inline constexpr std::uint32_t kUnknownWorkload = 3;
}  // namespace detail

struct StatusEntry {
  std::uint32_t workload_id = 0;
  KernelStatus status = KernelStatus::Done;
  std::uint32_t detail = 0;
  SimTime finished = 0;
  bool operator==(const StatusEntry&) const = default;
};

enum class CompletionMode { Polling, Interrupt };
std::string_view completion_mode_name(CompletionMode m) noexcept;
/// "polling" or "interrupt". Throws InvalidArgument.
CompletionMode parse_completion_mode(std::string_view text);

/// What a kernel may touch: memory through the crossbar, guarded by the
/// NIC's registered regions.
struct KernelContext {
  const mem::Crossbar& memory;
  const mem::RegionTable& regions;
  const TimingModel& timing;
};

/// Outcome of one control message. Writes are buffered and applied when the
/// modeled execution time has elapsed, so an erroring kernel leaves memory
/// untouched.
struct KernelResult {
  KernelStatus status = KernelStatus::Done;
  std::uint32_t detail = detail::kOk;
  std::vector<std::pair<PhysicalAddress, Bytes>> writes;
  std::uint64_t cycles = 1;
};

class Kernel {
 public:
  virtual ~Kernel() = default;
  virtual std::string_view name() const = 0;
  virtual KernelResult execute(const ControlMessage& msg, const KernelContext& ctx) = 0;
};

/// i32 row-major C[m][n] = A[m][k] * B[k][n] with wrapping arithmetic.
/// Arguments: a_addr, b_addr, c_addr, m, k, n. All three buffers must lie in
/// registered memory. The product is computed by stepping an output-
/// stationary systolic array wavefront by wavefront.
class MatMulKernel final : public Kernel {
 public:
  static constexpr std::uint32_t kMaxDim = 4096;

  std::string_view name() const override { return "matmul"; }
  KernelResult execute(const ControlMessage& msg, const KernelContext& ctx) override;

  /// m*n + k + array latency, plus memory streaming at lc_bytes_per_cycle.
  static std::uint64_t cycles(std::uint32_t m, std::uint32_t k, std::uint32_t n,
                              const TimingModel& timing);
};

struct KernelSlot {
  std::uint32_t kernel_id = 0;
  CompletionMode mode = CompletionMode::Polling;
  std::size_t depth = kDefaultFifoDepth;

  struct Queued {
    ControlMessage msg;
    SimTime arrival;
  };
  struct Running {
    ControlMessage msg;
    KernelResult result;
    SimTime finish;
  };

  std::deque<Queued> control_fifo;
  std::deque<StatusEntry> status_fifo;
  std::optional<Running> running;
  /// Polling mode: count of finished workloads, read by the host over MMIO.
  std::uint32_t completion_register = 0;
  /// Interrupt mode: delivery time of each status entry still in the FIFO.
  std::deque<SimTime> interrupts;
  std::uint64_t consumed = 0;
};

struct WaitResult {
  StatusEntry status;
  SimTime returned_at = 0;
  std::uint32_t polls = 0;
};

class LookasideBlock {
 public:
  LookasideBlock(mem::Crossbar& memory, const mem::RegionTable& regions, const TimingModel& timing);

  /// Maps a workload_id to the kernel that executes it. The matmul kernel is
  /// preregistered under kMatMulWorkload.
  void register_kernel(std::uint32_t workload_id, std::shared_ptr<Kernel> kernel);
  /// Throws InvalidArgument on a duplicate kernel_id or zero depth.
  KernelSlot& add_slot(std::uint32_t kernel_id, CompletionMode mode,
                       std::size_t depth = kDefaultFifoDepth);
  bool has_slot(std::uint32_t kernel_id) const noexcept { return slots_.count(kernel_id) != 0; }
  KernelSlot& slot(std::uint32_t kernel_id);
  const KernelSlot& slot(std::uint32_t kernel_id) const;

  /// Host writes a control message at `now`. Throws FifoFull.
  void lc_submit(std::uint32_t kernel_id, ControlMessage msg, SimTime now);
  /// Retires a finished workload and starts the next queued one. Returns the
  /// status entry produced by this step, if any.
  std::optional<StatusEntry> lc_step(std::uint32_t kernel_id, SimTime now);
  /// Next time lc_step has something to do.
  std::optional<SimTime> next_event(std::uint32_t kernel_id) const;
  /// Host waits from `now` for the oldest status entry and pops it. Polling
  /// reads the completion register once per poll period; interrupt mode
  /// returns at the interrupt delivery time. Steps the kernel as needed.
  /// Throws SimDeadlock when nothing is queued, running or finished.
  WaitResult lc_wait(std::uint32_t kernel_id, SimTime now);

 private:
  mem::Crossbar& memory_;
  const mem::RegionTable& regions_;
  TimingModel timing_;
  std::map<std::uint32_t, std::shared_ptr<Kernel>> kernels_;
  std::map<std::uint32_t, KernelSlot> slots_;
};

enum class StreamPort { RdmaEngine, Host };
std::string_view stream_port_name(StreamPort p) noexcept;

struct StreamOutput {
  StreamPort port;
  Bytes frame;
};

class StreamKernel {
 public:
  virtual ~StreamKernel() = default;
  virtual std::uint32_t kernel_id() const = 0;
  virtual std::vector<StreamOutput> process(ByteView frame, SimTime now) = 0;
};

/// Built-in streaming kernel: RoCEv2 frames to the RDMA engine, everything
/// else to the host. Bytes pass through untouched.
class ClassifierKernel final : public StreamKernel {
 public:
  explicit ClassifierKernel(std::uint16_t roce_port = wire::kRoceV2Port) : roce_port_(roce_port) {}

  std::uint32_t kernel_id() const override { return 0; }
  std::vector<StreamOutput> process(ByteView frame, SimTime now) override;

  std::uint64_t rdma_frames() const noexcept { return rdma_; }
  std::uint64_t host_frames() const noexcept { return host_; }

 private:
  std::uint16_t roce_port_;
  std::uint64_t rdma_ = 0;
  std::uint64_t host_ = 0;
};

inline std::vector<StreamOutput> sc_process(StreamKernel& kernel, ByteView frame, SimTime now) {
  return kernel.process(frame, now);
}

}  // namespace snicsim::compute

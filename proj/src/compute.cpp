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

#include "snicsim/compute.hpp"

#include <algorithm>

namespace snicsim::compute {

std::string_view completion_mode_name(CompletionMode m) noexcept {
  return m == CompletionMode::Polling ? "polling" : "interrupt";
}

CompletionMode parse_completion_mode(std::string_view text) {
  if (text == "polling" || text == "poll") return CompletionMode::Polling;
  if (text == "interrupt" || text == "irq") return CompletionMode::Interrupt;
  fail(ErrorCode::InvalidArgument,
       "completion mode must be polling or interrupt, got '" + std::string(text) + "'");
}

std::uint64_t MatMulKernel::cycles(std::uint32_t m, std::uint32_t k, std::uint32_t n,
                                   const TimingModel& timing) {
  const std::uint64_t bytes = 4ull * (std::uint64_t{m} * k + std::uint64_t{k} * n +
                                      std::uint64_t{m} * n);
  return ceil_div(bytes, timing.lc_bytes_per_cycle) + std::uint64_t{m} * n + k +
         timing.lc_array_latency_cycles;
}

KernelResult MatMulKernel::execute(const ControlMessage& msg, const KernelContext& ctx) {
  KernelResult r;
  auto reject = [&](std::uint32_t why) {
    r.status = KernelStatus::Error;
    r.detail = why;
    r.cycles = 1;
    return r;
  };
  if (msg.num_args != msg.args.size() || msg.args.size() != 6) return reject(detail::kBadArguments);
  const PhysicalAddress a_addr = msg.args[0];
  const PhysicalAddress b_addr = msg.args[1];
  const PhysicalAddress c_addr = msg.args[2];
  for (int i = 3; i < 6; ++i) {
    if (msg.args[i] == 0 || msg.args[i] > kMaxDim) return reject(detail::kBadArguments);
  }
  const auto m = static_cast<std::uint32_t>(msg.args[3]);
  const auto k = static_cast<std::uint32_t>(msg.args[4]);
  const auto n = static_cast<std::uint32_t>(msg.args[5]);
  const std::uint64_t a_len = 4ull * m * k;
  const std::uint64_t b_len = 4ull * k * n;
  const std::uint64_t c_len = 4ull * m * n;
  auto reachable = [&](PhysicalAddress addr, std::uint64_t len) {
    return ctx.memory.contains(addr, len) && ctx.regions.covered(addr, len, mem::access::kLocal);
  };
  if (!reachable(a_addr, a_len) || !reachable(b_addr, b_len) || !reachable(c_addr, c_len)) {
    return reject(detail::kMemoryFault);
  }

  const Bytes a = ctx.memory.read(a_addr, a_len);
  const Bytes b = ctx.memory.read(b_addr, b_len);
  auto at = [](const Bytes& buf, std::uint64_t idx) { return get_le32(buf.data() + 4 * idx); };

  // PE(i,j) sees A[i][kk] and B[kk][j] at wavefront t = i + j + kk.
  std::vector<std::uint32_t> acc(std::uint64_t{m} * n, 0);
  const std::uint64_t waves = std::uint64_t{m} + n + k - 2;
  for (std::uint64_t t = 0; t <= waves; ++t) {
    for (std::uint32_t i = 0; i < m && i <= t; ++i) {
      const std::uint64_t rest = t - i;
      const std::uint64_t j_lo = rest >= k ? rest - k + 1 : 0;
      const std::uint64_t j_hi = std::min<std::uint64_t>(n - 1, rest);
      for (std::uint64_t j = j_lo; j <= j_hi && j < n; ++j) {
        const std::uint64_t kk = rest - j;
        acc[i * n + j] += at(a, std::uint64_t{i} * k + kk) * at(b, kk * n + j);
      }
    }
  }

  Bytes c(c_len);
  for (std::uint64_t idx = 0; idx < acc.size(); ++idx) put_le32(c.data() + 4 * idx, acc[idx]);
  r.writes.emplace_back(c_addr, std::move(c));
  r.cycles = cycles(m, k, n, ctx.timing);
  return r;
}

LookasideBlock::LookasideBlock(mem::Crossbar& memory, const mem::RegionTable& regions,
                               const TimingModel& timing)
    : memory_(memory), regions_(regions), timing_(timing) {
  kernels_[kMatMulWorkload] = std::make_shared<MatMulKernel>();
}

void LookasideBlock::register_kernel(std::uint32_t workload_id, std::shared_ptr<Kernel> kernel) {
  if (!kernel) fail(ErrorCode::InvalidArgument, "null kernel");
  kernels_[workload_id] = std::move(kernel);
}

KernelSlot& LookasideBlock::add_slot(std::uint32_t kernel_id, CompletionMode mode,
                                     std::size_t depth) {
  if (depth == 0) fail(ErrorCode::InvalidArgument, "FIFO depth must be positive");
  if (slots_.count(kernel_id)) {
    fail(ErrorCode::InvalidArgument, "kernel slot " + std::to_string(kernel_id) + " exists");
  }
  KernelSlot s;
  s.kernel_id = kernel_id;
  s.mode = mode;
  s.depth = depth;
  return slots_.emplace(kernel_id, std::move(s)).first->second;
}

KernelSlot& LookasideBlock::slot(std::uint32_t kernel_id) {
  auto it = slots_.find(kernel_id);
  if (it == slots_.end()) {
    fail(ErrorCode::InvalidArgument, "no kernel slot " + std::to_string(kernel_id));
  }
  return it->second;
}

const KernelSlot& LookasideBlock::slot(std::uint32_t kernel_id) const {
  return const_cast<LookasideBlock*>(this)->slot(kernel_id);
}

void LookasideBlock::lc_submit(std::uint32_t kernel_id, ControlMessage msg, SimTime now) {
  auto& s = slot(kernel_id);
  if (s.control_fifo.size() >= s.depth) {
    fail(ErrorCode::FifoFull, "control FIFO of kernel " + std::to_string(kernel_id) +
                                  " holds " + std::to_string(s.depth) + " messages");
  }
  s.control_fifo.push_back({std::move(msg), now});
}

std::optional<StatusEntry> LookasideBlock::lc_step(std::uint32_t kernel_id, SimTime now) {
  auto& s = slot(kernel_id);
  std::optional<StatusEntry> out;
  if (s.running && s.running->finish <= now) {
    auto& run = *s.running;
    if (run.result.status == KernelStatus::Done) {
      for (const auto& [addr, bytes] : run.result.writes) memory_.write(addr, bytes);
    }
    StatusEntry st{run.msg.workload_id, run.result.status, run.result.detail, run.finish};
    s.status_fifo.push_back(st);
    ++s.consumed;
    if (s.mode == CompletionMode::Polling) {
      ++s.completion_register;
    } else {
      s.interrupts.push_back(run.finish + timing_.interrupt_latency);
    }
    s.running.reset();
    out = st;
  }
  if (!s.running && !s.control_fifo.empty() && s.control_fifo.front().arrival <= now) {
    auto q = std::move(s.control_fifo.front());
    s.control_fifo.pop_front();
    KernelResult result;
    auto it = kernels_.find(q.msg.workload_id);
    if (it == kernels_.end()) {
      result.status = KernelStatus::Error;
      result.detail = detail::kUnknownWorkload;
    } else {
      result = it->second->execute(q.msg, KernelContext{memory_, regions_, timing_});
    }
    const SimTime finish = now + std::max<std::uint64_t>(result.cycles, 1) * timing_.lc_cycle_ns;
    s.running = KernelSlot::Running{std::move(q.msg), std::move(result), finish};
  }
  return out;
}

std::optional<SimTime> LookasideBlock::next_event(std::uint32_t kernel_id) const {
  const auto& s = slot(kernel_id);
  if (s.running) return s.running->finish;
  if (!s.control_fifo.empty()) return s.control_fifo.front().arrival;
  return std::nullopt;
}

WaitResult LookasideBlock::lc_wait(std::uint32_t kernel_id, SimTime now) {
  auto& s = slot(kernel_id);
  while (s.status_fifo.empty()) {
    const auto next = next_event(kernel_id);
    if (!next) {
      fail(ErrorCode::SimDeadlock,
           "waiting on kernel " + std::to_string(kernel_id) + " with no workload submitted");
    }
    lc_step(kernel_id, *next);
  }
  WaitResult w;
  w.status = s.status_fifo.front();
  s.status_fifo.pop_front();
  if (s.mode == CompletionMode::Polling) {
    const SimTime period = timing_.poll_period();
    const SimTime ready = w.status.finished;
    const std::uint64_t k = ready <= now ? 1 : std::max<std::uint64_t>(1, ceil_div(ready - now, period));
    w.polls = static_cast<std::uint32_t>(k);
    w.returned_at = now + k * period;
  } else {
    const SimTime delivered = s.interrupts.front();
    s.interrupts.pop_front();
    w.returned_at = std::max(now, delivered);
  }
  return w;
}

std::string_view stream_port_name(StreamPort p) noexcept {
  return p == StreamPort::RdmaEngine ? "rdma" : "host";
}

std::vector<StreamOutput> ClassifierKernel::process(ByteView frame, SimTime) {
  const bool rdma = wire::classify(frame, roce_port_) == wire::TrafficClass::Rdma;
  ++(rdma ? rdma_ : host_);
  return {{rdma ? StreamPort::RdmaEngine : StreamPort::Host, Bytes(frame.begin(), frame.end())}};
}

}  // namespace snicsim::compute

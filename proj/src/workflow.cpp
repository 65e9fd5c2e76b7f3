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

#include "snicsim/workflow.hpp"

#include <sstream>

namespace snicsim::workflow {

namespace {

constexpr std::uint32_t kQpn = 1;
constexpr std::uint32_t kKernelId = 0;

std::vector<std::int32_t> random_matrix(std::size_t count, std::uint64_t& state) {
  std::vector<std::int32_t> v(count);
  for (auto& x : v) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z ^= z >> 31;
    x = static_cast<std::int32_t>(z % 2049) - 1024;
  }
  return v;
}

Bytes to_bytes(const std::vector<std::int32_t>& v) {
  Bytes out(v.size() * 4);
  for (std::size_t i = 0; i < v.size(); ++i) put_le32(out.data() + 4 * i, static_cast<std::uint32_t>(v[i]));
  return out;
}

template <typename Fn>
auto at_step(int step, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    fail(ErrorCode::WorkflowError, "step " + std::to_string(step) + ": " + e.what());
  }
}

WorkflowReport run(const MatMulConfig& cfg, const std::filesystem::path* bin,
                   const std::filesystem::path* manifest) {
  WorkflowReport rep;
  rep.m = cfg.m;
  rep.k = cfg.k;
  rep.n = cfg.n;
  auto log = [&](int step, SimTime t, std::string detail) {
    rep.steps.push_back({step, t, std::move(detail)});
  };

  // 1: both peers up, QPs connected, kernel slot configured.
  sim::Testbed tb(cfg.testbed);
  auto& holder = tb.peer(0);
  auto& nic = tb.peer(1);
  at_step(1, [&] {
    rdma::QpConfig qpc;
    qpc.location = cfg.location;
    tb.connect(kQpn, kQpn, qpc);
    nic.lookaside.add_slot(kKernelId, cfg.mode);
    return 0;
  });
  log(1, 0, "qp=" + std::to_string(kQpn) + " location=" +
                std::string(rdma::qp_location_name(cfg.location)) +
                " completion=" + std::string(compute::completion_mode_name(cfg.mode)));

  // 2: validate, place data, build the two read WQEs.
  PhysicalAddress a_src = 0, b_src = 0, a_dev = 0, b_dev = 0, c_dev = 0;
  std::uint32_t rkey = 0;
  at_step(2, [&] {
    if (cfg.m == 0 || cfg.k == 0 || cfg.n == 0) {
      fail(ErrorCode::InvalidArgument, "matrix dimensions must be positive");
    }
    if (cfg.m > compute::MatMulKernel::kMaxDim || cfg.k > compute::MatMulKernel::kMaxDim ||
        cfg.n > compute::MatMulKernel::kMaxDim) {
      fail(ErrorCode::InvalidArgument, "matrix dimension above " +
                                           std::to_string(compute::MatMulKernel::kMaxDim));
    }
    const std::size_t a_count = std::size_t{cfg.m} * cfg.k;
    const std::size_t b_count = std::size_t{cfg.k} * cfg.n;
    std::uint64_t state = cfg.seed;
    rep.a = cfg.a.empty() ? random_matrix(a_count, state) : cfg.a;
    rep.b = cfg.b.empty() ? random_matrix(b_count, state) : cfg.b;
    if (rep.a.size() != a_count || rep.b.size() != b_count) {
      fail(ErrorCode::InvalidArgument, "input matrices do not match the dimensions");
    }
    const SpaceKind space = rdma::space_of(cfg.location);
    const std::uint64_t a_len = 4ull * a_count, b_len = 4ull * b_count;
    const std::uint64_t c_len = 4ull * cfg.m * cfg.n;
    a_src = holder.alloc(space, a_len, 4096);
    b_src = holder.alloc(space, b_len, 4096);
    holder.memory.write(a_src, to_bytes(rep.a));
    holder.memory.write(b_src, to_bytes(rep.b));
    rkey = holder.regions
               .register_region(holder.memory.space(space), a_src, b_src + b_len - a_src,
                                mem::access::kLocal | mem::access::kRemoteRead)
               .rkey;
    a_dev = nic.alloc(SpaceKind::Device, a_len, 4096);
    b_dev = nic.alloc(SpaceKind::Device, b_len, 4096);
    c_dev = nic.alloc(SpaceKind::Device, c_len, 4096);
    nic.regions.register_region(nic.memory.device(), a_dev, c_dev + c_len - a_dev,
                                mem::access::kAll);
    rdma::WorkQueueElement ra;
    ra.wrid = 1;
    ra.opcode = rdma::WqeOpcode::Read;
    ra.local_addr = a_dev;
    ra.remote_addr = a_src;
    ra.length = static_cast<std::uint32_t>(a_len);
    ra.rkey = rkey;
    rdma::WorkQueueElement rb = ra;
    rb.wrid = 2;
    rb.local_addr = b_dev;
    rb.remote_addr = b_src;
    rb.length = static_cast<std::uint32_t>(b_len);
    nic.engine.post_wqe(kQpn, ra);
    nic.engine.post_wqe(kQpn, rb);
    return 0;
  });
  rep.c_addr = c_dev;
  log(2, 0, "wqes=2 dims=" + std::to_string(cfg.m) + "x" + std::to_string(cfg.k) + "x" +
                std::to_string(cfg.n) + " rkey=" + std::to_string(rkey));

  // 3: one doorbell for both reads.
  at_step(3, [&] {
    tb.ring_sq_doorbell(1, kQpn, 2, 0);
    return 0;
  });
  log(3, 0, "sq_doorbell=2");

  // 4, 5: poll the CQ doorbell until both reads have landed.
  log(4, 0, "polling cq period=" + std::to_string(tb.config().timing.poll_period()));
  const auto polled = at_step(5, [&] {
    auto r = tb.poll_cq_until(1, kQpn, 2, 0);
    for (const auto& c : r.completions) {
      if (c.status != rdma::CompletionStatus::Success) {
        fail(ErrorCode::VerificationFailed,
             "read wrid=" + std::to_string(c.wrid) + " completed with " +
                 std::string(rdma::completion_status_name(c.status)));
      }
    }
    return r;
  });
  const SimTime t5 = polled.time;
  log(5, t5, "completions=2 polls=" + std::to_string(polled.polls));

  // 6: control message to the kernel.
  compute::ControlMessage msg;
  msg.workload_id = compute::kMatMulWorkload;
  msg.args = {a_dev, b_dev, c_dev, cfg.m, cfg.k, cfg.n};
  msg.num_args = static_cast<std::uint32_t>(msg.args.size());
  at_step(6, [&] {
    tb.lc_submit(1, kKernelId, msg, t5);
    return 0;
  });
  log(6, t5, "workload=" + std::to_string(msg.workload_id) + " args=6");

  // 7: wait for the kernel.
  rep.wait = at_step(7, [&] {
    auto w = tb.lc_wait(1, kKernelId, t5);
    if (w.status.status != compute::KernelStatus::Done) {
      fail(ErrorCode::VerificationFailed, "kernel status detail " + std::to_string(w.status.detail));
    }
    return w;
  });
  log(7, rep.wait.returned_at,
      std::string(compute::completion_mode_name(cfg.mode)) +
          " kernel_done=" + std::to_string(rep.wait.status.finished));

  // 8: result is in device memory.
  at_step(8, [&] {
    tb.run_until_idle();
    const Bytes c = nic.memory.read(c_dev, 4ull * cfg.m * cfg.n);
    rep.c.resize(std::size_t{cfg.m} * cfg.n);
    for (std::size_t i = 0; i < rep.c.size(); ++i) {
      rep.c[i] = static_cast<std::int32_t>(get_le32(c.data() + 4 * i));
    }
    if (bin && manifest) {
      const mem::ImageRange r{SpaceKind::Device, c_dev, 4ull * cfg.m * cfg.n};
      mem::export_image(nic.memory, std::span<const mem::ImageRange>(&r, 1), *bin, *manifest);
    }
    return 0;
  });
  log(8, rep.wait.returned_at, "c=" + hex64(c_dev) + " elements=" + std::to_string(rep.c.size()));
  return rep;
}

}  // namespace

std::string WorkflowReport::log() const {
  std::ostringstream out;
  for (const auto& s : steps) out << "step=" << s.step << " t=" << s.time << " detail=" << s.detail << '\n';
  return out.str();
}

WorkflowReport run_mm_workflow(const MatMulConfig& config) { return run(config, nullptr, nullptr); }

WorkflowReport run_mm_workflow(const MatMulConfig& config, const std::filesystem::path& image_bin,
                               const std::filesystem::path& image_manifest) {
  return run(config, &image_bin, &image_manifest);
}

}  // namespace snicsim::workflow

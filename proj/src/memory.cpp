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

#include "snicsim/memory.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

namespace snicsim::mem {

std::string_view space_name(SpaceKind kind) noexcept {
  return kind == SpaceKind::Host ? "host" : "device";
}

SpaceKind parse_space(std::string_view text) {
  if (text == "host" || text == "host_mem") return SpaceKind::Host;
  if (text == "device" || text == "dev_mem") return SpaceKind::Device;
  fail(ErrorCode::InvalidArgument, "unknown memory space '" + std::string(text) + "'");
}

void MsbMaskConfig::validate() const {
  if (mask_bits == 0 || mask_bits > 16) {
    fail(ErrorCode::InvalidArgument, "mask_bits must be in 1..16");
  }
  if (device_pattern >> mask_bits) {
    fail(ErrorCode::InvalidArgument, "device pattern wider than mask_bits");
  }
}

SpaceKind route_address(PhysicalAddress addr, const MsbMaskConfig& cfg) {
  return (addr >> (64 - cfg.mask_bits)) == cfg.device_pattern ? SpaceKind::Device
                                                               : SpaceKind::Host;
}

AddressSpace::AddressSpace(SpaceKind kind, PhysicalAddress base, std::uint64_t size)
    : kind_(kind), base_(base), size_(size) {
  if (size == 0) fail(ErrorCode::InvalidArgument, "address space size must be positive");
  if (base + (size - 1) < base) fail(ErrorCode::InvalidArgument, "address space wraps");
}

bool AddressSpace::contains(PhysicalAddress addr, std::uint64_t len) const noexcept {
  return addr >= base_ && len <= size_ && addr - base_ <= size_ - len;
}

void AddressSpace::check(PhysicalAddress addr, std::uint64_t len, const char* what) const {
  if (!contains(addr, len)) {
    fail(ErrorCode::OutOfBounds, std::string(what) + " of " + std::to_string(len) +
                                     " bytes at " + hex64(addr) + " outside " +
                                     std::string(space_name(kind_)) + " memory [" +
                                     hex64(base_) + ", +" + std::to_string(size_) + ")");
  }
}

void AddressSpace::read(PhysicalAddress addr, std::span<std::uint8_t> out) const {
  check(addr, out.size(), "read");
  std::uint64_t off = addr - base_;
  std::size_t done = 0;
  while (done < out.size()) {
    const std::uint64_t page = off / kPageBytes;
    const std::uint64_t in_page = off % kPageBytes;
    const std::size_t chunk =
        static_cast<std::size_t>(std::min<std::uint64_t>(kPageBytes - in_page, out.size() - done));
    auto it = pages_.find(page);
    if (it == pages_.end()) {
      std::memset(out.data() + done, 0, chunk);
    } else {
      std::memcpy(out.data() + done, it->second->data() + in_page, chunk);
    }
    done += chunk;
    off += chunk;
  }
}

Bytes AddressSpace::read(PhysicalAddress addr, std::uint64_t len) const {
  check(addr, len, "read");
  Bytes out(static_cast<std::size_t>(len));
  read(addr, std::span<std::uint8_t>(out));
  return out;
}

void AddressSpace::write(PhysicalAddress addr, ByteView data) {
  check(addr, data.size(), "write");
  std::uint64_t off = addr - base_;
  std::size_t done = 0;
  while (done < data.size()) {
    const std::uint64_t page = off / kPageBytes;
    const std::uint64_t in_page = off % kPageBytes;
    const std::size_t chunk =
        static_cast<std::size_t>(std::min<std::uint64_t>(kPageBytes - in_page, data.size() - done));
    const std::uint8_t* src = data.data() + done;
    auto it = pages_.find(page);
    if (it == pages_.end()) {
      // Zeros into an absent page are already there; keeps sparse copies cheap.
      if (std::all_of(src, src + chunk, [](std::uint8_t b) { return b == 0; })) {
        done += chunk;
        off += chunk;
        continue;
      }
      it = pages_.emplace(page, std::make_unique<Page>()).first;
      it->second->fill(0);
    }
    std::memcpy(it->second->data() + in_page, src, chunk);
    done += chunk;
    off += chunk;
  }
}

void AddressSpace::fill(PhysicalAddress addr, std::uint64_t len, std::uint8_t value) {
  check(addr, len, "fill");
  Bytes chunk(static_cast<std::size_t>(std::min<std::uint64_t>(len, 1 << 20)), value);
  for (std::uint64_t done = 0; done < len;) {
    const std::uint64_t n = std::min<std::uint64_t>(chunk.size(), len - done);
    write(addr + done, ByteView(chunk.data(), static_cast<std::size_t>(n)));
    done += n;
  }
}

Crossbar::Crossbar(const MemoryConfig& cfg)
    : cfg_(cfg),
      host_(SpaceKind::Host, cfg.host_base, cfg.host_size),
      device_(SpaceKind::Device, cfg.mask.device_base(), cfg.device_size) {
  cfg_.mask.validate();
  const std::uint64_t device_window = 1ull << (64 - cfg.mask.mask_bits);
  if (cfg.device_size > device_window) {
    fail(ErrorCode::InvalidArgument, "device memory larger than its MSB-mask window");
  }
  if (route_address(cfg.host_base, cfg.mask) != SpaceKind::Host ||
      route_address(cfg.host_base + cfg.host_size - 1, cfg.mask) != SpaceKind::Host) {
    fail(ErrorCode::InvalidArgument, "host memory overlaps the device MSB pattern");
  }
}

bool Crossbar::contains(PhysicalAddress addr, std::uint64_t len) const noexcept {
  return space(route(addr)).contains(addr, len);
}

const AddressSpace& Crossbar::routed(PhysicalAddress addr, std::uint64_t) const {
  return space(route(addr));
}

Bytes Crossbar::read(PhysicalAddress addr, std::uint64_t len) const {
  return routed(addr, len).read(addr, len);
}

void Crossbar::read(PhysicalAddress addr, std::span<std::uint8_t> out) const {
  routed(addr, out.size()).read(addr, out);
}

void Crossbar::write(PhysicalAddress addr, ByteView data) {
  space(route(addr)).write(addr, data);
}

std::string_view access_check_name(AccessCheck c) noexcept {
  switch (c) {
    case AccessCheck::Ok: return "ok";
    case AccessCheck::UnknownKey: return "unknown_key";
    case AccessCheck::Invalidated: return "invalidated";
    case AccessCheck::NoPermission: return "no_permission";
    case AccessCheck::OutOfRange: return "out_of_range";
  }
  return "unknown";
}

const MemoryRegion& RegionTable::register_region(const AddressSpace& space, PhysicalAddress base,
                                                 std::uint64_t length, std::uint32_t access) {
  if (length == 0 || !space.contains(base, length)) {
    fail(ErrorCode::OutOfBounds, "region of " + std::to_string(length) + " bytes at " +
                                     hex64(base) + " is not inside " +
                                     std::string(space_name(space.kind())) + " memory");
  }
  if (next_rkey_ == 0) fail(ErrorCode::InvalidArgument, "rkey space exhausted");
  MemoryRegion mr;
  mr.rkey = next_rkey_++;
  mr.space = space.kind();
  mr.base = base;
  mr.length = length;
  mr.access = access;
  return regions_.emplace(mr.rkey, mr).first->second;
}

const MemoryRegion* RegionTable::find(std::uint32_t rkey) const noexcept {
  auto it = regions_.find(rkey);
  return it == regions_.end() ? nullptr : &it->second;
}

AccessCheck RegionTable::validate(std::uint32_t rkey, PhysicalAddress addr, std::uint64_t len,
                                  std::uint32_t needed) const noexcept {
  const auto* mr = find(rkey);
  if (!mr) return AccessCheck::UnknownKey;
  if (!mr->valid) return AccessCheck::Invalidated;
  if ((mr->access & needed) != needed) return AccessCheck::NoPermission;
  if (!mr->covers(addr, len)) return AccessCheck::OutOfRange;
  return AccessCheck::Ok;
}

bool RegionTable::covered(PhysicalAddress addr, std::uint64_t len,
                          std::uint32_t needed) const noexcept {
  return std::any_of(regions_.begin(), regions_.end(), [&](const auto& kv) {
    const auto& mr = kv.second;
    return mr.valid && (mr.access & needed) == needed && mr.covers(addr, len);
  });
}

bool RegionTable::invalidate(std::uint32_t rkey) noexcept {
  auto it = regions_.find(rkey);
  if (it == regions_.end()) return false;
  it->second.valid = false;
  return true;
}

SimTime dma_transfer(Crossbar& xbar, const DmaDescriptor& desc, const TimingModel& timing) {
  const bool h2d = desc.direction == DmaDirection::HostToDevice;
  const SpaceKind src_kind = h2d ? SpaceKind::Host : SpaceKind::Device;
  const SpaceKind dst_kind = h2d ? SpaceKind::Device : SpaceKind::Host;
  if (desc.size > 0) {
    if (xbar.route(desc.src) != src_kind || !xbar.space(src_kind).contains(desc.src, desc.size)) {
      fail(ErrorCode::OutOfBounds, "DMA source " + hex64(desc.src) + " +" +
                                       std::to_string(desc.size) + " is not in " +
                                       std::string(space_name(src_kind)) + " memory");
    }
    if (xbar.route(desc.dst) != dst_kind || !xbar.space(dst_kind).contains(desc.dst, desc.size)) {
      fail(ErrorCode::OutOfBounds, "DMA destination " + hex64(desc.dst) + " +" +
                                       std::to_string(desc.size) + " is not in " +
                                       std::string(space_name(dst_kind)) + " memory");
    }
    // Copy in bounded chunks so multi-GiB transfers do not need one buffer.
    constexpr std::uint64_t kChunk = 1 << 20;
    for (std::uint64_t off = 0; off < desc.size; off += kChunk) {
      const std::uint64_t n = std::min(kChunk, desc.size - off);
      xbar.write(desc.dst + off, xbar.read(desc.src + off, n));
    }
  }
  const double bw = h2d ? timing.dma_bandwidth_h2d : timing.dma_bandwidth_d2h;
  return timing.dma_setup_latency + transfer_time(desc.size, bw);
}

void export_image(const Crossbar& xbar, std::span<const ImageRange> ranges,
                  const std::filesystem::path& bin_path,
                  const std::filesystem::path& manifest_path) {
  std::ofstream bin(bin_path, std::ios::binary | std::ios::trunc);
  std::ofstream manifest(manifest_path, std::ios::trunc);
  if (!bin || !manifest) {
    fail(ErrorCode::IoError, "cannot write image " + bin_path.string());
  }
  for (const auto& r : ranges) {
    const Bytes data = xbar.space(r.space).read(r.base, r.length);
    bin.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size()));
    manifest << space_name(r.space) << ' ' << hex64(r.base) << ' ' << r.length << '\n';
  }
  if (!bin || !manifest) fail(ErrorCode::IoError, "write to " + bin_path.string() + " failed");
}

std::vector<ImageRange> read_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream manifest(manifest_path);
  if (!manifest) fail(ErrorCode::IoError, "cannot open " + manifest_path.string());
  std::vector<ImageRange> ranges;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string space, base;
    std::uint64_t length = 0;
    if (!(fields >> space >> base >> length)) {
      fail(ErrorCode::IoError, manifest_path.string() + ": malformed line '" + line + "'");
    }
    ranges.push_back({parse_space(space), std::stoull(base, nullptr, 16), length});
  }
  return ranges;
}

std::vector<ImageRange> import_image(Crossbar& xbar, const std::filesystem::path& bin_path,
                                     const std::filesystem::path& manifest_path) {
  auto ranges = read_manifest(manifest_path);
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) fail(ErrorCode::IoError, "cannot open " + bin_path.string());
  for (const auto& r : ranges) {
    Bytes data(static_cast<std::size_t>(r.length));
    if (!bin.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(r.length))) {
      fail(ErrorCode::IoError, bin_path.string() + " is shorter than its manifest");
    }
    xbar.space(r.space).write(r.base, data);
  }
  return ranges;
}

}  // namespace snicsim::mem

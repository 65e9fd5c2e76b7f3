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

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>

#include "snicsim/common.hpp"
#include "snicsim/timing.hpp"

namespace snicsim::mem {

std::string_view space_name(SpaceKind kind) noexcept;
/// Accepts "host"/"device" (also "host_mem"/"dev_mem"). Throws InvalidArgument.
SpaceKind parse_space(std::string_view text);

struct MsbMaskConfig {
  std::uint8_t mask_bits = 12;
  std::uint64_t device_pattern = 0xa35;

  void validate() const;
  /// Lowest address carrying the device pattern.
  std::uint64_t device_base() const { return device_pattern << (64 - mask_bits); }
};

/// Device iff the top `mask_bits` of the address equal the device pattern.
SpaceKind route_address(PhysicalAddress addr, const MsbMaskConfig& cfg = {});

inline constexpr std::uint64_t kDeviceBase = 0xa350000000000000ull;
inline constexpr std::uint64_t kDefaultDeviceSize = 16ull << 30;
inline constexpr std::uint64_t kDefaultHostSize = 1ull << 48;

/// Sparse byte-addressable memory spanning [base, base + size). Bytes that
/// were never written read as zero.
class AddressSpace {
 public:
  static constexpr std::uint64_t kPageBytes = 4096;

  AddressSpace(SpaceKind kind, PhysicalAddress base, std::uint64_t size);

  SpaceKind kind() const noexcept { return kind_; }
  PhysicalAddress base() const noexcept { return base_; }
  std::uint64_t size() const noexcept { return size_; }
  bool contains(PhysicalAddress addr, std::uint64_t len) const noexcept;

  /// Throws OutOfBounds.
  void read(PhysicalAddress addr, std::span<std::uint8_t> out) const;
  Bytes read(PhysicalAddress addr, std::uint64_t len) const;
  void write(PhysicalAddress addr, ByteView data);
  void fill(PhysicalAddress addr, std::uint64_t len, std::uint8_t value);

  std::size_t resident_pages() const noexcept { return pages_.size(); }

 private:
  using Page = std::array<std::uint8_t, kPageBytes>;

  void check(PhysicalAddress addr, std::uint64_t len, const char* what) const;

  SpaceKind kind_;
  PhysicalAddress base_;
  std::uint64_t size_;
  std::map<std::uint64_t, std::unique_ptr<Page>> pages_;
};

struct MemoryConfig {
  MsbMaskConfig mask;
  std::uint64_t device_size = kDefaultDeviceSize;
  PhysicalAddress host_base = 0;
  std::uint64_t host_size = kDefaultHostSize;
};

/// The sys/mem crossbar pair: steers every access to host or device memory
/// by the address MSBs.
class Crossbar {
 public:
  explicit Crossbar(const MemoryConfig& cfg = {});

  const MsbMaskConfig& mask() const noexcept { return cfg_.mask; }
  const MemoryConfig& config() const noexcept { return cfg_; }
  AddressSpace& space(SpaceKind kind) noexcept { return kind == SpaceKind::Host ? host_ : device_; }
  const AddressSpace& space(SpaceKind kind) const noexcept {
    return kind == SpaceKind::Host ? host_ : device_;
  }
  AddressSpace& host() noexcept { return host_; }
  AddressSpace& device() noexcept { return device_; }

  SpaceKind route(PhysicalAddress addr) const noexcept { return route_address(addr, cfg_.mask); }
  /// True when [addr, addr+len) routes to one space and lies inside it.
  bool contains(PhysicalAddress addr, std::uint64_t len) const noexcept;

  Bytes read(PhysicalAddress addr, std::uint64_t len) const;
  void read(PhysicalAddress addr, std::span<std::uint8_t> out) const;
  void write(PhysicalAddress addr, ByteView data);

 private:
  const AddressSpace& routed(PhysicalAddress addr, std::uint64_t len) const;

  MemoryConfig cfg_;
  AddressSpace host_;
  AddressSpace device_;
};

namespace access {
inline constexpr std::uint32_t kLocal = 1u << 0;
inline constexpr std::uint32_t kRemoteRead = 1u << 1;
inline constexpr std::uint32_t kRemoteWrite = 1u << 2;
inline constexpr std::uint32_t kAll = kLocal | kRemoteRead | kRemoteWrite;
}  // namespace access

struct MemoryRegion {
  std::uint32_t rkey = 0;
  SpaceKind space = SpaceKind::Host;
  PhysicalAddress base = 0;
  std::uint64_t length = 0;
  std::uint32_t access = 0;
  bool valid = true;

  bool covers(PhysicalAddress addr, std::uint64_t len) const noexcept {
    return addr >= base && len <= length && addr - base <= length - len;
  }
};

enum class AccessCheck { Ok, UnknownKey, Invalidated, NoPermission, OutOfRange };
std::string_view access_check_name(AccessCheck c) noexcept;

/// Registered memory regions of one NIC. rkeys are allocated sequentially
/// from 1; 0 is never a valid key.
class RegionTable {
 public:
  /// Registers [base, base+length) of `space`. Throws OutOfBounds.
  const MemoryRegion& register_region(const AddressSpace& space, PhysicalAddress base,
                                      std::uint64_t length, std::uint32_t access);

  const MemoryRegion* find(std::uint32_t rkey) const noexcept;
  AccessCheck validate(std::uint32_t rkey, PhysicalAddress addr, std::uint64_t len,
                       std::uint32_t needed) const noexcept;
  /// True when some valid region with `needed` access covers the range.
  bool covered(PhysicalAddress addr, std::uint64_t len, std::uint32_t needed) const noexcept;
  /// Marks the key unusable. Returns false for unknown keys.
  bool invalidate(std::uint32_t rkey) noexcept;

  const std::map<std::uint32_t, MemoryRegion>& regions() const noexcept { return regions_; }

 private:
  std::map<std::uint32_t, MemoryRegion> regions_;
  std::uint32_t next_rkey_ = 1;
};

enum class DmaDirection { HostToDevice, DeviceToHost };

struct DmaDescriptor {
  DmaDirection direction = DmaDirection::HostToDevice;
  PhysicalAddress src = 0;
  PhysicalAddress dst = 0;
  std::uint64_t size = 0;
};

/// Host-mastered copy between host and device memory. Returns the modelled
/// duration: dma_setup_latency + size / bandwidth of the direction.
/// Throws OutOfBounds when either range is outside its space or routes to
/// the wrong side.
SimTime dma_transfer(Crossbar& xbar, const DmaDescriptor& desc, const TimingModel& timing);

// Memory images: a flat binary of concatenated ranges plus a text manifest
// with one "<space> <base_hex> <length>" line per range, in file order.
struct ImageRange {
  SpaceKind space = SpaceKind::Host;
  PhysicalAddress base = 0;
  std::uint64_t length = 0;
  bool operator==(const ImageRange&) const = default;
};

void export_image(const Crossbar& xbar, std::span<const ImageRange> ranges,
                  const std::filesystem::path& bin_path,
                  const std::filesystem::path& manifest_path);
std::vector<ImageRange> read_manifest(const std::filesystem::path& manifest_path);
/// Loads an image into memory; returns the ranges it covered.
std::vector<ImageRange> import_image(Crossbar& xbar, const std::filesystem::path& bin_path,
                                     const std::filesystem::path& manifest_path);

}  // namespace snicsim::mem

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


#include <random>

#include "doctest.h"
#include "snicsim/memory.hpp"
#include "support.hpp"

using namespace snicsim;
using namespace snicsim::mem;

namespace {

// Top 12 bits equal to 0xa35, computed without the library helpers.
bool oracle_is_device(std::uint64_t addr) { return (addr >> 52) == 0xa35; }

}  // namespace

TEST_SUITE("memory") {

TEST_CASE("device window boundaries route to device memory") {
  CHECK(kDeviceBase == 0xa350000000000000ull);
  CHECK(MsbMaskConfig{}.device_base() == kDeviceBase);
  CHECK(route_address(0xa350000000000000ull) == SpaceKind::Device);
  CHECK(route_address(0xa35fffffffffffffull) == SpaceKind::Device);
  CHECK(route_address(0xa34fffffffffffffull) == SpaceKind::Host);
  CHECK(route_address(0xa360000000000000ull) == SpaceKind::Host);
  CHECK(route_address(0) == SpaceKind::Host);
}

TEST_CASE("routing matches the mask for random addresses") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 20000; ++i) {
    std::uint64_t a = rng();
    if (i % 2) a = (0xa35ull << 52) | (a >> 12);  // half inside the window
    CHECK(route_address(a) == (oracle_is_device(a) ? SpaceKind::Device : SpaceKind::Host));
  }
}

TEST_CASE("other mask widths") {
  MsbMaskConfig cfg{8, 0xa3};
  CHECK(cfg.device_base() == 0xa300000000000000ull);
  CHECK(route_address(0xa3ffffffffffffffull, cfg) == SpaceKind::Device);
  CHECK(route_address(0xa400000000000000ull, cfg) == SpaceKind::Host);
  CHECK_THROWS_AS((MsbMaskConfig{8, 0x1ff}.validate()), Error);
}

TEST_CASE("read after write, untouched bytes read as zero") {
  Crossbar xbar;
  std::mt19937_64 rng(1);
  const Bytes data = test::random_bytes(rng, 10000);
  const PhysicalAddress h = 0x12345;          // crosses pages
  const PhysicalAddress d = kDeviceBase + 4093;
  xbar.write(h, data);
  xbar.write(d, data);
  CHECK(xbar.read(h, data.size()) == data);
  CHECK(xbar.read(d, data.size()) == data);
  CHECK(xbar.host().read(h, data.size()) == data);
  CHECK(xbar.read(0x900000, 64) == Bytes(64, 0));
  CHECK(xbar.read(kDeviceBase + (1 << 30), 64) == Bytes(64, 0));
  // A host write never shows up in device memory and vice versa.
  CHECK(xbar.device().read(kDeviceBase + 0x12345, 16) == Bytes(16, 0));
}

TEST_CASE("accesses outside either space are out of bounds") {
  Crossbar xbar;
  auto code = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidArgument;
  };
  CHECK(code([&] { xbar.read(kDeviceBase + kDefaultDeviceSize - 4, 8); }) == ErrorCode::OutOfBounds);
  CHECK(code([&] { xbar.read(kDefaultHostSize, 1); }) == ErrorCode::OutOfBounds);
  CHECK(code([&] { xbar.write(kDeviceBase - 4, Bytes(8, 1)); }) == ErrorCode::OutOfBounds);
  CHECK(xbar.contains(kDeviceBase, kDefaultDeviceSize));
  CHECK_FALSE(xbar.contains(kDeviceBase - 1, 2));
}

TEST_CASE("regions: sequential rkeys, overlap allowed, zero length rejected") {
  Crossbar xbar;
  RegionTable t;
  const auto& a = t.register_region(xbar.host(), 0x1000, 4096, access::kLocal);
  const auto& b = t.register_region(xbar.host(), 0x1800, 4096, access::kAll);
  CHECK(a.rkey == 1);
  CHECK(b.rkey == 2);
  try {
    t.register_region(xbar.host(), 0x1000, 0, access::kAll);
    FAIL("zero length accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::OutOfBounds);
  }
  CHECK_THROWS_AS(t.register_region(xbar.device(), 0x1000, 64, access::kAll), Error);
  CHECK(t.validate(1, 0x1000, 4096, access::kLocal) == AccessCheck::Ok);
  CHECK(t.validate(1, 0x1000, 4097, access::kLocal) == AccessCheck::OutOfRange);
  CHECK(t.validate(1, 0x1000, 16, access::kRemoteWrite) == AccessCheck::NoPermission);
  CHECK(t.validate(9, 0x1000, 16, access::kLocal) == AccessCheck::UnknownKey);
  CHECK(t.covered(0x2000, 0x800, access::kRemoteWrite));
  CHECK(t.invalidate(2));
  CHECK_FALSE(t.invalidate(9));
  CHECK(t.validate(2, 0x1800, 16, access::kLocal) == AccessCheck::Invalidated);
  CHECK_FALSE(t.covered(0x2000, 0x800, access::kRemoteWrite));
  const auto& c = t.register_region(xbar.host(), 0x1000, 64, access::kAll);
  CHECK(c.rkey == 3);
}

TEST_CASE("DMA moves the bytes and costs setup plus size over bandwidth") {
  Crossbar xbar;
  TimingModel tm;
  std::mt19937_64 rng(2);
  const Bytes data = test::random_bytes(rng, 1 << 20);
  xbar.write(0x100000, data);
  const SimTime h2d =
      dma_transfer(xbar, {DmaDirection::HostToDevice, 0x100000, kDeviceBase, data.size()}, tm);
  CHECK(xbar.read(kDeviceBase, data.size()) == data);
  const SimTime d2h =
      dma_transfer(xbar, {DmaDirection::DeviceToHost, kDeviceBase, 0x900000, data.size()}, tm);
  CHECK(xbar.read(0x900000, data.size()) == data);
  const double mib = 1 << 20;
  CHECK(h2d == doctest::Approx(1000 + mib / 13.07).epsilon(0.001));
  CHECK(d2h == doctest::Approx(1000 + mib / 13.00).epsilon(0.001));
  CHECK(dma_transfer(xbar, {DmaDirection::HostToDevice, 0, kDeviceBase, 0}, tm) == 1000);
}

TEST_CASE("copying untouched memory stays sparse") {
  Crossbar xbar;
  TimingModel tm;
  xbar.write(0x2000, Bytes{1, 2, 3});
  const SimTime t =
      dma_transfer(xbar, {DmaDirection::HostToDevice, 0, kDeviceBase, 1ull << 30}, tm);
  CHECK(t == doctest::Approx(1000 + (1ull << 30) / 13.07).epsilon(0.0001));
  CHECK(xbar.device().resident_pages() == 1);
  CHECK(xbar.read(kDeviceBase + 0x2000, 3) == Bytes{1, 2, 3});
  // Zeros written over existing data still land.
  xbar.write(0x2000, Bytes(3, 0));
  CHECK(xbar.read(0x2000, 3) == Bytes(3, 0));
}

TEST_CASE("DMA rejects ranges on the wrong side of the crossbar") {
  Crossbar xbar;
  TimingModel tm;
  CHECK_THROWS_AS(dma_transfer(xbar, {DmaDirection::HostToDevice, kDeviceBase, kDeviceBase + 64, 64}, tm),
                  Error);
  CHECK_THROWS_AS(dma_transfer(xbar, {DmaDirection::DeviceToHost, kDeviceBase, 0x1000, kDefaultDeviceSize + 4096}, tm),
                  Error);
  CHECK_THROWS_AS(dma_transfer(xbar, {DmaDirection::HostToDevice, 0x1000, 0x2000, 64}, tm), Error);
}

TEST_CASE("memory images round trip") {
  test::TempDir dir("image");
  Crossbar a;
  std::mt19937_64 rng(4);
  const Bytes x = test::random_bytes(rng, 5000), y = test::random_bytes(rng, 777);
  a.write(0x4000, x);
  a.write(kDeviceBase + 0x100, y);
  const std::vector<ImageRange> ranges{{SpaceKind::Host, 0x4000, x.size()},
                                       {SpaceKind::Device, kDeviceBase + 0x100, y.size()}};
  export_image(a, ranges, dir.path() / "m.bin", dir.path() / "m.manifest");
  CHECK(std::filesystem::file_size(dir.path() / "m.bin") == x.size() + y.size());
  CHECK(read_manifest(dir.path() / "m.manifest") == ranges);
  Crossbar b;
  CHECK(import_image(b, dir.path() / "m.bin", dir.path() / "m.manifest") == ranges);
  CHECK(b.read(0x4000, x.size()) == x);
  CHECK(b.read(kDeviceBase + 0x100, y.size()) == y);
}

}  // TEST_SUITE

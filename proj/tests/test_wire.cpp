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
#include "snicsim/wire.hpp"
#include "support.hpp"

using namespace snicsim;
using namespace snicsim::wire;

namespace {

// Header sizes written out by hand so frame lengths are not derived from the
// constants under test.
constexpr std::size_t kL2L3L4 = 14 + 20 + 8;

std::size_t oracle_frame_size(const ExtHeaderSet& h, std::size_t payload) {
  std::size_t n = kL2L3L4 + 12;
  if (h.reth) n += 16;
  if (h.aeth) n += 4;
  if (h.immdt) n += 4;
  if (h.ieth) n += 4;
  return n + payload + (4 - payload % 4) % 4 + 4;
}

// Bitwise reflected CRC-32, no tables and no zlib.
std::uint32_t oracle_crc32(ByteView data) {
  std::uint32_t crc = 0xffffffffu;
  for (std::uint8_t byte : data) {
    crc ^= byte;
    for (int i = 0; i < 8; ++i) crc = (crc >> 1) ^ (0xedb88320u & (0u - (crc & 1u)));
  }
  return ~crc;
}

// RoCEv2 invariant CRC: 8 bytes of ones, then IP header onwards with the
// variant fields forced to ones, up to the ICRC itself.
std::uint32_t oracle_icrc(ByteView frame) {
  Bytes m(8, 0xff);
  m.insert(m.end(), frame.begin() + 14, frame.end() - 4);
  m[8 + 1] = 0xff;
  m[8 + 8] = 0xff;
  m[8 + 10] = m[8 + 11] = 0xff;
  m[8 + 20 + 6] = m[8 + 20 + 7] = 0xff;
  m[8 + 28 + 4] = 0xff;
  return oracle_crc32(m);
}

bool ipv4_sum_ok(ByteView frame) {
  std::uint32_t sum = 0;
  for (std::size_t i = 14; i < 34; i += 2) sum += (frame[i] << 8) | frame[i + 1];
  while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
  return sum == 0xffff;
}

RocePacket skeleton(Opcode op, Bytes payload) {
  RocePacket p;
  p.eth.dst_mac = {2, 0, 0, 0, 0, 2};
  p.eth.src_mac = {2, 0, 0, 0, 0, 1};
  p.ip.src_ip = 0xc0a80101;
  p.ip.dst_ip = 0xc0a80102;
  p.udp.src_port = 49152;
  p.bth.opcode = op;
  p.bth.dest_qp = 2;
  const auto h = required_headers(op);
  if (h.reth) p.reth = Reth{0x1000, 1, static_cast<std::uint32_t>(payload.size())};
  if (h.aeth) p.aeth = Aeth{};
  if (h.immdt) p.immdt = ImmDt{0xdeadbeef};
  if (h.ieth) p.ieth = Ieth{5};
  p.payload = std::move(payload);
  seal(p);
  return p;
}

RocePacket random_packet(std::mt19937_64& rng) {
  const auto ops = supported_opcodes();
  const Opcode op = ops[rng() % ops.size()];
  std::size_t len = 0;
  if (carries_payload(op)) len = rng() % 4097;
  RocePacket p = skeleton(op, test::random_bytes(rng, len));
  for (auto& b : p.eth.dst_mac) b = static_cast<std::uint8_t>(rng());
  for (auto& b : p.eth.src_mac) b = static_cast<std::uint8_t>(rng());
  p.ip.src_ip = static_cast<std::uint32_t>(rng());
  p.ip.dst_ip = static_cast<std::uint32_t>(rng());
  p.ip.identification = static_cast<std::uint16_t>(rng());
  p.ip.ttl = static_cast<std::uint8_t>(rng() | 1);
  p.udp.src_port = static_cast<std::uint16_t>(rng());
  p.bth.solicited_event = rng() & 1;
  p.bth.ack_request = rng() & 1;
  p.bth.partition_key = static_cast<std::uint16_t>(rng());
  p.bth.dest_qp = static_cast<std::uint32_t>(rng()) & kQpnMask;
  p.bth.psn = static_cast<std::uint32_t>(rng()) & kPsnMask;
  if (p.reth) p.reth = Reth{rng(), static_cast<std::uint32_t>(rng()), static_cast<std::uint32_t>(rng())};
  if (p.aeth) p.aeth = Aeth{static_cast<std::uint8_t>(rng() & 0x7f), static_cast<std::uint32_t>(rng()) & 0xffffff};
  if (p.immdt) p.immdt = ImmDt{static_cast<std::uint32_t>(rng())};
  if (p.ieth) p.ieth = Ieth{static_cast<std::uint32_t>(rng())};
  seal(p);
  return p;
}

}  // namespace

TEST_SUITE("wire") {

TEST_CASE("zero-length RDMA WRITE ONLY frame is 74 bytes") {
  const auto p = skeleton(Opcode::RdmaWriteOnly, {});
  CHECK(serialize(p).size() == 74);
  CHECK(frame_size(Opcode::RdmaWriteOnly, 0) == 74);
}

TEST_CASE("ACK frame is 62 bytes") {
  CHECK(serialize(skeleton(Opcode::Acknowledge, {})).size() == 62);
}

TEST_CASE("frame_size agrees with a hand count for every opcode and pad") {
  for (Opcode op : supported_opcodes()) {
    for (std::size_t len : {0, 1, 2, 3, 4, 5, 1023, 4096}) {
      if (!carries_payload(op) && len != 0) continue;
      CAPTURE(opcode_name(op));
      CAPTURE(len);
      CHECK(frame_size(op, len) == oracle_frame_size(required_headers(op), len));
    }
  }
}

TEST_CASE("serialize/parse round trip over random packets") {
  std::mt19937_64 rng(42);
  for (int i = 0; i < 2000; ++i) {
    const RocePacket p = random_packet(rng);
    const Bytes bytes = serialize(p);
    REQUIRE(bytes.size() == oracle_frame_size(p.present_headers(), p.payload.size()));
    CHECK(ipv4_sum_ok(bytes));
    CHECK(get_le32(bytes.data() + bytes.size() - 4) == oracle_icrc(bytes));
    CHECK((bytes.size() - 4 - kL2L3L4 - 12) % 4 == 0);
    const auto parsed = parse(bytes, {kRoceV2Port, true});
    REQUIRE(parsed.cls == TrafficClass::Rdma);
    REQUIRE(parsed.packet.has_value());
    CHECK(*parsed.packet == p);
    CHECK(serialize(*parsed.packet) == bytes);
  }
}

TEST_CASE("pad bytes are zero and pad_count aligns the payload") {
  for (std::size_t len = 0; len < 9; ++len) {
    const auto p = skeleton(Opcode::SendOnly, Bytes(len, 0xab));
    CHECK(p.bth.pad_count == (4 - len % 4) % 4);
    CHECK(pad_for(len) == p.bth.pad_count);
    const Bytes b = serialize(p);
    for (std::size_t i = 0; i < p.bth.pad_count; ++i) CHECK(b[b.size() - 5 - i] == 0);
  }
}

TEST_CASE("a flipped ICRC-covered byte is rejected when verification is on") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    Bytes b = serialize(random_packet(rng));
    // Flip a byte of an invariant field: payload or BTH opcode area.
    const std::size_t pos = 42 + rng() % (b.size() - 46);
    if (pos == 42 + 4) continue;  // masked BTH byte
    b[pos] ^= 0x01;
    try {
      parse(b, {kRoceV2Port, true});
      FAIL("corruption at " << pos << " not detected");
    } catch (const Error& e) {
      CHECK((e.code() == ErrorCode::BadIcrc || e.code() == ErrorCode::UnsupportedOpcode ||
             e.code() == ErrorCode::TruncatedPacket || e.code() == ErrorCode::InvalidHeaderCombination));
    }
  }
}

TEST_CASE("classify and parse agree on arbitrary input") {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 3000; ++i) {
    Bytes b;
    switch (i % 3) {
      case 0: b = test::random_bytes(rng, rng() % 128); break;
      case 1: b = serialize(random_packet(rng)); b.resize(rng() % (b.size() + 1)); break;
      default: {
        b = serialize(random_packet(rng));
        b[rng() % b.size()] = static_cast<std::uint8_t>(rng());
      }
    }
    const TrafficClass cls = classify(b);
    try {
      const auto parsed = parse(b);
      CHECK(parsed.cls == cls);
      if (cls == TrafficClass::NonRdma) {
        CHECK(parsed.raw == b);
        CHECK_FALSE(parsed.packet.has_value());
      } else {
        CHECK(parsed.packet.has_value());
      }
    } catch (const Error& e) {
      // Only frames that claim to be RoCEv2, or lack even an Ethernet
      // header, may fail to decode.
      if (b.size() < 14) {
        CHECK(e.code() == ErrorCode::TruncatedPacket);
        continue;
      }
      CHECK(cls == TrafficClass::Rdma);
      CHECK((e.code() == ErrorCode::TruncatedPacket || e.code() == ErrorCode::UnsupportedOpcode ||
             e.code() == ErrorCode::InvalidHeaderCombination));
    }
  }
}

TEST_CASE("short input is a truncated packet") {
  const Bytes ten(10, 0);
  CHECK_THROWS_AS(parse(ten), Error);
  try {
    parse(ten);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TruncatedPacket);
  }
  Bytes cut = serialize(skeleton(Opcode::RdmaWriteOnly, Bytes(64, 1)));
  cut.resize(50);
  CHECK(classify(cut) == TrafficClass::Rdma);
  try {
    parse(cut);
    FAIL("truncated frame accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TruncatedPacket);
  }
}

TEST_CASE("ARP, TCP and empty frames are not RDMA") {
  const MacAddress a{2, 0, 0, 0, 0, 1}, b{2, 0, 0, 0, 0, 2};
  const Bytes arp = make_arp_frame(a, 1, 2);
  const Bytes tcp = make_tcp_frame(a, b, 1, 2, 1234, kRoceV2Port, Bytes(16, 7));
  const Bytes udp = make_udp_frame(a, b, 1, 2, 1234, 53, Bytes(16, 7));
  for (const Bytes* f : {&arp, &tcp, &udp}) {
    CHECK(classify(*f) == TrafficClass::NonRdma);
    const auto parsed = parse(*f);
    CHECK(parsed.cls == TrafficClass::NonRdma);
    CHECK(parsed.raw == *f);
  }
  CHECK(classify(Bytes{}) == TrafficClass::NonRdma);
  const Bytes roce_port = make_udp_frame(a, b, 1, 2, 1234, kRoceV2Port, Bytes(64, 0));
  CHECK(classify(roce_port) == TrafficClass::Rdma);
  CHECK(classify(roce_port, 5000) == TrafficClass::NonRdma);
}

TEST_CASE("serialize rejects extension headers that do not match the opcode") {
  auto p = skeleton(Opcode::RdmaWriteOnly, Bytes(8, 0));
  p.reth.reset();
  CHECK_THROWS_AS(serialize(p), Error);
  auto q = skeleton(Opcode::SendOnly, Bytes(8, 0));
  q.immdt = ImmDt{1};
  try {
    serialize(q);
    FAIL("accepted stray IMMDT");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidHeaderCombination);
  }
  auto r = skeleton(Opcode::SendOnly, Bytes(5, 0));
  r.bth.pad_count = 0;
  CHECK_THROWS_AS(serialize(r), Error);
}

TEST_CASE("atomics are named but unsupported") {
  CHECK_FALSE(is_supported(Opcode::CompareSwap));
  CHECK_FALSE(is_supported(Opcode::FetchAdd));
  CHECK_THROWS_AS(required_headers(Opcode::FetchAdd), Error);
  Bytes b = serialize(skeleton(Opcode::SendOnly, Bytes(28, 0)));
  b[42] = static_cast<std::uint8_t>(Opcode::FetchAdd);
  try {
    parse(b);
    FAIL("atomic accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnsupportedOpcode);
  }
}

TEST_CASE("dump files round trip") {
  test::TempDir dir("dump");
  std::mt19937_64 rng(5);
  std::vector<DumpRecord> recs;
  for (int i = 0; i < 20; ++i) recs.push_back({static_cast<SimTime>(i * 100), serialize(random_packet(rng))});
  write_dump(dir.path() / "d.bin", recs);
  CHECK(read_dump(dir.path() / "d.bin") == recs);
}

TEST_CASE("dotted quad helpers") {
  CHECK(parse_ipv4("192.168.1.2") == 0xc0a80102u);
  CHECK(format_ipv4(0x0a000001) == "10.0.0.1");
  CHECK_THROWS_AS(parse_ipv4("1.2.3"), Error);
  CHECK_THROWS_AS(parse_ipv4("1.2.3.256"), Error);
}

}  // TEST_SUITE

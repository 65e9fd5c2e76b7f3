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

// RoCEv2 frame codec and the RDMA / non-RDMA traffic classifier.
//
// Frame layout (all header fields big-endian):
//
//   Ethernet (14) | IPv4 (20, no options) | UDP (8) | BTH (12)
//   | [RETH 16] [AETH 4] [ImmDt 4] [IETH 4] | payload | pad (0-3) | ICRC (4)
//
// The ICRC is CRC-32 over the IP/UDP/BTH/ext/payload/pad bytes with the
// variant fields masked to ones and a 64-bit all-ones prefix, stored
// little-endian on the wire as the Linux soft-RoCE driver does.

#include <array>
#include <filesystem>
#include <optional>
#include <string_view>

#include "snicsim/common.hpp"

namespace snicsim::wire {

inline constexpr std::uint16_t kRoceV2Port = 4791;
inline constexpr std::uint16_t kEtherTypeIpv4 = 0x0800;
inline constexpr std::uint16_t kEtherTypeArp = 0x0806;
inline constexpr std::uint8_t kIpProtoTcp = 6;
inline constexpr std::uint8_t kIpProtoUdp = 17;

inline constexpr std::size_t kEthHeaderBytes = 14;
inline constexpr std::size_t kIpv4HeaderBytes = 20;
inline constexpr std::size_t kUdpHeaderBytes = 8;
inline constexpr std::size_t kBthBytes = 12;
inline constexpr std::size_t kRethBytes = 16;
inline constexpr std::size_t kAethBytes = 4;
inline constexpr std::size_t kImmDtBytes = 4;
inline constexpr std::size_t kIethBytes = 4;
inline constexpr std::size_t kIcrcBytes = 4;

inline constexpr std::uint32_t kPsnMask = 0xffffff;
inline constexpr std::uint32_t kQpnMask = 0xffffff;

using MacAddress = std::array<std::uint8_t, 6>;

// IBTA reliable-connection opcodes (transport type 000b). Atomics are
// listed so the decoder can name them but are rejected as unsupported.
enum class Opcode : std::uint8_t {
  SendFirst = 0x00,
  SendMiddle = 0x01,
  SendLast = 0x02,
  SendLastWithImmediate = 0x03,
  SendOnly = 0x04,
  SendOnlyWithImmediate = 0x05,
  RdmaWriteFirst = 0x06,
  RdmaWriteMiddle = 0x07,
  RdmaWriteLast = 0x08,
  RdmaWriteLastWithImmediate = 0x09,
  RdmaWriteOnly = 0x0a,
  RdmaWriteOnlyWithImmediate = 0x0b,
  RdmaReadRequest = 0x0c,
  RdmaReadResponseFirst = 0x0d,
  RdmaReadResponseMiddle = 0x0e,
  RdmaReadResponseLast = 0x0f,
  RdmaReadResponseOnly = 0x10,
  Acknowledge = 0x11,
  AtomicAcknowledge = 0x12,
  CompareSwap = 0x13,
  FetchAdd = 0x14,
  SendLastWithInvalidate = 0x16,
  SendOnlyWithInvalidate = 0x17,
};

struct ExtHeaderSet {
  bool reth = false;
  bool aeth = false;
  bool immdt = false;
  bool ieth = false;
  bool operator==(const ExtHeaderSet&) const = default;
};

bool is_supported(Opcode op) noexcept;
/// Extension headers demanded by an opcode. Throws UnsupportedOpcode.
ExtHeaderSet required_headers(Opcode op);
std::string_view opcode_name(Opcode op) noexcept;
/// All opcodes the codec accepts, in numeric order.
std::span<const Opcode> supported_opcodes() noexcept;

bool is_read_response(Opcode op) noexcept;
bool is_request(Opcode op) noexcept;
/// True for opcodes that end a message (LAST and ONLY variants, read request).
bool is_message_end(Opcode op) noexcept;
bool carries_payload(Opcode op) noexcept;

struct EthernetHeader {
  MacAddress dst_mac{};
  MacAddress src_mac{};
  std::uint16_t ethertype = kEtherTypeIpv4;
  bool operator==(const EthernetHeader&) const = default;
};

struct Ipv4Header {
  std::uint8_t version = 4;
  std::uint8_t ihl = 5;
  std::uint8_t dscp_ecn = 0;
  std::uint16_t total_length = 0;
  std::uint16_t identification = 0;
  std::uint16_t flags_fragment = 0;
  std::uint8_t ttl = 64;
  std::uint8_t protocol = kIpProtoUdp;
  std::uint16_t header_checksum = 0;
  std::uint32_t src_ip = 0;
  std::uint32_t dst_ip = 0;
  bool operator==(const Ipv4Header&) const = default;
};

struct UdpHeader {
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = kRoceV2Port;
  std::uint16_t length = 0;
  std::uint16_t checksum = 0;  // 0 = not computed
  bool operator==(const UdpHeader&) const = default;
};

struct BaseTransportHeader {
  Opcode opcode = Opcode::SendOnly;
  bool solicited_event = false;
  bool mig_req = false;
  std::uint8_t pad_count = 0;
  std::uint8_t header_version = 0;
  std::uint16_t partition_key = 0xffff;
  std::uint32_t dest_qp = 0;
  bool ack_request = false;
  std::uint32_t psn = 0;
  bool operator==(const BaseTransportHeader&) const = default;
};

struct Reth {
  std::uint64_t virtual_address = 0;
  std::uint32_t rkey = 0;
  std::uint32_t dma_length = 0;
  bool operator==(const Reth&) const = default;
};

/// AETH syndrome encodings.
namespace syndrome {
inline constexpr std::uint8_t kAck = 0x1f;  // ACK, invalid credit count
inline constexpr std::uint8_t kRnrNak = 0x20;
inline constexpr std::uint8_t kNakPsnSequenceError = 0x60;
inline constexpr std::uint8_t kNakInvalidRequest = 0x61;
inline constexpr std::uint8_t kNakRemoteAccessError = 0x62;
inline constexpr std::uint8_t kNakRemoteOperationalError = 0x63;

inline constexpr bool is_ack(std::uint8_t s) { return (s & 0x60) == 0x00; }
inline constexpr bool is_rnr(std::uint8_t s) { return (s & 0x60) == 0x20; }
inline constexpr bool is_nak(std::uint8_t s) { return (s & 0x60) == 0x60; }
}  // namespace syndrome

struct Aeth {
  std::uint8_t syndrome = syndrome::kAck;
  std::uint32_t msn = 0;
  bool operator==(const Aeth&) const = default;
};

struct ImmDt {
  std::uint32_t immediate = 0;
  bool operator==(const ImmDt&) const = default;
};

struct Ieth {
  std::uint32_t invalidate_rkey = 0;
  bool operator==(const Ieth&) const = default;
};

struct RocePacket {
  EthernetHeader eth;
  Ipv4Header ip;
  UdpHeader udp;
  BaseTransportHeader bth;
  std::optional<Reth> reth;
  std::optional<Aeth> aeth;
  std::optional<ImmDt> immdt;
  std::optional<Ieth> ieth;
  Bytes payload;
  std::uint32_t icrc = 0;

  bool operator==(const RocePacket&) const = default;

  ExtHeaderSet present_headers() const noexcept {
    return {reth.has_value(), aeth.has_value(), immdt.has_value(),
            ieth.has_value()};
  }
};

/// Bytes of extension headers for a header set.
std::size_t ext_header_bytes(const ExtHeaderSet& set) noexcept;
inline std::uint8_t pad_for(std::size_t payload_bytes) noexcept {
  return static_cast<std::uint8_t>((4 - payload_bytes % 4) % 4);
}
/// Full frame length of a packet as serialize() would emit it.
std::size_t frame_size(const RocePacket& p);
/// Frame length for an opcode carrying `payload_bytes`.
std::size_t frame_size(Opcode op, std::size_t payload_bytes);

/// Fills the derived fields (pad_count, lengths, IPv4 checksum, ICRC) so the
/// packet satisfies the codec invariants.
void seal(RocePacket& p);

/// Encodes a packet. Lengths, checksum, pad bytes and ICRC are recomputed.
/// Throws InvalidHeaderCombination when the extension headers do not match
/// the opcode or pad_count does not 4-align the payload.
Bytes serialize(const RocePacket& p);

enum class TrafficClass { Rdma, NonRdma };
std::string_view traffic_class_name(TrafficClass c) noexcept;

struct ClassifiedPacket {
  TrafficClass cls = TrafficClass::NonRdma;
  std::optional<RocePacket> packet;  // set when cls == Rdma
  Bytes raw;                         // set when cls == NonRdma
};

struct CodecOptions {
  std::uint16_t roce_port = kRoceV2Port;
  bool verify_icrc = false;
};

/// Header-only classification. Never throws; unparseable input is NonRdma.
TrafficClass classify(ByteView frame, std::uint16_t roce_port = kRoceV2Port) noexcept;

/// Classifies and, for RDMA traffic, fully decodes the frame.
/// Throws TruncatedPacket, BadIcrc, UnsupportedOpcode.
ClassifiedPacket parse(ByteView frame, const CodecOptions& options = {});

/// ICRC over a complete frame (the trailing 4 ICRC bytes are ignored).
std::uint32_t compute_icrc(ByteView frame);
std::uint16_t ipv4_checksum(ByteView header);

/// Builds a plain non-RDMA frame. Used for traffic-mix stimulus.
Bytes make_udp_frame(const MacAddress& dst, const MacAddress& src,
                     std::uint32_t src_ip, std::uint32_t dst_ip,
                     std::uint16_t sport, std::uint16_t dport, ByteView payload);
Bytes make_tcp_frame(const MacAddress& dst, const MacAddress& src,
                     std::uint32_t src_ip, std::uint32_t dst_ip,
                     std::uint16_t sport, std::uint16_t dport, ByteView payload);
Bytes make_arp_frame(const MacAddress& src, std::uint32_t sender_ip,
                     std::uint32_t target_ip);

// Packet dump files: a sequence of little-endian records
// (timestamp_ns: u64, length: u32, bytes[length]).
struct DumpRecord {
  SimTime timestamp_ns = 0;
  Bytes bytes;
  bool operator==(const DumpRecord&) const = default;
};

void write_dump(const std::filesystem::path& path, std::span<const DumpRecord> records);
std::vector<DumpRecord> read_dump(const std::filesystem::path& path);

std::string format_ipv4(std::uint32_t ip);
/// Parses dotted-quad notation. Throws InvalidArgument.
std::uint32_t parse_ipv4(std::string_view text);

}  // namespace snicsim::wire

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

#include "snicsim/wire.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cstring>

namespace snicsim::wire {
namespace {

// Opcode table after IBTA Vol. 1 section 9.2 (RC transport), the same
// values as rdma-core's IBV_OPCODE_RC_* and the kernel's IB_OPCODE_RC_*.
struct OpcodeInfo {
  Opcode op;
  std::string_view name;
  ExtHeaderSet headers;
  bool payload;
};

constexpr ExtHeaderSet kNone{};
constexpr ExtHeaderSet kReth{true, false, false, false};
constexpr ExtHeaderSet kAeth{false, true, false, false};
constexpr ExtHeaderSet kImm{false, false, true, false};
constexpr ExtHeaderSet kRethImm{true, false, true, false};
constexpr ExtHeaderSet kIeth{false, false, false, true};

constexpr OpcodeInfo kOpcodes[] = {
    {Opcode::SendFirst, "SEND_FIRST", kNone, true},
    {Opcode::SendMiddle, "SEND_MIDDLE", kNone, true},
    {Opcode::SendLast, "SEND_LAST", kNone, true},
    {Opcode::SendLastWithImmediate, "SEND_LAST_WITH_IMMEDIATE", kImm, true},
    {Opcode::SendOnly, "SEND_ONLY", kNone, true},
    {Opcode::SendOnlyWithImmediate, "SEND_ONLY_WITH_IMMEDIATE", kImm, true},
    {Opcode::RdmaWriteFirst, "RDMA_WRITE_FIRST", kReth, true},
    {Opcode::RdmaWriteMiddle, "RDMA_WRITE_MIDDLE", kNone, true},
    {Opcode::RdmaWriteLast, "RDMA_WRITE_LAST", kNone, true},
    {Opcode::RdmaWriteLastWithImmediate, "RDMA_WRITE_LAST_WITH_IMMEDIATE", kImm, true},
    {Opcode::RdmaWriteOnly, "RDMA_WRITE_ONLY", kReth, true},
    {Opcode::RdmaWriteOnlyWithImmediate, "RDMA_WRITE_ONLY_WITH_IMMEDIATE", kRethImm, true},
    {Opcode::RdmaReadRequest, "RDMA_READ_REQUEST", kReth, false},
    {Opcode::RdmaReadResponseFirst, "RDMA_READ_RESPONSE_FIRST", kAeth, true},
    {Opcode::RdmaReadResponseMiddle, "RDMA_READ_RESPONSE_MIDDLE", kNone, true},
    {Opcode::RdmaReadResponseLast, "RDMA_READ_RESPONSE_LAST", kAeth, true},
    {Opcode::RdmaReadResponseOnly, "RDMA_READ_RESPONSE_ONLY", kAeth, true},
    {Opcode::Acknowledge, "ACKNOWLEDGE", kAeth, false},
    {Opcode::SendLastWithInvalidate, "SEND_LAST_WITH_INVALIDATE", kIeth, true},
    {Opcode::SendOnlyWithInvalidate, "SEND_ONLY_WITH_INVALIDATE", kIeth, true},
};

constexpr Opcode kSupported[] = {
    Opcode::SendFirst, Opcode::SendMiddle, Opcode::SendLast,
    Opcode::SendLastWithImmediate, Opcode::SendOnly, Opcode::SendOnlyWithImmediate,
    Opcode::RdmaWriteFirst, Opcode::RdmaWriteMiddle, Opcode::RdmaWriteLast,
    Opcode::RdmaWriteLastWithImmediate, Opcode::RdmaWriteOnly,
    Opcode::RdmaWriteOnlyWithImmediate, Opcode::RdmaReadRequest,
    Opcode::RdmaReadResponseFirst, Opcode::RdmaReadResponseMiddle,
    Opcode::RdmaReadResponseLast, Opcode::RdmaReadResponseOnly,
    Opcode::Acknowledge, Opcode::SendLastWithInvalidate,
    Opcode::SendOnlyWithInvalidate,
};

const OpcodeInfo* lookup(Opcode op) noexcept {
  for (const auto& info : kOpcodes) {
    if (info.op == op) return &info;
  }
  return nullptr;
}

constexpr std::size_t kL3Offset = kEthHeaderBytes;
constexpr std::size_t kL4Offset = kL3Offset + kIpv4HeaderBytes;
constexpr std::size_t kBthOffset = kL4Offset + kUdpHeaderBytes;

void write_ipv4_header(std::uint8_t* p, const Ipv4Header& ip, std::uint16_t total_length) {
  p[0] = static_cast<std::uint8_t>((ip.version << 4) | (ip.ihl & 0x0f));
  p[1] = ip.dscp_ecn;
  put_be16(p + 2, total_length);
  put_be16(p + 4, ip.identification);
  put_be16(p + 6, ip.flags_fragment);
  p[8] = ip.ttl;
  p[9] = ip.protocol;
  put_be16(p + 10, 0);
  put_be32(p + 12, ip.src_ip);
  put_be32(p + 16, ip.dst_ip);
  put_be16(p + 10, ipv4_checksum(ByteView(p, kIpv4HeaderBytes)));
}

void write_eth(std::uint8_t* p, const EthernetHeader& eth) {
  std::copy(eth.dst_mac.begin(), eth.dst_mac.end(), p);
  std::copy(eth.src_mac.begin(), eth.src_mac.end(), p + 6);
  put_be16(p + 12, eth.ethertype);
}

}  // namespace

bool is_supported(Opcode op) noexcept { return lookup(op) != nullptr; }

ExtHeaderSet required_headers(Opcode op) {
  const auto* info = lookup(op);
  if (!info) {
    fail(ErrorCode::UnsupportedOpcode,
         "opcode 0x" + std::to_string(static_cast<unsigned>(op)) + " is not supported");
  }
  return info->headers;
}

std::string_view opcode_name(Opcode op) noexcept {
  if (const auto* info = lookup(op)) return info->name;
  switch (op) {
    case Opcode::AtomicAcknowledge: return "ATOMIC_ACKNOWLEDGE";
    case Opcode::CompareSwap: return "COMPARE_SWAP";
    case Opcode::FetchAdd: return "FETCH_ADD";
    default: return "UNKNOWN";
  }
}

std::span<const Opcode> supported_opcodes() noexcept { return kSupported; }

bool is_read_response(Opcode op) noexcept {
  return op == Opcode::RdmaReadResponseFirst || op == Opcode::RdmaReadResponseMiddle ||
         op == Opcode::RdmaReadResponseLast || op == Opcode::RdmaReadResponseOnly;
}

bool is_request(Opcode op) noexcept {
  return is_supported(op) && !is_read_response(op) && op != Opcode::Acknowledge;
}

bool is_message_end(Opcode op) noexcept {
  switch (op) {
    case Opcode::SendLast:
    case Opcode::SendLastWithImmediate:
    case Opcode::SendOnly:
    case Opcode::SendOnlyWithImmediate:
    case Opcode::RdmaWriteLast:
    case Opcode::RdmaWriteLastWithImmediate:
    case Opcode::RdmaWriteOnly:
    case Opcode::RdmaWriteOnlyWithImmediate:
    case Opcode::RdmaReadRequest:
    case Opcode::RdmaReadResponseLast:
    case Opcode::RdmaReadResponseOnly:
    case Opcode::SendLastWithInvalidate:
    case Opcode::SendOnlyWithInvalidate:
      return true;
    default:
      return false;
  }
}

bool carries_payload(Opcode op) noexcept {
  const auto* info = lookup(op);
  return info && info->payload;
}

std::size_t ext_header_bytes(const ExtHeaderSet& set) noexcept {
  return (set.reth ? kRethBytes : 0) + (set.aeth ? kAethBytes : 0) +
         (set.immdt ? kImmDtBytes : 0) + (set.ieth ? kIethBytes : 0);
}

std::size_t frame_size(Opcode op, std::size_t payload_bytes) {
  return kBthOffset + kBthBytes + ext_header_bytes(required_headers(op)) + payload_bytes +
         pad_for(payload_bytes) + kIcrcBytes;
}

std::size_t frame_size(const RocePacket& p) {
  return kBthOffset + kBthBytes + ext_header_bytes(p.present_headers()) + p.payload.size() +
         pad_for(p.payload.size()) + kIcrcBytes;
}

std::string_view traffic_class_name(TrafficClass c) noexcept {
  return c == TrafficClass::Rdma ? "rdma" : "non_rdma";
}

std::uint16_t ipv4_checksum(ByteView header) {
  std::uint32_t sum = 0;
  for (std::size_t i = 0; i + 1 < header.size(); i += 2) {
    if (i == 10) continue;  // checksum field itself
    sum += get_be16(header.data() + i);
  }
  while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
  return static_cast<std::uint16_t>(~sum);
}

std::uint32_t compute_icrc(ByteView frame) {
  if (frame.size() < kBthOffset + kBthBytes + kIcrcBytes) {
    fail(ErrorCode::TruncatedPacket, "frame too short for ICRC");
  }
  // Covered region: IP header through the end of the pad bytes.
  Bytes masked(8 + frame.size() - kL3Offset - kIcrcBytes);
  std::fill_n(masked.begin(), 8, 0xff);
  std::memcpy(masked.data() + 8, frame.data() + kL3Offset, masked.size() - 8);
  std::uint8_t* ip = masked.data() + 8;
  ip[1] = 0xff;                       // DSCP/ECN
  ip[8] = 0xff;                       // TTL
  ip[10] = ip[11] = 0xff;             // header checksum
  std::uint8_t* udp = ip + kIpv4HeaderBytes;
  udp[6] = udp[7] = 0xff;             // UDP checksum
  std::uint8_t* bth = udp + kUdpHeaderBytes;
  bth[4] = 0xff;                      // FECN/BECN/resv8a
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, masked.data(), static_cast<uInt>(masked.size()));
  return static_cast<std::uint32_t>(crc);
}

void seal(RocePacket& p) {
  p.bth.pad_count = pad_for(p.payload.size());
  const std::size_t frame = frame_size(p);
  p.udp.length = static_cast<std::uint16_t>(frame - kL4Offset);
  p.ip.total_length = static_cast<std::uint16_t>(frame - kL3Offset);
  Bytes bytes = serialize(p);
  p.ip.header_checksum = get_be16(bytes.data() + kL3Offset + 10);
  p.icrc = get_le32(bytes.data() + bytes.size() - kIcrcBytes);
}

Bytes serialize(const RocePacket& p) {
  const auto required = required_headers(p.bth.opcode);
  if (!(required == p.present_headers())) {
    fail(ErrorCode::InvalidHeaderCombination,
         std::string("extension headers do not match opcode ") +
             std::string(opcode_name(p.bth.opcode)));
  }
  if (p.bth.pad_count != pad_for(p.payload.size())) {
    fail(ErrorCode::InvalidHeaderCombination,
         "pad_count " + std::to_string(p.bth.pad_count) + " does not align payload of " +
             std::to_string(p.payload.size()) + " bytes");
  }
  if (!carries_payload(p.bth.opcode) && !p.payload.empty()) {
    fail(ErrorCode::InvalidHeaderCombination,
         std::string(opcode_name(p.bth.opcode)) + " carries no payload");
  }
  if (p.bth.psn > kPsnMask || p.bth.dest_qp > kQpnMask) {
    fail(ErrorCode::InvalidHeaderCombination, "PSN and destination QP are 24-bit fields");
  }
  if (p.bth.header_version > 0x0f) {
    fail(ErrorCode::InvalidHeaderCombination, "header version is a 4-bit field");
  }
  const std::size_t frame = frame_size(p);
  if (frame - kL3Offset > 0xffff) {
    fail(ErrorCode::InvalidArgument, "payload does not fit in one IPv4 datagram");
  }

  Bytes out(frame, 0);
  std::uint8_t* b = out.data();
  write_eth(b, p.eth);
  write_ipv4_header(b + kL3Offset, p.ip, static_cast<std::uint16_t>(frame - kL3Offset));

  std::uint8_t* udp = b + kL4Offset;
  put_be16(udp, p.udp.src_port);
  put_be16(udp + 2, p.udp.dst_port);
  put_be16(udp + 4, static_cast<std::uint16_t>(frame - kL4Offset));
  put_be16(udp + 6, p.udp.checksum);

  std::uint8_t* bth = b + kBthOffset;
  bth[0] = static_cast<std::uint8_t>(p.bth.opcode);
  bth[1] = static_cast<std::uint8_t>((p.bth.solicited_event ? 0x80 : 0) |
                                     (p.bth.mig_req ? 0x40 : 0) |
                                     ((p.bth.pad_count & 0x3) << 4) |
                                     (p.bth.header_version & 0x0f));
  put_be16(bth + 2, p.bth.partition_key);
  bth[4] = 0;
  put_be24(bth + 5, p.bth.dest_qp);
  bth[8] = p.bth.ack_request ? 0x80 : 0;
  put_be24(bth + 9, p.bth.psn);

  std::size_t off = kBthOffset + kBthBytes;
  if (p.reth) {
    put_be64(b + off, p.reth->virtual_address);
    put_be32(b + off + 8, p.reth->rkey);
    put_be32(b + off + 12, p.reth->dma_length);
    off += kRethBytes;
  }
  if (p.aeth) {
    b[off] = p.aeth->syndrome;
    put_be24(b + off + 1, p.aeth->msn & 0xffffff);
    off += kAethBytes;
  }
  if (p.immdt) {
    put_be32(b + off, p.immdt->immediate);
    off += kImmDtBytes;
  }
  if (p.ieth) {
    put_be32(b + off, p.ieth->invalidate_rkey);
    off += kIethBytes;
  }
  if (!p.payload.empty()) std::memcpy(b + off, p.payload.data(), p.payload.size());
  put_le32(b + frame - kIcrcBytes, compute_icrc(out));
  return out;
}

TrafficClass classify(ByteView frame, std::uint16_t roce_port) noexcept {
  if (frame.size() < kBthOffset) return TrafficClass::NonRdma;
  if (get_be16(frame.data() + 12) != kEtherTypeIpv4) return TrafficClass::NonRdma;
  const std::uint8_t* ip = frame.data() + kL3Offset;
  if ((ip[0] >> 4) != 4 || (ip[0] & 0x0f) != 5) return TrafficClass::NonRdma;
  if (ip[9] != kIpProtoUdp) return TrafficClass::NonRdma;
  if (get_be16(frame.data() + kL4Offset + 2) != roce_port) return TrafficClass::NonRdma;
  return TrafficClass::Rdma;
}

ClassifiedPacket parse(ByteView frame, const CodecOptions& options) {
  if (frame.size() < kEthHeaderBytes) {
    fail(ErrorCode::TruncatedPacket,
         "frame of " + std::to_string(frame.size()) + " bytes has no Ethernet header");
  }
  ClassifiedPacket out;
  out.cls = classify(frame, options.roce_port);
  if (out.cls == TrafficClass::NonRdma) {
    out.raw.assign(frame.begin(), frame.end());
    return out;
  }

  const std::uint8_t* b = frame.data();
  RocePacket p;
  std::memcpy(p.eth.dst_mac.data(), b, 6);
  std::memcpy(p.eth.src_mac.data(), b + 6, 6);
  p.eth.ethertype = get_be16(b + 12);

  const std::uint8_t* ip = b + kL3Offset;
  p.ip.version = ip[0] >> 4;
  p.ip.ihl = ip[0] & 0x0f;
  p.ip.dscp_ecn = ip[1];
  p.ip.total_length = get_be16(ip + 2);
  p.ip.identification = get_be16(ip + 4);
  p.ip.flags_fragment = get_be16(ip + 6);
  p.ip.ttl = ip[8];
  p.ip.protocol = ip[9];
  p.ip.header_checksum = get_be16(ip + 10);
  p.ip.src_ip = get_be32(ip + 12);
  p.ip.dst_ip = get_be32(ip + 16);
  if (kL3Offset + p.ip.total_length > frame.size()) {
    fail(ErrorCode::TruncatedPacket, "IPv4 total length " + std::to_string(p.ip.total_length) +
                                         " extends past a " + std::to_string(frame.size()) +
                                         "-byte frame");
  }

  const std::uint8_t* udp = b + kL4Offset;
  p.udp.src_port = get_be16(udp);
  p.udp.dst_port = get_be16(udp + 2);
  p.udp.length = get_be16(udp + 4);
  p.udp.checksum = get_be16(udp + 6);
  if (p.udp.length + kIpv4HeaderBytes > p.ip.total_length) {
    fail(ErrorCode::TruncatedPacket, "UDP length extends past the IPv4 datagram");
  }
  const std::size_t end = kL4Offset + p.udp.length;  // one past the ICRC
  if (end < kBthOffset + kBthBytes + kIcrcBytes) {
    fail(ErrorCode::TruncatedPacket, "UDP datagram too short for BTH and ICRC");
  }

  const std::uint8_t* bth = b + kBthOffset;
  p.bth.opcode = static_cast<Opcode>(bth[0]);
  p.bth.solicited_event = (bth[1] & 0x80) != 0;
  p.bth.mig_req = (bth[1] & 0x40) != 0;
  p.bth.pad_count = (bth[1] >> 4) & 0x3;
  p.bth.header_version = bth[1] & 0x0f;
  p.bth.partition_key = get_be16(bth + 2);
  p.bth.dest_qp = get_be24(bth + 5);
  p.bth.ack_request = (bth[8] & 0x80) != 0;
  p.bth.psn = get_be24(bth + 9);

  const auto headers = required_headers(p.bth.opcode);
  std::size_t off = kBthOffset + kBthBytes;
  if (off + ext_header_bytes(headers) + kIcrcBytes > end) {
    fail(ErrorCode::TruncatedPacket,
         std::string(opcode_name(p.bth.opcode)) + " extension headers extend past the datagram");
  }
  if (headers.reth) {
    p.reth = Reth{get_be64(b + off), get_be32(b + off + 8), get_be32(b + off + 12)};
    off += kRethBytes;
  }
  if (headers.aeth) {
    p.aeth = Aeth{b[off], get_be24(b + off + 1)};
    off += kAethBytes;
  }
  if (headers.immdt) {
    p.immdt = ImmDt{get_be32(b + off)};
    off += kImmDtBytes;
  }
  if (headers.ieth) {
    p.ieth = Ieth{get_be32(b + off)};
    off += kIethBytes;
  }
  const std::size_t body = end - kIcrcBytes - off;
  if (body < p.bth.pad_count) {
    fail(ErrorCode::TruncatedPacket, "pad count exceeds the packet body");
  }
  p.payload.assign(b + off, b + off + (body - p.bth.pad_count));
  p.icrc = get_le32(b + end - kIcrcBytes);

  if (options.verify_icrc) {
    const std::uint32_t expected = compute_icrc(frame.first(end));
    if (expected != p.icrc) {
      fail(ErrorCode::BadIcrc, "ICRC mismatch: frame carries " + hex64(p.icrc) +
                                   ", computed " + hex64(expected));
    }
  }
  out.packet = std::move(p);
  return out;
}

namespace {

Bytes make_ipv4_frame(const MacAddress& dst, const MacAddress& src, std::uint32_t src_ip,
                      std::uint32_t dst_ip, std::uint8_t protocol, ByteView l4) {
  Bytes out(kL4Offset + l4.size());
  write_eth(out.data(), EthernetHeader{dst, src, kEtherTypeIpv4});
  Ipv4Header ip;
  ip.protocol = protocol;
  ip.src_ip = src_ip;
  ip.dst_ip = dst_ip;
  write_ipv4_header(out.data() + kL3Offset, ip,
                    static_cast<std::uint16_t>(kIpv4HeaderBytes + l4.size()));
  std::copy(l4.begin(), l4.end(), out.begin() + kL4Offset);
  return out;
}

}  // namespace

Bytes make_udp_frame(const MacAddress& dst, const MacAddress& src, std::uint32_t src_ip,
                     std::uint32_t dst_ip, std::uint16_t sport, std::uint16_t dport,
                     ByteView payload) {
  Bytes l4(kUdpHeaderBytes + payload.size());
  put_be16(l4.data(), sport);
  put_be16(l4.data() + 2, dport);
  put_be16(l4.data() + 4, static_cast<std::uint16_t>(l4.size()));
  std::copy(payload.begin(), payload.end(), l4.begin() + kUdpHeaderBytes);
  return make_ipv4_frame(dst, src, src_ip, dst_ip, kIpProtoUdp, l4);
}

Bytes make_tcp_frame(const MacAddress& dst, const MacAddress& src, std::uint32_t src_ip,
                     std::uint32_t dst_ip, std::uint16_t sport, std::uint16_t dport,
                     ByteView payload) {
  Bytes l4(20 + payload.size(), 0);
  put_be16(l4.data(), sport);
  put_be16(l4.data() + 2, dport);
  put_be32(l4.data() + 4, 1);       // sequence number
  l4[12] = 5 << 4;                  // data offset
  l4[13] = 0x18;                    // PSH|ACK
  put_be16(l4.data() + 14, 0xffff); // window
  std::copy(payload.begin(), payload.end(), l4.begin() + 20);
  return make_ipv4_frame(dst, src, src_ip, dst_ip, kIpProtoTcp, l4);
}

Bytes make_arp_frame(const MacAddress& src, std::uint32_t sender_ip, std::uint32_t target_ip) {
  Bytes out(kEthHeaderBytes + 28, 0);
  MacAddress broadcast;
  broadcast.fill(0xff);
  write_eth(out.data(), EthernetHeader{broadcast, src, kEtherTypeArp});
  std::uint8_t* a = out.data() + kEthHeaderBytes;
  put_be16(a, 1);        // Ethernet
  put_be16(a + 2, 0x0800);
  a[4] = 6;
  a[5] = 4;
  put_be16(a + 6, 1);    // request
  std::memcpy(a + 8, src.data(), 6);
  put_be32(a + 14, sender_ip);
  put_be32(a + 24, target_ip);
  return out;
}

std::string format_ipv4(std::uint32_t ip) {
  return std::to_string(ip >> 24) + "." + std::to_string((ip >> 16) & 0xff) + "." +
         std::to_string((ip >> 8) & 0xff) + "." + std::to_string(ip & 0xff);
}

std::uint32_t parse_ipv4(std::string_view text) {
  std::uint32_t ip = 0;
  const char* p = text.data();
  const char* end = text.data() + text.size();
  for (int i = 0; i < 4; ++i) {
    unsigned octet = 0;
    auto [next, ec] = std::from_chars(p, end, octet);
    if (ec != std::errc() || octet > 255 || next == p) {
      fail(ErrorCode::InvalidArgument, "bad IPv4 address '" + std::string(text) + "'");
    }
    ip = (ip << 8) | octet;
    p = next;
    if (i < 3) {
      if (p == end || *p != '.') {
        fail(ErrorCode::InvalidArgument, "bad IPv4 address '" + std::string(text) + "'");
      }
      ++p;
    }
  }
  if (p != end) fail(ErrorCode::InvalidArgument, "bad IPv4 address '" + std::string(text) + "'");
  return ip;
}

}  // namespace snicsim::wire

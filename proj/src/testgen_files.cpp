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

#include "testgen_files.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace snicsim::testgen {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string format_mac(const wire::MacAddress& mac) {
  char buf[18];
  std::snprintf(buf, sizeof buf, "%02x:%02x:%02x:%02x:%02x:%02x", mac[0], mac[1], mac[2], mac[3],
                mac[4], mac[5]);
  return buf;
}

wire::MacAddress parse_mac(const std::string& text) {
  wire::MacAddress mac{};
  unsigned v[6];
  if (std::sscanf(text.c_str(), "%x:%x:%x:%x:%x:%x", &v[0], &v[1], &v[2], &v[3], &v[4], &v[5]) != 6) {
    fail(ErrorCode::IoError, "malformed MAC address '" + text + "'");
  }
  for (int i = 0; i < 6; ++i) mac[i] = static_cast<std::uint8_t>(v[i]);
  return mac;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::IoError, path.string() + ": " + e.what());
  }
}

}  // namespace

void CaseFile::write(const fs::path& dir) const {
  json g;
  g["name"] = name;
  g["seed"] = seed;
  g["mtu"] = mtu;
  g["initial_psn"] = initial_psn;
  g["qp_location"] = std::string(rdma::qp_location_name(location));
  g["roce_port"] = wire::kRoceV2Port;
  g["udp_sport"] = kUdpSport;
  g["peers"] = json::array();
  for (const auto& p : peers) g["peers"].push_back({{"mac", format_mac(p.mac)}, {"ip", wire::format_ipv4(p.ip)}});
  write_json(dir / "global.json", g);

  json regs = json::array();
  for (const auto& r : regions) {
    regs.push_back({{"peer", r.peer}, {"space", std::string(mem::space_name(r.space))},
                    {"base", r.base}, {"size", r.size}, {"access", r.access},
                    {"rkey", r.rkey}, {"victim", r.victim}});
  }
  write_json(dir / "mem_reg.json", regs);

  json q = json::array();
  for (const auto& r : qps) q.push_back({{"qpn", r.qpn}, {"depth", r.depth}});
  write_json(dir / "qp.json", q);

  json ents = json::array();
  for (const auto& e : entries) {
    json w = json::array();
    for (const auto& x : e.wqes) {
      w.push_back({{"wrid", x.wrid}, {"op", std::string(rdma::wqe_opcode_name(x.op))},
                   {"local", x.local}, {"remote", x.remote}, {"length", x.length},
                   {"rkey", x.rkey}, {"imm", x.immediate}, {"inv_rkey", x.invalidate_rkey}});
    }
    ents.push_back({{"peer", e.peer}, {"qpn", e.qpn},
                    {"mode", e.batch_mode ? "batch" : "single"}, {"wqes", w}});
  }
  write_json(dir / "wqe.json", ents);

  json rv = json::array();
  for (const auto& r : recvs) {
    rv.push_back({{"peer", r.peer}, {"qpn", r.qpn}, {"wrid", r.wrid}, {"addr", r.addr},
                  {"length", r.length}});
  }
  write_json(dir / "recv.json", rv);

  for (std::uint32_t p = 0; p < 2; ++p) {
    wire::write_dump(dir / ("stimulus_peer" + std::to_string(p) + ".bin"), stimulus[p]);
  }
}

CaseFile CaseFile::read(const fs::path& dir) {
  CaseFile c;
  try {
    const json g = read_json(dir / "global.json");
    c.name = g.at("name").get<std::string>();
    c.seed = g.at("seed").get<std::uint64_t>();
    c.mtu = g.at("mtu").get<std::uint32_t>();
    c.initial_psn = g.at("initial_psn").get<std::uint32_t>();
    c.location = rdma::parse_qp_location(g.at("qp_location").get<std::string>());
    for (std::size_t i = 0; i < 2; ++i) {
      c.peers[i].mac = parse_mac(g.at("peers").at(i).at("mac").get<std::string>());
      c.peers[i].ip = wire::parse_ipv4(g.at("peers").at(i).at("ip").get<std::string>());
    }
    for (const auto& r : read_json(dir / "mem_reg.json")) {
      c.regions.push_back({r.at("peer").get<std::uint32_t>(),
                           mem::parse_space(r.at("space").get<std::string>()),
                           r.at("base").get<std::uint64_t>(), r.at("size").get<std::uint64_t>(),
                           r.at("access").get<std::uint32_t>(), r.at("rkey").get<std::uint32_t>(),
                           r.at("victim").get<bool>()});
    }
    for (const auto& r : read_json(dir / "qp.json")) {
      c.qps.push_back({r.at("qpn").get<std::uint32_t>(), r.at("depth").get<std::uint32_t>()});
    }
    for (const auto& e : read_json(dir / "wqe.json")) {
      Entry en;
      en.peer = e.at("peer").get<std::uint32_t>();
      en.qpn = e.at("qpn").get<std::uint32_t>();
      en.batch_mode = e.at("mode").get<std::string>() == "batch";
      for (const auto& x : e.at("wqes")) {
        Wqe w;
        w.wrid = x.at("wrid").get<std::uint32_t>();
        w.op = rdma::parse_wqe_opcode(x.at("op").get<std::string>());
        w.local = x.at("local").get<std::uint64_t>();
        w.remote = x.at("remote").get<std::uint64_t>();
        w.length = x.at("length").get<std::uint32_t>();
        w.rkey = x.at("rkey").get<std::uint32_t>();
        w.immediate = x.at("imm").get<std::uint32_t>();
        w.invalidate_rkey = x.at("inv_rkey").get<std::uint32_t>();
        en.wqes.push_back(std::move(w));
      }
      c.entries.push_back(std::move(en));
    }
    for (const auto& r : read_json(dir / "recv.json")) {
      c.recvs.push_back({r.at("peer").get<std::uint32_t>(), r.at("qpn").get<std::uint32_t>(),
                         r.at("wrid").get<std::uint64_t>(), r.at("addr").get<std::uint64_t>(),
                         r.at("length").get<std::uint32_t>()});
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::IoError, dir.string() + ": malformed generated files: " + e.what());
  }
  for (std::uint32_t p = 0; p < 2; ++p) {
    c.stimulus[p] = wire::read_dump(dir / ("stimulus_peer" + std::to_string(p) + ".bin"));
  }
  return c;
}

std::vector<mem::ImageRange> CaseFile::image_ranges(std::uint32_t peer) const {
  std::vector<mem::ImageRange> out;
  for (const auto& r : regions) {
    if (r.peer == peer && !r.victim) out.push_back({r.space, r.base, r.size});
  }
  return out;
}

void write_stats(const fs::path& path, const StatMap& stats) {
  std::ofstream out(path, std::ios::trunc);
  for (const auto& [k, v] : stats) out << k << ' ' << v << '\n';
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
}

StatMap read_stats(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  StatMap stats;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream f(line);
    std::string key, value, extra;
    if (!(f >> key >> value) || (f >> extra) ||
        value.find_first_not_of("0123456789") != std::string::npos) {
      fail(ErrorCode::IoError, path.string() + ": malformed line '" + line + "'");
    }
    stats[key] = std::stoull(value);
  }
  return stats;
}

}  // namespace snicsim::testgen

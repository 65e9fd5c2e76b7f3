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


#include <fstream>
#include <sstream>

#include "doctest.h"
#include "snicsim/testgen.hpp"
#include "support.hpp"
#include "testgen_files.hpp"

using namespace snicsim;
using namespace snicsim::testgen;
namespace fs = std::filesystem;

namespace {

std::string schema_path(const std::string& text) {
  try {
    parse_spec(text);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::SchemaError) return "wrong code";
    // "SchemaError: <path>: <reason>"
    const std::string what = e.what();
    const auto start = what.find(": ") + 2;
    return what.substr(start, what.find(':', start) - start);
  }
  return "accepted";
}

const char* kMinimal = R"({
  "name": "one_write",
  "seed": 5,
  "rdma": {"num_qps": 1, "mtu": 4096},
  "memory": [
    {"peer": 0, "space": "host", "size": 4096, "access": ["local"]},
    {"peer": 1, "space": "host", "size": 4096, "access": ["local", "remote_write"]}
  ],
  "traffic": [{"op": "write", "payload_size": 1024}]
})";

void write_file(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return out;
}

std::string with_name(std::string spec, const std::string& name) {
  const auto at = spec.find("one_write");
  return spec.replace(at, 9, name);
}

}  // namespace

TEST_SUITE("testgen") {

TEST_CASE("schema errors name the offending JSON path") {
  CHECK(schema_path(R"({"name":"x","rdma":{},"memory":[{"peer":0,"space":"host","size":1}],"traffic":[{"op":"write","payload_size":1}],"foo":1})") == "$.foo");
  CHECK(schema_path("{") == "$");
  CHECK(schema_path(R"({"name":"x","rdma":{"mtu":1000},"memory":[{"peer":0,"space":"host","size":1}],"traffic":[{"op":"write","payload_size":1}]})") == "$.rdma.mtu");
  CHECK(schema_path(R"({"name":"x","rdma":{},"memory":[{"peer":0,"space":"host","size":1}],"traffic":[{"op":"atomic","payload_size":1}]})") == "$.traffic[0].op");
  CHECK(schema_path(R"({"name":"x","rdma":{},"memory":[{"peer":0,"space":"host","size":1,"access":["exec"]}],"traffic":[{"op":"write","payload_size":1}]})") == "$.memory[0].access[0]");
  CHECK(schema_path(R"({"name":"x","rdma":{},"memory":[],"traffic":[{"op":"write","payload_size":1}]})") == "$.memory");
  CHECK(schema_path(R"({"rdma":{},"memory":[{"peer":0,"space":"host","size":1}],"traffic":[{"op":"write","payload_size":1}]})") == "$.name");
  CHECK(schema_path(R"({"name":"x","rdma":{"num_qps":1},"memory":[{"peer":0,"space":"host","size":1}],"traffic":[{"op":"write","payload_size":1,"qp":1}]})") == "$.traffic[0].qp");
  CHECK(schema_path(kMinimal) == "accepted");
}

TEST_CASE("spec defaults") {
  const auto s = parse_spec(kMinimal);
  CHECK(s.name == "one_write");
  CHECK(s.initial_psn == 0);
  CHECK(s.qp_location == rdma::QpLocation::HostMem);
  CHECK(s.traffic[0].batch == 1);
  CHECK_FALSE(s.traffic[0].batch_mode);
  CHECK(s.checks.size() == 3);
}

TEST_CASE("generation is deterministic") {
  test::TempDir dir("gen");
  const auto spec = parse_spec(kMinimal);
  const auto g1 = generate(spec, dir.path() / "a");
  const auto g2 = generate(spec, dir.path() / "b");
  CHECK(g1.files == g2.files);
  CHECK(tree(dir.path() / "a") == tree(dir.path() / "b"));
  // Regenerating over existing output replaces it.
  write_file(dir.path() / "a" / "stale.txt", "x");
  generate(spec, dir.path() / "a");
  CHECK_FALSE(fs::exists(dir.path() / "a" / "stale.txt"));
  CHECK(tree(dir.path() / "a") == tree(dir.path() / "b"));
}

TEST_CASE("a 1 KB write yields one WRITE ONLY request carrying the source bytes") {
  test::TempDir dir("gen1k");
  const auto g = generate(parse_spec(kMinimal), dir.path());
  CHECK(g.wqes == 1);
  CHECK(g.request_packets == 1);
  CHECK(g.non_rdma_frames == 0);

  const auto cf = CaseFile::read(dir.path());
  REQUIRE(cf.entries.size() == 1);
  const auto& w = cf.entries[0].wqes.at(0);
  CHECK(w.length == 1024);

  const auto reqs = wire::read_dump(dir.path() / "golden" / "requests.bin");
  REQUIRE(reqs.size() == 1);
  const auto parsed = wire::parse(reqs[0].bytes, {wire::kRoceV2Port, true});
  REQUIRE(parsed.packet);
  const auto& p = *parsed.packet;
  CHECK(p.bth.opcode == wire::Opcode::RdmaWriteOnly);
  CHECK(reqs[0].bytes.size() == 14 + 20 + 8 + 12 + 16 + 1024 + 4);
  CHECK(p.reth->virtual_address == w.remote);
  CHECK(p.reth->rkey == w.rkey);
  CHECK(p.reth->dma_length == 1024);

  mem::Crossbar init, golden;
  mem::import_image(init, dir.path() / "init" / "peer0.bin", dir.path() / "init" / "peer0.manifest");
  mem::import_image(golden, dir.path() / "golden" / "peer1.bin", dir.path() / "golden" / "peer1.manifest");
  const Bytes src = init.read(w.local, 1024);
  CHECK(p.payload == src);
  CHECK(golden.read(w.remote, 1024) == src);
}

TEST_CASE("stats files are strict") {
  test::TempDir dir("stats");
  write_stats(dir.path() / "s.txt", {{"a", 1}, {"b", 22}});
  CHECK(read_stats(dir.path() / "s.txt") == StatMap{{"a", 1}, {"b", 22}});
  write_file(dir.path() / "bad.txt", "a 1\nb x\n");
  CHECK_THROWS_AS(read_stats(dir.path() / "bad.txt"), Error);
  CHECK_THROWS_AS(read_stats(dir.path() / "none.txt"), Error);
}

TEST_CASE("runner: pass, analysis only, and corruption") {
  test::TempDir root("run");
  write_file(root.path() / "alpha" / "spec.json", with_name(kMinimal, "alpha"));
  write_file(root.path() / "beta" / "spec.json",
             R"({"name":"beta","seed":9,"rdma":{"num_qps":2,"mtu":1024,"qp_location":"dev_mem"},
                 "memory":[{"peer":0,"space":"device","size":65536},{"peer":1,"space":"host","size":65536}],
                 "traffic":[{"op":"read","payload_size":3000,"batch":4,"qp":1},
                            {"op":"send_imm","payload_size":700,"batch":3,"src_peer":1,"mode":"single"}],
                 "non_rdma_ratio":0.25})");
  write_file(root.path() / "not_a_case" / "readme.txt", "x");
  CHECK(discover(root.path()) == std::vector<std::string>{"alpha", "beta"});

  const auto first = run_testcases(root.path(), {"regression"}, {});
  REQUIRE(first.cases.size() == 2);
  CHECK(first.all_passed());
  CHECK(first.text().find("2/2 testcases passed") != std::string::npos);
  CHECK(fs::exists(root.path() / "beta" / "results" / "report.json"));

  RunOptions analyse;
  analyse.no_sim = true;
  const auto again = run_testcases(root.path(), {}, analyse);
  CHECK(again.json() == first.json());

  // Flip one byte of the expected destination image.
  const fs::path img = root.path() / "alpha" / "generated" / "golden" / "peer1.bin";
  std::string bytes = slurp(img);
  REQUIRE(!bytes.empty());
  bytes[bytes.size() / 2] ^= 0x5a;
  std::ofstream(img, std::ios::binary) << bytes;
  const auto broken = run_testcases(root.path(), {"alpha"}, analyse);
  REQUIRE(broken.cases.size() == 1);
  CHECK_FALSE(broken.cases[0].passed);
  CHECK(broken.cases[0].first_diff.rfind("memory:", 0) == 0);
  CHECK(broken.failures() == 1);

  // Expected stats off by one.
  RunOptions reuse;
  reuse.no_pktgen = true;
  generate(load_spec(root.path() / "alpha" / "spec.json"), root.path() / "alpha" / "generated");
  const fs::path stats = root.path() / "alpha" / "generated" / "golden" / "stats.txt";
  auto st = read_stats(stats);
  st.begin()->second += 1;
  write_stats(stats, st);
  const auto bad_stats = run_testcases(root.path(), {"alpha"}, reuse);
  CHECK(bad_stats.cases[0].first_diff.rfind("stats:", 0) == 0);

  // A corrupted key with a non-UTF-8 byte still yields a readable report.
  st = read_stats(stats);
  st["\xff" "bad"] = 1;
  write_stats(stats, st);
  const auto binary = run_testcases(root.path(), {"alpha"}, reuse);
  CHECK_FALSE(binary.all_passed());
  CHECK_NOTHROW(binary.json());
  CHECK(fs::file_size(root.path() / "alpha" / "results" / "report.json") > 0);

  // Regeneration heals it.
  CHECK(run_testcases(root.path(), {"alpha"}, {}).all_passed());
}

TEST_CASE("runner errors") {
  test::TempDir root("runerr");
  CHECK_THROWS_AS(discover(root.path() / "missing"), Error);
  write_file(root.path() / "alpha" / "spec.json", with_name(kMinimal, "alpha"));
  const auto r = run_testcases(root.path(), {"nope"}, {});
  REQUIRE(r.cases.size() == 1);
  CHECK_FALSE(r.cases[0].passed);
}

}  // TEST_SUITE

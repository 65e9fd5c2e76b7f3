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


#include <cmath>
#include <random>

#include "doctest.h"
#include "snicsim/sim.hpp"
#include "snicsim/timing.hpp"

using namespace snicsim;

namespace {

// 100 Gb/s, with preamble, SFD and inter-frame gap charged per frame.
SimTime oracle_serialization(std::size_t frame) {
  return static_cast<SimTime>(std::ceil((frame + 24) * 8 / 100.0 - 1e-9));
}

}  // namespace

TEST_SUITE("timing") {

TEST_CASE("serialization at 100 Gb/s") {
  LinkModel link;
  CHECK(link.serialization(4096) == 330);
  CHECK(link.serialization(62) == 7);
  for (std::size_t f = 60; f < 9000; f += 37) CHECK(link.serialization(f) == oracle_serialization(f));
}

TEST_CASE("host memory latency interpolates between anchors") {
  TimingModel tm;
  CHECK(tm.host_mem_access(1) == 600);
  CHECK(tm.host_mem_access(64) == 600);
  CHECK(tm.host_mem_access(2048) == 964);
  CHECK(tm.host_mem_access(1056) == 782);  // halfway
  CHECK(tm.host_mem_access(2048 + 13000) == 964 + 1000);
  SimTime prev = 0;
  for (std::uint64_t b = 1; b < 100000; b += 97) {
    CHECK(tm.host_mem_access(b) >= prev);
    prev = tm.host_mem_access(b);
  }
}

TEST_CASE("timing validation") {
  TimingModel tm;
  CHECK_NOTHROW(tm.validate());
  tm.poll_interval = 0;
  CHECK_THROWS_AS(tm.validate(), Error);
  TimingModel bad;
  bad.host_mem_access_table = {{64, 600}, {32, 700}};
  CHECK_THROWS_AS(bad.validate(), Error);
  CHECK(transfer_time(0, 1e9) == 0);
  CHECK(transfer_time(1000, 1e9) == 1000);
  CHECK(transfer_time(1, 1e9) == 1);
}

TEST_CASE("link frames serialize back to back and arrive in order") {
  sim::Link link;
  const SimTime a = link.transmit(4096, 0);
  const SimTime b = link.transmit(4096, 0);
  const SimTime c = link.transmit(62, 10000);
  CHECK(a == 330 + 500);
  CHECK(b == 660 + 500);
  CHECK(c == 10000 + 7 + 500);
  CHECK(link.frames() == 3);
  CHECK(link.bytes() == 4096 * 2 + 62);

  std::mt19937_64 rng(6);
  sim::Link l2;
  SimTime now = 0, last = 0;
  for (int i = 0; i < 1000; ++i) {
    now += rng() % 200;
    const SimTime arr = l2.transmit(64 + rng() % 4000, now);
    CHECK(arr > last);
    CHECK(arr >= now + 500);
    last = arr;
  }
}

TEST_CASE("switch mode stores and forwards once more") {
  LinkModel m;
  m.via_switch = true;
  sim::Link link(m);
  CHECK(link.transmit(4096, 0) == 330 + 500 + 300 + 330);
}

}  // TEST_SUITE

TEST_SUITE("sim") {

TEST_CASE("events with the same time run in scheduling order") {
  sim::EventQueue q;
  std::vector<int> order;
  for (int i = 0; i < 10; ++i) q.schedule(100, 0, "e", [&order, i] { order.push_back(i); });
  q.schedule(50, 0, "early", [&order] { order.push_back(-1); });
  q.run_until_idle();
  CHECK(order == std::vector<int>{-1, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  CHECK(q.now() == 100);
  CHECK(q.dispatched() == 11);
}

TEST_CASE("random schedules dispatch in (time, seq) order") {
  sim::EventQueue q;
  std::mt19937_64 rng(8);
  std::vector<std::pair<SimTime, std::uint64_t>> seen;
  for (int i = 0; i < 2000; ++i) {
    const SimTime t = rng() % 500;
    const auto seq = q.schedule(t, 0, "e", [&seen, &q, t] { seen.push_back({t, 0}); (void)q; });
    (void)seq;
  }
  q.run_until_idle();
  CHECK(std::is_sorted(seen.begin(), seen.end(),
                       [](auto& a, auto& b) { return a.first < b.first; }));
}

TEST_CASE("scheduling in the past is rejected") {
  sim::EventQueue q;
  q.schedule(100, 0, "e", [] {});
  q.run_until_idle();
  try {
    q.schedule(99, 0, "late", [] {});
    FAIL("accepted an event in the past");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EventInPast);
  }
  CHECK_NOTHROW(q.schedule(100, 0, "now", [] {}));
}

TEST_CASE("idle queue") {
  sim::EventQueue q;
  CHECK(q.run_until_idle() == 0);
  CHECK_FALSE(q.step());
  CHECK_FALSE(q.next_time().has_value());
  CHECK(q.run_until(500) == 500);
  CHECK(q.now() == 500);
}

TEST_CASE("run_until stops at the limit") {
  sim::EventQueue q;
  int hits = 0;
  q.schedule(10, 0, "a", [&] { ++hits; });
  q.schedule(20, 0, "b", [&] { ++hits; });
  q.run_until(15);
  CHECK(hits == 1);
  CHECK(q.now() == 15);
  CHECK(q.next_time() == 20);
}

TEST_CASE("tracing records every dispatched event") {
  sim::EventQueue q;
  q.set_tracing(true);
  q.schedule(5, 3, "x", [] {});
  q.schedule(5, 4, "y", [] {});
  q.run_until_idle();
  REQUIRE(q.trace().size() == 2);
  CHECK(q.trace()[0].kind == "x");
  CHECK(q.trace()[1].actor == 4);
}

}  // TEST_SUITE

// Copyright 2026 The PDDS Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <catch2/catch_amalgamated.hpp>
#include <cstdio>
#include <deque>
#include <filesystem>

#include "pdds/rng.hpp"
#include "pdds/signal.hpp"

using namespace pdds;
using Catch::Approx;

TEST_CASE("glucose/voltage mapping anchors") {
  CHECK(glucose_to_voltage({100.0}) == Approx(0.5).margin(1e-12));
  CHECK(glucose_to_voltage({50.0}) == Approx(0.0).margin(1e-12));
  CHECK(glucose_to_voltage({180.0}) == Approx(1.3).margin(1e-12));
  CHECK(voltage_to_glucose(0.5).mgdl == Approx(100.0).margin(1e-12));
  CHECK(voltage_to_glucose(0.0).mgdl == Approx(50.0).margin(1e-12));
  CHECK(voltage_to_glucose(1.3).mgdl == Approx(180.0).margin(1e-12));
}

TEST_CASE("glucose/voltage clipping and rejection") {
  CHECK(glucose_to_voltage({10.0}) == 0.0);   // below-50 readings clip to 0 V
  CHECK(glucose_to_voltage({900.0}) == 3.0);  // top rail
  CHECK_THROWS_AS(glucose_to_voltage({std::nan("")}), std::invalid_argument);
  CHECK_THROWS_AS(glucose_to_voltage({-1.0}), std::invalid_argument);
  CHECK_THROWS_AS(voltage_to_glucose(-0.1), std::invalid_argument);
  CHECK_THROWS_AS(voltage_to_glucose(3.1), std::invalid_argument);
}

TEST_CASE("voltage round trip in the linear region") {
  for (double g = 50.0; g <= 350.0; g += 0.37) {
    CHECK(voltage_to_glucose(glucose_to_voltage({g})).mgdl == Approx(g).margin(1e-9));
  }
}

TEST_CASE("buffer basics") {
  VoltageBuffer buf(60);
  CHECK(buf.empty());
  buf.push({0.0, 0.5});
  CHECK(buf.size() == 1);
  for (int i = 1; i < 60; ++i) buf.push({5.0 * i, 0.5});
  CHECK(buf.size() == 60);
  for (int i = 0; i < 60; ++i) CHECK(buf[i].t_min == 5.0 * i);

  // 61st push: length stays 60 and entry 0 becomes the old entry 1.
  double old_second = buf[1].t_min;
  buf.push({300.0, 0.6});
  CHECK(buf.size() == 60);
  CHECK(buf[0].t_min == old_second);
  CHECK(buf.back().volts == 0.6);
}

TEST_CASE("buffer rejects bad readings") {
  VoltageBuffer buf(4);
  buf.push({1.0, 0.5});
  CHECK_THROWS_AS(buf.push({1.0, 0.5}), std::invalid_argument);   // equal timestamp
  CHECK_THROWS_AS(buf.push({0.5, 0.5}), std::invalid_argument);   // going backwards
  CHECK_THROWS_AS(buf.push({2.0, -0.1}), std::invalid_argument);  // voltage range
  CHECK_THROWS_AS(buf.push({2.0, 3.5}), std::invalid_argument);
  CHECK(buf.size() == 1);
}

TEST_CASE("ring semantics match a naive keep-last oracle") {
  Rng rng(101);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t cap = 1 + rng.below(80);
    VoltageBuffer buf(cap);
    std::deque<VoltageReading> oracle;
    int k = 1 + static_cast<int>(rng.below(500));
    double t = 0.0;
    for (int i = 0; i < k; ++i) {
      t += 0.1 + rng.uniform() * 9.9;
      VoltageReading r{t, rng.uniform() * 3.0};
      buf.push(r);
      oracle.push_back(r);
      while (oracle.size() > cap) oracle.pop_front();
    }
    REQUIRE(buf.size() == oracle.size());
    for (std::size_t i = 0; i < oracle.size(); ++i) {
      CHECK(buf[i].t_min == oracle[i].t_min);
      CHECK(buf[i].volts == oracle[i].volts);
    }
  }
}

TEST_CASE("least-squares slope on exact lines") {
  VoltageBuffer buf(60);
  SECTION("constant series has zero slope") {
    for (int i = 0; i < 10; ++i) buf.push({5.0 * i, 0.5});
    REQUIRE(lsq_slope(buf).has_value());
    CHECK(*lsq_slope(buf) == Approx(0.0).margin(1e-12));
  }
  SECTION("v = 0.5 + 0.01 t recovered exactly") {
    for (int i = 0; i < 10; ++i) {
      double t = 5.0 * i;
      buf.push({t, 0.5 + 0.01 * t});
    }
    CHECK(*lsq_slope(buf) == Approx(0.01).margin(1e-12));
  }
  SECTION("two-point slope") {
    buf.push({0.0, 0.5});
    buf.push({5.0, 0.4});
    CHECK(*lsq_slope(buf) == Approx(-0.02).margin(1e-12));
  }
  SECTION("insufficient data") {
    CHECK_FALSE(lsq_slope(buf).has_value());
    buf.push({0.0, 0.5});
    CHECK_FALSE(lsq_slope(buf).has_value());
  }
}

TEST_CASE("slope window selection uses the most recent entries") {
  VoltageBuffer buf(60);
  // 20 flat readings followed by 10 on a line; a 10-reading window sees only
  // the line.
  for (int i = 0; i < 20; ++i) buf.push({5.0 * i, 1.0});
  for (int i = 20; i < 30; ++i) buf.push({5.0 * i, 1.0 + 0.02 * (5.0 * i - 95.0)});
  CHECK(*lsq_slope(buf, 10) == Approx(0.02).margin(1e-12));
}

TEST_CASE("slope properties on random lines") {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    int n = 2 + static_cast<int>(rng.below(20));
    double slope = rng.uniform(-0.5, 0.5);
    double intercept = rng.uniform(0.0, 2.0);
    std::vector<double> t(n), v(n);
    double tt = rng.uniform(0.0, 100.0);
    for (int i = 0; i < n; ++i) {
      tt += 0.5 + rng.uniform() * 7.0;  // irregular cadence
      t[i] = tt;
      v[i] = intercept + slope * tt;
    }
    auto est = lsq_slope(std::span<const double>(t), std::span<const double>(v));
    REQUIRE(est.has_value());
    CHECK(*est == Approx(slope).margin(1e-12));

    // Translation invariance in t.
    std::vector<double> shifted(t);
    for (double& x : shifted) x += 12345.0;
    auto est2 = lsq_slope(std::span<const double>(shifted), std::span<const double>(v));
    CHECK(*est2 == Approx(*est).margin(1e-12));
  }
}

TEST_CASE("trace CSV round trip and validation") {
  std::vector<TraceReading> trace = {{0.0, 100.0, false}, {5.0, 140.5, true}, {10.0, 90.25, false}};
  auto path = std::filesystem::temp_directory_path() / "pdds_trace_test.csv";
  save_trace_csv(path.string(), trace);
  auto loaded = load_trace_csv(path.string());
  REQUIRE(loaded.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(loaded[i].t_min == trace[i].t_min);
    CHECK(loaded[i].glucose_mgdl == trace[i].glucose_mgdl);
    CHECK(loaded[i].hypo_event == trace[i].hypo_event);
  }
  std::filesystem::remove(path);

  SECTION("hypo_event column is optional") {
    auto p2 = std::filesystem::temp_directory_path() / "pdds_trace_min.csv";
    {
      std::ofstream f(p2);
      f << "t_min,glucose_mgdl\n0,100\n5,120\n";
    }
    auto t2 = load_trace_csv(p2.string());
    REQUIRE(t2.size() == 2);
    CHECK_FALSE(t2[0].hypo_event);
    std::filesystem::remove(p2);
  }
  SECTION("non-monotone timestamps rejected") {
    auto p3 = std::filesystem::temp_directory_path() / "pdds_trace_bad.csv";
    {
      std::ofstream f(p3);
      f << "t_min,glucose_mgdl\n5,100\n5,120\n";
    }
    CHECK_THROWS_AS(load_trace_csv(p3.string()), std::runtime_error);
    std::filesystem::remove(p3);
  }
  SECTION("bad header rejected") {
    auto p4 = std::filesystem::temp_directory_path() / "pdds_trace_hdr.csv";
    {
      std::ofstream f(p4);
      f << "time,glucose\n0,100\n";
    }
    CHECK_THROWS_AS(load_trace_csv(p4.string()), std::runtime_error);
    std::filesystem::remove(p4);
  }
}

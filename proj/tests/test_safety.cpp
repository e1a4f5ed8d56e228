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

#include "pdds/rng.hpp"
#include "pdds/safety.hpp"

using namespace pdds;
using Catch::Approx;

namespace {

VoltageBuffer line_buffer(double v0, double slope_per_min, int n, double cadence_min) {
  VoltageBuffer buf(60);
  for (int i = 0; i < n; ++i) {
    double t = cadence_min * i;
    buf.push({t, std::clamp(v0 + slope_per_min * t, 0.0, 3.0)});
  }
  return buf;
}

// Independent re-statement of the bell semantics, driven purely from the
// written contract: fire once per rising edge beyond epsilon, disarm until
// recovery below threshold - epsilon, and raise the threshold after a fire.
struct BellOracle {
  double threshold, epsilon, tau_base, alpha, delta_max;
  bool armed = true;
  int fires = 0;

  void step(double v, double slope) {
    if (!armed) {
      if (v < threshold - epsilon) armed = true;
      return;
    }
    if (v > threshold + epsilon) {
      ++fires;
      armed = false;
      double inc = tau_base + alpha * std::abs(slope);
      if (inc > delta_max) inc = delta_max;
      threshold = v + inc;
    }
  }
};

}  // namespace

TEST_CASE("lag projection") {
  CHECK(project_lag(0.5, 0.0, 15.0) == 0.5);
  CHECK(project_lag(0.5, -0.01, 15.0) == Approx(0.35).margin(1e-12));
  CHECK_THROWS_AS(project_lag(std::nan(""), 0.0, 15.0), std::invalid_argument);

  // Linearity in the lag horizon.
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    double v = rng.uniform(0.0, 3.0), s = rng.uniform(-0.5, 0.5), t = rng.uniform(0.0, 60.0);
    double lambda = rng.uniform(0.0, 4.0);
    CHECK(project_lag(v, s, lambda * t) - v == Approx(lambda * (project_lag(v, s, t) - v)).margin(1e-12));
  }
}

TEST_CASE("emergency detection on canonical buffers") {
  EmergencyConfig cfg;
  SECTION("constant buffer is benign") {
    auto buf = line_buffer(0.5, 0.0, 10, 5.0);
    auto v = detect_emergency(buf, cfg);
    CHECK_FALSE(v.is_emergency);
    CHECK(v.slope == Approx(0.0).margin(1e-12));
    CHECK(v.projected_v == Approx(0.5).margin(1e-10));
  }
  SECTION("mild descent stays below the trigger") {
    // 0.05 V per 5-minute reading = -0.01 V/min.
    auto buf = line_buffer(2.0, -0.01, 10, 5.0);
    auto v = detect_emergency(buf, cfg);
    CHECK(v.slope == Approx(-0.01).margin(1e-12));
    CHECK_FALSE(v.is_emergency);
  }
  SECTION("synthetic crash fires") {
    // 1.5 V per reading at 1-minute cadence.
    auto buf = line_buffer(3.0, -1.5, 3, 1.0);
    auto v = detect_emergency(buf, cfg);
    CHECK(v.slope == Approx(-1.5).margin(1e-12));
    CHECK(v.is_emergency);
  }
  SECTION("short buffers are non-emergencies with zero slope") {
    VoltageBuffer buf(60);
    auto v0 = detect_emergency(buf, cfg);
    CHECK_FALSE(v0.is_emergency);
    CHECK(v0.slope == 0.0);
    buf.push({0.0, 0.4});
    auto v1 = detect_emergency(buf, cfg);
    CHECK_FALSE(v1.is_emergency);
    CHECK(v1.slope == 0.0);
    CHECK(v1.projected_v == Approx(0.4).margin(1e-12));
  }
  SECTION("projection reported alongside the verdict") {
    auto buf = line_buffer(1.0, -0.02, 10, 5.0);
    auto v = detect_emergency(buf, cfg);
    CHECK(v.projected_v == Approx(buf.back().volts + v.slope * cfg.lag_minutes).margin(1e-12));
  }
}

TEST_CASE("emergency verdict is monotone in slope") {
  EmergencyConfig cfg;
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    double s1 = rng.uniform(-1.0, 0.2);
    double s2 = s1 + rng.uniform(0.0, 0.5);  // s1 <= s2
    auto b1 = line_buffer(2.5, s1, 8, 1.0);
    auto b2 = line_buffer(2.5, s2, 8, 1.0);
    auto v1 = detect_emergency(b1, cfg);
    auto v2 = detect_emergency(b2, cfg);
    if (v2.is_emergency) CHECK(v1.is_emergency);
  }
}

TEST_CASE("bell edge semantics") {
  ThresholdBell bell;
  SECTION("epsilon guard blocks boundary crossings") {
    CHECK_FALSE(bell_check(bell, 1.3 + 1e-12));
    CHECK(bell.armed);
  }
  SECTION("clear crossing fires once and disarms") {
    CHECK(bell_check(bell, 1.4));
    CHECK_FALSE(bell.armed);
    CHECK_FALSE(bell_check(bell, 1.45));  // still disarmed right after a fire
  }
  SECTION("recovery below threshold - epsilon re-arms") {
    REQUIRE(bell_check(bell, 1.4));
    bell_rearm(bell, 1.4, 0.0);           // threshold -> 1.5
    CHECK_FALSE(bell_check(bell, 1.45));  // recovery below 1.5 - eps re-arms, no fire
    CHECK(bell.armed);
    CHECK(bell_check(bell, 1.6));
  }
}

TEST_CASE("re-arm threshold arithmetic") {
  ThresholdBell bell;
  CHECK(bell_rearm(bell, 0.6, 0.2) == Approx(0.8).margin(1e-12));
  CHECK(bell_rearm(bell, 0.6, 1.0) == Approx(0.9).margin(1e-12));  // capped at delta_max
  CHECK(bell_rearm(bell, 0.6, 0.0) == Approx(0.7).margin(1e-12));

  // Increment always lands in [tau_base, delta_max].
  Rng rng(13);
  for (int i = 0; i < 500; ++i) {
    double v = rng.uniform(0.0, 3.0), s = rng.uniform(-3.0, 3.0);
    double inc = bell_rearm(bell, v, s) - v;
    CHECK(inc >= bell.tau_base - 1e-12);
    CHECK(inc <= bell.delta_max + 1e-12);
  }
}

TEST_CASE("bell matches the edge-counting oracle on random sequences") {
  Rng rng(4242);
  for (int trial = 0; trial < 200; ++trial) {
    ThresholdBell bell;
    BellOracle oracle{bell.threshold, bell.epsilon, bell.tau_base, bell.alpha, bell.delta_max};
    int n = 2 + static_cast<int>(rng.below(1000));
    int fires = 0;
    int raw_up_crossings = 0;
    double prev_v = 0.0;
    bool have_prev = false;
    for (int i = 0; i < n; ++i) {
      // Random walk keeps the sequence crossing the threshold region.
      double v = std::clamp(1.3 + rng.normal(0.0, 0.4), 0.0, 3.0);
      double slope = rng.uniform(-0.5, 0.5);
      double threshold_before = bell.threshold;
      if (have_prev && prev_v <= threshold_before && v > threshold_before) ++raw_up_crossings;
      bool fired = bell_check(bell, v);
      if (fired) {
        ++fires;
        bell_rearm(bell, v, slope);
      }
      oracle.step(v, slope);
      REQUIRE(oracle.fires == fires);
      REQUIRE(bell.armed == oracle.armed);
      REQUIRE(bell.threshold == Approx(oracle.threshold).margin(1e-12));
      prev_v = v;
      have_prev = true;
    }
    CHECK(fires == oracle.fires);
    CHECK(fires <= raw_up_crossings + 1);  // +1 for a possible first-reading edge
  }
}

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
#include <filesystem>
#include <set>

#include "pdds/dataset.hpp"
#include "pdds/rng.hpp"

using namespace pdds;
using Catch::Approx;

namespace {

Window make_window(std::span<const double> glucose, bool hypo = false, double cadence = 5.0) {
  Window w;
  REQUIRE(glucose.size() == kWindowReadings);
  for (int i = 0; i < kWindowReadings; ++i) {
    w.glucose_mgdl[i] = glucose[i];
    w.t_min[i] = cadence * i;
  }
  w.hypo_event = hypo;
  return w;
}

// Exact line through the final value: g(t) = last + slope * (t - t_last).
Window line_window(double last, double slope, bool hypo = false) {
  std::array<double, kWindowReadings> g;
  for (int i = 0; i < kWindowReadings; ++i) {
    g[i] = last + slope * (5.0 * i - 45.0);
  }
  return make_window(g, hypo);
}

// Truth table written as flat independent conditions, for the fuzz check.
int label_oracle(bool hypo, double last, double slope) {
  double a = slope < 0 ? -slope : slope;
  if (hypo) return 2;
  bool level2 = (last < 54.0) || (last > 250.0) || (a > 3.0);
  if (level2) return 2;
  bool hypo_border = last >= 54.0 && last < 70.0;
  bool hyper_border = last > 180.0 && last <= 250.0;
  bool slope_border = a >= 2.0 && a <= 3.0;
  if (hypo_border || hyper_border || slope_border) return 1;
  return 0;
}

}  // namespace

TEST_CASE("features of a constant window") {
  std::array<double, 10> flat;
  flat.fill(100.0);
  auto f = extract_features(make_window(flat));
  CHECK(f.v[0] == Approx(0.25).margin(1e-12));  // last
  CHECK(f.v[1] == Approx(0.25).margin(1e-12));  // mean
  CHECK(f.v[2] == Approx(0.25).margin(1e-12));  // min
  CHECK(f.v[3] == Approx(0.25).margin(1e-12));  // max
  CHECK(f.v[4] == Approx(0.0).margin(1e-12));   // abs slope
  CHECK(f.v[5] == Approx(0.5).margin(1e-12));   // signed slope centred at 0.5
  CHECK(f.v[6] == Approx(0.0).margin(1e-12));   // std
  CHECK(f.v[7] == Approx(0.0).margin(1e-12));   // range
  CHECK(f.v[8] == 0.0);
  CHECK(f.v[9] == 0.0);
}

TEST_CASE("features of a rising line 60 to 240") {
  std::array<double, 10> g;
  for (int i = 0; i < 10; ++i) g[i] = 60.0 + 20.0 * i;  // 4 mg/dL per minute
  auto f = extract_features(make_window(g));
  CHECK(f.v[0] == Approx(0.6).margin(1e-12));    // last = 240
  CHECK(f.v[2] == Approx(0.15).margin(1e-12));   // min = 60
  CHECK(f.v[3] == Approx(0.6).margin(1e-12));    // max = 240
  CHECK(f.v[7] == Approx(0.45).margin(1e-12));   // range = 180
  CHECK(f.v[4] == Approx(0.4).margin(1e-12));    // |slope| / 10
  CHECK(f.v[5] == Approx(0.7).margin(1e-12));    // slope mapped to [0,1]
  CHECK(f.v[8] == Approx(0.1).margin(1e-12));    // one reading below 70
  CHECK(f.v[9] == Approx(0.3).margin(1e-12));    // 200, 220, 240 above 180
}

TEST_CASE("time fractions count readings over the window") {
  std::array<double, 10> g = {65.0, 66.0, 68.0, 69.0, 120.0, 130.0, 140.0, 150.0, 160.0, 170.0};
  auto f = extract_features(make_window(g));
  CHECK(f.v[8] == Approx(0.4).margin(1e-12));  // 4 of 10 readings below 70 = 20 min
  CHECK(f.v[9] == 0.0);
  CHECK(f.v[8] + f.v[9] <= 1.0);
}

TEST_CASE("reversing a monotone window flips the signed slope about 0.5") {
  std::array<double, 10> g;
  for (int i = 0; i < 10; ++i) g[i] = 80.0 + 12.0 * i;
  auto fwd = extract_features(make_window(g));
  std::array<double, 10> rev;
  for (int i = 0; i < 10; ++i) rev[i] = g[9 - i];
  auto bwd = extract_features(make_window(rev));
  CHECK(fwd.v[5] - 0.5 == Approx(0.5 - bwd.v[5]).margin(1e-9));
  CHECK(fwd.v[4] == Approx(bwd.v[4]).margin(1e-9));
  for (int k : {1, 2, 3, 6, 7}) CHECK(fwd.v[k] == Approx(bwd.v[k]).margin(1e-9));
}

TEST_CASE("feature ranges under fuzz") {
  Rng rng(55);
  for (int trial = 0; trial < 2000; ++trial) {
    std::array<double, 10> g;
    for (auto& x : g) x = rng.uniform(40.0, 400.0);
    auto f = extract_features(make_window(g));
    for (double x : f.v) {
      REQUIRE(x >= 0.0);
      REQUIRE(x <= 1.0);
    }
    REQUIRE(f.v[8] + f.v[9] <= 1.0 + 1e-12);
    REQUIRE(f.v[2] <= f.v[1]);  // min <= mean
    REQUIRE(f.v[1] <= f.v[3]);  // mean <= max
  }
}

TEST_CASE("ADA labels on canonical windows") {
  CHECK(ada_label(line_window(53.0, 0.0)) == kHigh);
  CHECK(ada_label(line_window(100.0, 0.0)) == kLow);
  CHECK(ada_label(line_window(190.0, 0.5, true)) == kHigh);  // annotation overrides MEDIUM
  CHECK(ada_label(line_window(190.0, 0.5, false)) == kMedium);
  CHECK(ada_label(line_window(260.0, 0.0)) == kHigh);
  CHECK(ada_label(line_window(54.0, 0.0)) == kMedium);   // [54, 70) is borderline
  CHECK(ada_label(line_window(250.0, 0.0)) == kMedium);  // 250 inclusive
  CHECK(ada_label(line_window(100.0, 2.0)) == kMedium);  // |slope| in [2, 3]
  CHECK(ada_label(line_window(100.0, 3.0)) == kMedium);
  CHECK(ada_label(line_window(100.0, 3.05)) == kHigh);
  CHECK(ada_label(line_window(100.0, -2.5)) == kMedium);
}

TEST_CASE("annotation override never lowers a label") {
  Rng rng(66);
  for (int trial = 0; trial < 2000; ++trial) {
    double last = rng.uniform(40.0, 300.0);
    double slope = rng.uniform(-4.0, 4.0);
    Window plain = line_window(last, slope, false);
    Window marked = line_window(last, slope, true);
    CHECK(ada_label(marked) >= ada_label(plain));
    CHECK(ada_label(marked) == kHigh);
  }
}

TEST_CASE("label agrees with an independent truth table on 10k fuzz cases") {
  Rng rng(3141);
  for (int trial = 0; trial < 10000; ++trial) {
    double last = rng.uniform(40.0, 300.0);
    double slope = rng.uniform(-4.0, 4.0);
    bool hypo = rng.bernoulli(0.2);
    Window w = line_window(last, slope, hypo);
    // The constructed window is exactly linear, so its least-squares slope
    // is the constructed slope.
    REQUIRE(window_slope_mgdl_per_min(w) == Approx(slope).margin(1e-9));
    REQUIRE(ada_label(w) == label_oracle(hypo, last, slope));
  }
}

TEST_CASE("sliding windows") {
  auto make_trace = [](int n) {
    std::vector<TraceReading> t;
    for (int i = 0; i < n; ++i) t.push_back({5.0 * i, 100.0 + i, false});
    return t;
  };
  SECTION("counts") {
    CHECK(slide_windows(make_trace(9)).empty());
    CHECK(slide_windows(make_trace(10)).size() == 1);
    CHECK(slide_windows(make_trace(12)).size() == 3);
  }
  SECTION("annotation propagates to containing windows") {
    auto trace = make_trace(20);
    trace[7].hypo_event = true;
    auto windows = slide_windows(trace);
    REQUIRE(windows.size() == 11);
    for (std::size_t w0 = 0; w0 < windows.size(); ++w0) {
      bool contains = w0 <= 7 && 7 < w0 + 10;
      CHECK(windows[w0].hypo_event == contains);
    }
  }
  SECTION("a single missed reading is tolerated") {
    auto trace = make_trace(20);
    trace.erase(trace.begin() + 10);  // one 10-minute gap
    auto windows = slide_windows(trace);
    CHECK(windows.size() == trace.size() - 10 + 1);
  }
  SECTION("longer gaps split the trace") {
    std::vector<TraceReading> trace;
    for (int i = 0; i < 12; ++i) trace.push_back({5.0 * i, 100.0, false});
    for (int i = 0; i < 12; ++i) trace.push_back({100.0 + 5.0 * i, 120.0, false});  // 45-min gap
    auto windows = slide_windows(trace);
    CHECK(windows.size() == 6);  // 3 per segment, none spanning the gap
    for (const auto& w : windows) {
      CHECK(w.t_min[9] - w.t_min[0] <= 45.0 + 1e-9);
    }
  }
}

TEST_CASE("synthetic generator determinism") {
  SynthConfig cfg;
  cfg.n_patients = 3;
  cfg.days = 2.0;
  cfg.seed = 71;
  auto a = synth_generate(cfg);
  auto b = synth_generate(cfg);
  REQUIRE(a.size() == b.size());
  for (std::size_t p = 0; p < a.size(); ++p) {
    REQUIRE(a[p].readings.size() == b[p].readings.size());
    for (std::size_t i = 0; i < a[p].readings.size(); ++i) {
      REQUIRE(a[p].readings[i].glucose_mgdl == b[p].readings[i].glucose_mgdl);
      REQUIRE(a[p].readings[i].hypo_event == b[p].readings[i].hypo_event);
    }
  }
}

TEST_CASE("crash-free generation stays out of hypoglycaemia") {
  SynthConfig cfg;
  cfg.n_patients = 4;
  cfg.days = 3.0;
  cfg.crash_rate_per_day = 0.0;
  cfg.seed = 8;
  auto patients = synth_generate(cfg);
  std::int64_t below = 0, total = 0;
  std::array<std::int64_t, 3> labels{};
  for (const auto& p : patients) {
    for (const auto& r : p.readings) {
      total += 1;
      if (r.glucose_mgdl < 70.0) ++below;
      CHECK_FALSE(r.hypo_event);
    }
    for (const auto& rec : build_gold(p, "synthetic")) ++labels[rec.label];
  }
  CHECK(static_cast<double>(below) / total <= 0.002);  // noise floor only
  double low_med = static_cast<double>(labels[0] + labels[1]);
  CHECK(low_med / (labels[0] + labels[1] + labels[2]) >= 0.8);
}

TEST_CASE("default-style generation produces all classes with HIGH minority") {
  SynthConfig cfg;
  cfg.n_patients = 8;
  cfg.days = 5.0;
  cfg.seed = 15;
  auto patients = synth_generate(cfg);
  auto gold = build_gold(patients, "synthetic");
  std::array<std::int64_t, 3> labels{};
  std::int64_t annotated = 0, annotated_benign = 0;
  for (const auto& p : patients) {
    auto windows = slide_windows(p.readings);
    for (const auto& w : windows) {
      if (!w.hypo_event) continue;
      ++annotated;
      double last = w.glucose_mgdl.back();
      double slope = window_slope_mgdl_per_min(w);
      // Rebound-tail windows look benign to the threshold rule.
      if (last > 70.0 && last <= 180.0 && std::abs(slope) < 2.0) ++annotated_benign;
    }
  }
  for (const auto& rec : gold) ++labels[rec.label];
  CHECK(labels[0] > 0);
  CHECK(labels[1] > 0);
  CHECK(labels[2] > 0);
  CHECK(labels[2] < labels[0]);
  CHECK(labels[2] < labels[1]);
  CHECK(annotated > 0);
  CHECK(annotated_benign > 0);  // the non-obvious override pattern exists
}

TEST_CASE("patient-level split") {
  std::vector<GoldRecord> records;
  for (int p = 0; p < 20; ++p) {
    for (int w = 0; w < 10; ++w) {
      GoldRecord r;
      r.label = kLow;
      r.window_id = "p" + std::to_string(p) + "_w" + std::to_string(w);
      records.push_back(r);
    }
  }
  auto split = split_by_patient(records, {0.9, 0.05, 0.05}, 42);
  // Largest remainder on 20 patients at 90/5/5 gives 18/1/1.
  CHECK(split.train.size() == 180);
  CHECK(split.val.size() == 10);
  CHECK(split.test.size() == 10);

  SECTION("deterministic given the seed") {
    auto again = split_by_patient(records, {0.9, 0.05, 0.05}, 42);
    CHECK(again.train == split.train);
    CHECK(again.val == split.val);
    CHECK(again.test == split.test);
  }
  SECTION("no window crosses splits and patients are exclusive") {
    std::set<std::string> ids;
    std::set<int> train_p, val_p, test_p;
    for (const auto& r : split.train) { ids.insert(r.window_id); train_p.insert(patient_of(r)); }
    for (const auto& r : split.val) { REQUIRE(ids.insert(r.window_id).second); val_p.insert(patient_of(r)); }
    for (const auto& r : split.test) { REQUIRE(ids.insert(r.window_id).second); test_p.insert(patient_of(r)); }
    for (int p : val_p) CHECK_FALSE(train_p.count(p));
    for (int p : test_p) {
      CHECK_FALSE(train_p.count(p));
      CHECK_FALSE(val_p.count(p));
    }
  }
  SECTION("fewer patients than splits is rejected") {
    std::vector<GoldRecord> two;
    for (int p = 0; p < 2; ++p) {
      GoldRecord r;
      r.window_id = "p" + std::to_string(p) + "_w0";
      two.push_back(r);
    }
    CHECK_THROWS_AS(split_by_patient(two, {0.9, 0.05, 0.05}, 1), std::invalid_argument);
  }
}

TEST_CASE("gold CSV round trip is exact") {
  SynthConfig cfg;
  cfg.n_patients = 2;
  cfg.days = 1.0;
  cfg.seed = 99;
  auto gold = build_gold(synth_generate(cfg), "synthetic");
  REQUIRE(gold.size() > 100);
  auto path = (std::filesystem::temp_directory_path() / "pdds_gold_test.csv").string();
  write_gold_csv(path, gold);
  auto loaded = read_gold_csv(path);
  REQUIRE(loaded.size() == gold.size());
  for (std::size_t i = 0; i < gold.size(); ++i) REQUIRE(loaded[i] == gold[i]);
  std::filesystem::remove(path);
}

TEST_CASE("window id parsing") {
  GoldRecord r;
  r.window_id = "p17_w230";
  CHECK(patient_of(r) == 17);
  r.window_id = "x17";
  CHECK_THROWS_AS(patient_of(r), std::invalid_argument);
}

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

// Regenerates the deterministic trace fixtures under data/. Both files are
// committed; rerun this only when the fixture design changes.

#include <cmath>
#include <iostream>
#include <vector>

#include "pdds/signal.hpp"

namespace {

// Flat cruise at 260 mg/dL, then a steady 4 mg/dL/min descent through the
// hypoglycaemic boundary, with a low tail. Used to pin the lag-compensation
// margin: the projected value must cross the 70 mg/dL equivalent well before
// the raw readings do.
std::vector<pdds::TraceReading> crash_trace() {
  std::vector<pdds::TraceReading> t;
  double minutes = 0.0;
  for (int i = 0; i < 10; ++i, minutes += 5.0) t.push_back({minutes, 260.0, false});
  for (double g = 240.0; g >= 60.0; g -= 20.0, minutes += 5.0) {
    t.push_back({minutes, g, g < 70.0});
  }
  for (double g : {50.0, 45.0, 42.0, 40.0}) {
    t.push_back({minutes, g, true});
    minutes += 5.0;
  }
  return t;
}

// Two quiet days with three meal excursions per day; only the excursions
// cross the 180 mg/dL wake threshold, so pipeline activations stay sparse.
std::vector<pdds::TraceReading> reference_day() {
  std::vector<pdds::TraceReading> t;
  const double cadence = 5.0;
  const int days = 2;
  const double meal_starts[] = {8 * 60.0, 13 * 60.0, 19 * 60.0};
  const double amplitude = 95.0, rise = 30.0, tau = 60.0;
  for (int i = 0; i < days * 288; ++i) {
    double minutes = i * cadence;
    double tod = std::fmod(minutes, 1440.0);
    double g = 112.0 + 6.0 * std::sin(2.0 * 3.14159265358979323846 * tod / 1440.0);
    for (double start : meal_starts) {
      double dt = tod - start;
      if (dt < 0.0) continue;
      if (dt < rise) g += amplitude * dt / rise;
      else g += amplitude * std::exp(-(dt - rise) / tau);
    }
    t.push_back({minutes, g, false});
  }
  return t;
}

}  // namespace

int main(int argc, char** argv) {
  std::string dir = argc > 1 ? argv[1] : "data";
  pdds::save_trace_csv(dir + "/crash_trace.csv", crash_trace());
  pdds::save_trace_csv(dir + "/reference_day.csv", reference_day());
  std::cout << "fixtures written to " << dir << '\n';
  return 0;
}

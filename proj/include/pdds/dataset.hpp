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

#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdds/rng.hpp"
#include "pdds/signal.hpp"

namespace pdds {

inline constexpr int kWindowReadings = 10;  // 50 minutes at 5-minute cadence
inline constexpr double kGlucoseNormDivisor = 400.0;
inline constexpr double kSlopeNormDivisor = 10.0;  // mg/dL per minute

/// One 50-minute sliding window of CGM readings.
struct Window {
  std::array<double, kWindowReadings> glucose_mgdl{};
  std::array<double, kWindowReadings> t_min{};
  bool hypo_event = false;

  void validate() const {
    for (int i = 0; i < kWindowReadings; ++i) {
      if (!std::isfinite(glucose_mgdl[i]) || !std::isfinite(t_min[i])) {
        throw std::invalid_argument("Window: non-finite entry");
      }
      if (i > 0 && t_min[i] <= t_min[i - 1]) {
        throw std::invalid_argument("Window: timestamps must strictly increase");
      }
    }
  }
};

/// Least-squares slope of the window in mg/dL per minute, over true
/// timestamps (robust to one dropped reading).
inline double window_slope_mgdl_per_min(const Window& w) {
  auto s = lsq_slope(std::span<const double>(w.t_min), std::span<const double>(w.glucose_mgdl));
  return s.value_or(0.0);
}

/// The 10 normalised features of one window, in file column order.
struct FeatureVector {
  std::array<double, 10> v{};

  static const std::array<const char*, 10>& names() {
    static const std::array<const char*, 10> n = {
        "last_glucose_norm", "mean_glucose_norm", "min_glucose_norm",
        "max_glucose_norm",  "abs_slope_norm",    "signed_slope_norm",
        "glucose_std_norm",  "glucose_range_norm", "time_below_70_pct",
        "time_above_180_pct"};
    return n;
  }

  std::span<const double> values() const { return {v.data(), v.size()}; }
};

inline FeatureVector extract_features(const Window& w) {
  w.validate();
  const auto& g = w.glucose_mgdl;
  double last = g.back();
  double mean = std::accumulate(g.begin(), g.end(), 0.0) / kWindowReadings;
  double lo = *std::min_element(g.begin(), g.end());
  double hi = *std::max_element(g.begin(), g.end());
  double var = 0.0;
  for (double x : g) var += (x - mean) * (x - mean);
  var /= kWindowReadings;  // population variance
  double slope = window_slope_mgdl_per_min(w);

  auto norm400 = [](double x) { return std::clamp(x / kGlucoseNormDivisor, 0.0, 1.0); };

  FeatureVector f;
  f.v[0] = norm400(last);
  f.v[1] = norm400(mean);
  f.v[2] = norm400(lo);
  f.v[3] = norm400(hi);
  f.v[4] = std::clamp(std::abs(slope) / kSlopeNormDivisor, 0.0, 1.0);
  f.v[5] = std::clamp(slope / kSlopeNormDivisor, -1.0, 1.0) / 2.0 + 0.5;
  f.v[6] = std::clamp(std::sqrt(var) / kGlucoseNormDivisor, 0.0, 1.0);
  f.v[7] = std::clamp((hi - lo) / kGlucoseNormDivisor, 0.0, 1.0);
  int below = 0, above = 0;
  for (double x : g) {
    if (x < 70.0) ++below;
    if (x > 180.0) ++above;
  }
  f.v[8] = static_cast<double>(below) / kWindowReadings;
  f.v[9] = static_cast<double>(above) / kWindowReadings;
  return f;
}

// Severity classes.
inline constexpr int kLow = 0;
inline constexpr int kMedium = 1;
inline constexpr int kHigh = 2;

/// ADA 2023 label in strict priority order:
///   1. clinician hypo_event annotation -> HIGH (always wins)
///   2. last < 54 or last > 250 mg/dL, or |slope| > 3 mg/dL/min -> HIGH
///   3. last in [54,70) or (180,250], or |slope| in [2,3] -> MEDIUM
///   4. otherwise -> LOW
inline int ada_label(const Window& w) {
  w.validate();
  if (w.hypo_event) return kHigh;
  double last = w.glucose_mgdl.back();
  double abs_slope = std::abs(window_slope_mgdl_per_min(w));
  if (last < 54.0 || last > 250.0 || abs_slope > 3.0) return kHigh;
  if ((last >= 54.0 && last < 70.0) || (last > 180.0 && last <= 250.0) ||
      (abs_slope >= 2.0 && abs_slope <= 3.0)) {
    return kMedium;
  }
  return kLow;
}

/// Stride-1 sliding windows. Gaps of more than one missed reading split the
/// trace; no window spans a split. A window inherits hypo_event if any of its
/// readings is annotated.
inline std::vector<Window> slide_windows(std::span<const TraceReading> trace,
                                         double cadence_min = 5.0) {
  std::vector<Window> out;
  if (trace.size() < kWindowReadings) return out;
  // Segment boundaries: dt > 2 * cadence means at least two consecutive
  // readings are missing.
  std::vector<std::size_t> seg_start{0};
  std::vector<std::size_t> seg_end;
  for (std::size_t i = 1; i < trace.size(); ++i) {
    if (trace[i].t_min - trace[i - 1].t_min > 2.0 * cadence_min + 1e-9) {
      seg_end.push_back(i);
      seg_start.push_back(i);
    }
  }
  seg_end.push_back(trace.size());

  for (std::size_t s = 0; s < seg_start.size(); ++s) {
    std::size_t lo = seg_start[s], hi = seg_end[s];
    if (hi - lo < kWindowReadings) continue;
    for (std::size_t w0 = lo; w0 + kWindowReadings <= hi; ++w0) {
      Window w;
      w.hypo_event = false;
      for (int k = 0; k < kWindowReadings; ++k) {
        const auto& r = trace[w0 + k];
        w.glucose_mgdl[k] = r.glucose_mgdl;
        w.t_min[k] = r.t_min;
        w.hypo_event = w.hypo_event || r.hypo_event;
      }
      out.push_back(w);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic trace generation
// ---------------------------------------------------------------------------

/// Generator settings for the synthetic annotated CGM corpus: a per-patient
/// baseline random walk, Poisson-arriving meal excursions, and occasional
/// insulin-overshoot crashes that dip below 70 mg/dL and rebound, sometimes
/// above 180. Crash episodes carry clinician-style hypo_event annotations
/// with probability hypo_annotation_rate, covering the rebound tail as well,
/// which yields override windows whose last reading looks benign.
struct SynthConfig {
  int n_patients = 30;
  double days = 14.0;
  double meal_rate_per_day = 4.5;
  double crash_rate_per_day = 0.8;
  double noise_sd_mgdl = 4.0;
  double hypo_annotation_rate = 0.7;
  std::uint64_t seed = 1;
  double cadence_min = 5.0;

  void validate() const {
    if (n_patients < 1) throw std::invalid_argument("SynthConfig: n_patients must be >= 1");
    if (!(days > 0.0)) throw std::invalid_argument("SynthConfig: days must be > 0");
    if (meal_rate_per_day < 0.0 || crash_rate_per_day < 0.0 || noise_sd_mgdl < 0.0 ||
        hypo_annotation_rate < 0.0 || hypo_annotation_rate > 1.0) {
      throw std::invalid_argument("SynthConfig: rates must be non-negative (annotation rate in [0,1])");
    }
    if (!(cadence_min > 0.0)) throw std::invalid_argument("SynthConfig: cadence must be > 0");
  }

  static SynthConfig from_json(const nlohmann::json& j) {
    SynthConfig c;
    c.n_patients = j.value("n_patients", c.n_patients);
    c.days = j.value("days", c.days);
    c.meal_rate_per_day = j.value("meal_rate_per_day", c.meal_rate_per_day);
    c.crash_rate_per_day = j.value("crash_rate_per_day", c.crash_rate_per_day);
    c.noise_sd_mgdl = j.value("noise_sd_mgdl", c.noise_sd_mgdl);
    c.hypo_annotation_rate = j.value("hypo_annotation_rate", c.hypo_annotation_rate);
    c.seed = j.value("seed", c.seed);
    c.cadence_min = j.value("cadence_min", c.cadence_min);
    c.validate();
    return c;
  }
};

struct PatientTrace {
  int patient_id = 0;
  std::vector<TraceReading> readings;
};

namespace detail {

struct MealEvent {
  double start_min, amplitude, rise_min, decay_tau_min;
  double value_at(double t) const {
    if (t < start_min) return 0.0;
    double dt = t - start_min;
    if (dt < rise_min) return amplitude * dt / rise_min;
    return amplitude * std::exp(-(dt - rise_min) / decay_tau_min);
  }
};

// An insulin-overshoot crash overrides the base curve: linear descent to a
// hypoglycaemic nadir, a short trough, then a rebound that can overshoot
// past the starting level before decaying back.
struct CrashEvent {
  double start_min = 0.0;
  double descent_rate = 3.0;  // mg/dL per minute
  double nadir = 55.0;
  double hold_min = 15.0;
  double rebound_peak = 190.0;
  double rebound_rise_min = 35.0;
  double rebound_tau_min = 70.0;
  bool annotated = false;

  double end_of_rebound_rise(double g_start) const {
    double descent_min = std::max(0.0, g_start - nadir) / descent_rate;
    return start_min + descent_min + hold_min + rebound_rise_min;
  }

  // Returns true and writes the override value when t falls inside the
  // crash program.
  bool value_at(double t, double g_start, double* out) const {
    if (t < start_min) return false;
    double descent_min = std::max(0.0, g_start - nadir) / descent_rate;
    double dt = t - start_min;
    if (dt < descent_min) {
      *out = g_start - descent_rate * dt;
      return true;
    }
    dt -= descent_min;
    if (dt < hold_min) {
      *out = nadir;
      return true;
    }
    dt -= hold_min;
    if (dt < rebound_rise_min) {
      *out = nadir + (rebound_peak - nadir) * dt / rebound_rise_min;
      return true;
    }
    dt -= rebound_rise_min;
    // Decay back toward the pre-crash level; hand off to the base curve once
    // the residual is small.
    double residual = (rebound_peak - g_start) * std::exp(-dt / rebound_tau_min);
    if (std::abs(residual) < 2.0) return false;
    *out = g_start + residual;
    return true;
  }
};

}  // namespace detail

inline std::vector<PatientTrace> synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  std::vector<PatientTrace> patients;
  patients.reserve(cfg.n_patients);
  const double total_min = cfg.days * 24.0 * 60.0;
  const int n_readings = static_cast<int>(total_min / cfg.cadence_min);

  for (int p = 0; p < cfg.n_patients; ++p) {
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(p)));
    PatientTrace trace;
    trace.patient_id = p;
    trace.readings.reserve(n_readings);

    double anchor = rng.uniform(105.0, 150.0);
    double base = anchor;

    int n_meals = rng.poisson(cfg.meal_rate_per_day * cfg.days);
    std::vector<detail::MealEvent> meals;
    for (int m = 0; m < n_meals; ++m) {
      meals.push_back({rng.uniform(0.0, total_min), rng.uniform(55.0, 185.0),
                       rng.uniform(20.0, 45.0), rng.uniform(80.0, 220.0)});
    }

    int n_crashes = rng.poisson(cfg.crash_rate_per_day * cfg.days);
    std::vector<detail::CrashEvent> crashes;
    double last_crash_end = -1e9;
    for (int c = 0; c < n_crashes; ++c) {
      detail::CrashEvent ev;
      ev.start_min = rng.uniform(60.0, std::max(61.0, total_min - 240.0));
      if (ev.start_min < last_crash_end + 240.0) continue;  // keep episodes separate
      ev.descent_rate = rng.uniform(2.5, 5.0);
      ev.nadir = rng.uniform(46.0, 64.0);
      ev.hold_min = rng.uniform(10.0, 25.0);
      ev.rebound_peak = rng.uniform(150.0, 230.0);
      ev.rebound_rise_min = rng.uniform(25.0, 45.0);
      ev.rebound_tau_min = rng.uniform(50.0, 100.0);
      ev.annotated = rng.bernoulli(cfg.hypo_annotation_rate);
      last_crash_end = ev.start_min + 300.0;
      crashes.push_back(ev);
    }
    // Crash start levels resolve against baseline + meals at the start time.
    std::vector<double> crash_start_level(crashes.size());

    for (int i = 0; i < n_readings; ++i) {
      double t = i * cfg.cadence_min;
      // Slow mean-reverting baseline walk.
      base += 0.05 * (anchor - base) + rng.normal(0.0, 1.2);
      double g = base;
      for (const auto& meal : meals) g += meal.value_at(t);

      bool annotated = false;
      for (std::size_t c = 0; c < crashes.size(); ++c) {
        const auto& ev = crashes[c];
        if (t < ev.start_min) continue;
        if (crash_start_level[c] == 0.0) {
          crash_start_level[c] = std::max(g, ev.nadir + 25.0);
        }
        double overridden;
        if (ev.value_at(t, crash_start_level[c], &overridden)) {
          g = overridden;
          // Annotation spans descent through rebound rise; the tail decay is
          // left unannotated.
          if (ev.annotated && t <= ev.end_of_rebound_rise(crash_start_level[c])) {
            annotated = true;
          }
        }
      }

      g += rng.normal(0.0, cfg.noise_sd_mgdl);
      g = std::clamp(g, 40.0, 400.0);
      trace.readings.push_back({t, g, annotated});
    }
    patients.push_back(std::move(trace));
  }
  return patients;
}

// ---------------------------------------------------------------------------
// Gold records
// ---------------------------------------------------------------------------

struct GoldRecord {
  FeatureVector features;
  int label = kLow;
  std::string source = "synthetic";  // or "external"
  std::string window_id;             // "p<patient>_w<index>"

  bool operator==(const GoldRecord& o) const {
    return features.v == o.features.v && label == o.label && source == o.source &&
           window_id == o.window_id;
  }
};

inline int patient_of(const GoldRecord& rec) {
  if (rec.window_id.size() < 2 || rec.window_id[0] != 'p') {
    throw std::invalid_argument("GoldRecord: window_id must look like p<patient>_w<index>");
  }
  int patient = 0;
  auto underscore = rec.window_id.find('_');
  auto [ptr, ec] = std::from_chars(rec.window_id.data() + 1,
                                   rec.window_id.data() + (underscore == std::string::npos
                                                               ? rec.window_id.size()
                                                               : underscore),
                                   patient);
  if (ec != std::errc{}) throw std::invalid_argument("GoldRecord: bad window_id " + rec.window_id);
  (void)ptr;
  return patient;
}

inline std::vector<GoldRecord> build_gold(const PatientTrace& trace, const std::string& source,
                                          double cadence_min = 5.0) {
  std::vector<GoldRecord> out;
  auto windows = slide_windows(trace.readings, cadence_min);
  out.reserve(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    GoldRecord rec;
    rec.features = extract_features(windows[i]);
    rec.label = ada_label(windows[i]);
    rec.source = source;
    rec.window_id = "p" + std::to_string(trace.patient_id) + "_w" + std::to_string(i);
    out.push_back(std::move(rec));
  }
  return out;
}

inline std::vector<GoldRecord> build_gold(std::span<const PatientTrace> traces,
                                          const std::string& source,
                                          double cadence_min = 5.0) {
  std::vector<GoldRecord> out;
  for (const auto& t : traces) {
    auto recs = build_gold(t, source, cadence_min);
    out.insert(out.end(), recs.begin(), recs.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

struct GoldSplit {
  std::vector<GoldRecord> train, val, test;
};

/// Patient-level split: all windows of one patient land in one part, so
/// overlapping windows never leak across parts. Patient counts per part are
/// apportioned by largest remainder.
inline GoldSplit split_by_patient(std::span<const GoldRecord> records,
                                  std::array<double, 3> fractions, std::uint64_t seed) {
  double sum = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("split_by_patient: fractions must sum to 1");

  std::vector<int> patients;
  for (const auto& r : records) {
    int p = patient_of(r);
    if (std::find(patients.begin(), patients.end(), p) == patients.end()) patients.push_back(p);
  }
  std::sort(patients.begin(), patients.end());
  int n_parts = 0;
  for (double f : fractions)
    if (f > 0.0) ++n_parts;
  if (static_cast<int>(patients.size()) < n_parts) {
    throw std::invalid_argument("split_by_patient: fewer patients than splits");
  }

  // Largest-remainder apportionment.
  std::array<std::size_t, 3> quota{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    double exact = fractions[i] * static_cast<double>(patients.size());
    quota[i] = static_cast<std::size_t>(exact);
    remainder[i] = exact - static_cast<double>(quota[i]);
    assigned += quota[i];
  }
  while (assigned < patients.size()) {
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (remainder[i] > remainder[best]) best = i;
    ++quota[best];
    remainder[best] = -1.0;
    ++assigned;
  }
  // Every non-empty part gets at least one patient.
  for (int i = 0; i < 3; ++i) {
    if (fractions[i] > 0.0 && quota[i] == 0) {
      int donor = 0;
      for (int j = 1; j < 3; ++j)
        if (quota[j] > quota[donor]) donor = j;
      --quota[donor];
      ++quota[i];
    }
  }

  // Deterministic shuffle of patients, then fill parts in order.
  Rng rng(mix_seed(seed, 0x5117));
  for (std::size_t i = patients.size(); i > 1; --i) {
    std::size_t j = rng.below(i);
    std::swap(patients[i - 1], patients[j]);
  }
  std::array<std::vector<int>, 3> part_patients;
  std::size_t cursor = 0;
  for (int i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < quota[i]; ++k) part_patients[i].push_back(patients[cursor++]);
  }

  auto in_part = [&](int patient, int part) {
    const auto& v = part_patients[part];
    return std::find(v.begin(), v.end(), patient) != v.end();
  };

  GoldSplit split;
  for (const auto& r : records) {
    int p = patient_of(r);
    if (in_part(p, 0)) split.train.push_back(r);
    else if (in_part(p, 1)) split.val.push_back(r);
    else split.test.push_back(r);
  }
  return split;
}

// ---------------------------------------------------------------------------
// Gold file IO
// ---------------------------------------------------------------------------

inline std::string gold_csv_header() {
  std::string h;
  for (const char* name : FeatureVector::names()) {
    h += name;
    h += ',';
  }
  h += "label,source,window_id";
  return h;
}

inline void write_gold_csv(const std::string& path, std::span<const GoldRecord> records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_gold_csv: cannot open " + path);
  out << gold_csv_header() << '\n';
  out.precision(17);
  for (const auto& r : records) {
    for (double x : r.features.v) out << x << ',';
    out << r.label << ',' << r.source << ',' << r.window_id << '\n';
  }
}

inline std::vector<GoldRecord> read_gold_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_gold_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("read_gold_csv: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != gold_csv_header()) throw std::runtime_error("read_gold_csv: bad header in " + path);
  std::vector<GoldRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != 13) {
      throw std::runtime_error("read_gold_csv: wrong column count at line " + std::to_string(line_no));
    }
    GoldRecord r;
    try {
      for (int i = 0; i < 10; ++i) r.features.v[i] = std::stod(cells[i]);
      r.label = std::stoi(cells[10]);
      r.source = cells[11];
      r.window_id = cells[12];
    } catch (const std::exception&) {
      throw std::runtime_error("read_gold_csv: unparsable row at line " + std::to_string(line_no));
    }
    if (r.label < 0 || r.label > 2) {
      throw std::runtime_error("read_gold_csv: label out of range at line " + std::to_string(line_no));
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace pdds

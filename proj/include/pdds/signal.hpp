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
#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pdds {

// Glucose <-> voltage mapping: affine with 0.5 V == 100 mg/dL and
// 100 mg/dL per volt, so v = (g - 50) / 100. Hardware voltage range is
// 0..3 V; glucose below 50 mg/dL clips to 0 V.
inline constexpr double kGlucosePerVolt = 100.0;
inline constexpr double kGlucoseAtZeroVolts = 50.0;
inline constexpr double kMaxVolts = 3.0;
inline constexpr double kMaxGlucoseMgdl = 1000.0;  // sanity bound, not a CGM limit

struct GlucoseValue {
  double mgdl = 0.0;
};

inline double glucose_to_voltage(GlucoseValue g) {
  if (!std::isfinite(g.mgdl) || g.mgdl < 0.0 || g.mgdl > kMaxGlucoseMgdl) {
    throw std::invalid_argument("glucose_to_voltage: glucose out of range");
  }
  double v = (g.mgdl - kGlucoseAtZeroVolts) / kGlucosePerVolt;
  return std::clamp(v, 0.0, kMaxVolts);
}

inline GlucoseValue voltage_to_glucose(double volts) {
  if (!std::isfinite(volts) || volts < 0.0 || volts > kMaxVolts) {
    throw std::invalid_argument("voltage_to_glucose: voltage out of range");
  }
  return GlucoseValue{kGlucosePerVolt * volts + kGlucoseAtZeroVolts};
}

/// One sensor sample. Timestamps are minutes since stream start.
struct VoltageReading {
  double t_min = 0.0;
  double volts = 0.0;
};

/// Fixed-capacity ring over the most recent readings, oldest first.
/// Insertion at full capacity evicts exactly the oldest entry in O(1).
/// Single-writer; timestamps must strictly increase.
class VoltageBuffer {
 public:
  explicit VoltageBuffer(std::size_t capacity = 60) : cap_(capacity) {
    if (cap_ == 0) throw std::invalid_argument("VoltageBuffer: capacity must be > 0");
    ring_.resize(cap_);
  }

  void push(VoltageReading r) {
    if (!std::isfinite(r.t_min) || !std::isfinite(r.volts)) {
      throw std::invalid_argument("VoltageBuffer: non-finite reading");
    }
    if (r.volts < 0.0 || r.volts > kMaxVolts) {
      throw std::invalid_argument("VoltageBuffer: voltage outside 0..3 V");
    }
    if (size_ > 0 && r.t_min <= back().t_min) {
      throw std::invalid_argument("VoltageBuffer: non-monotone timestamp");
    }
    ring_[(head_ + size_) % cap_] = r;
    if (size_ == cap_) {
      head_ = (head_ + 1) % cap_;  // evict oldest
    } else {
      ++size_;
    }
  }

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return cap_; }
  bool empty() const { return size_ == 0; }

  /// Index 0 is the oldest retained reading.
  const VoltageReading& operator[](std::size_t i) const {
    if (i >= size_) throw std::out_of_range("VoltageBuffer: index");
    return ring_[(head_ + i) % cap_];
  }

  const VoltageReading& back() const { return (*this)[size_ - 1]; }

 private:
  std::vector<VoltageReading> ring_;
  std::size_t head_ = 0;
  std::size_t size_ = 0;
  std::size_t cap_;
};

/// Ordinary least-squares slope of v against t. Timestamps are centred
/// before accumulating, which makes the estimate translation-invariant and
/// exact for collinear data. Returns nullopt with fewer than 2 points.
inline std::optional<double> lsq_slope(std::span<const double> t,
                                       std::span<const double> v) {
  std::size_t n = t.size();
  if (n != v.size()) throw std::invalid_argument("lsq_slope: length mismatch");
  if (n < 2) return std::nullopt;
  double t_mean = 0.0, v_mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    t_mean += t[i];
    v_mean += v[i];
  }
  t_mean /= static_cast<double>(n);
  v_mean /= static_cast<double>(n);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double dt = t[i] - t_mean;
    num += dt * (v[i] - v_mean);
    den += dt * dt;
  }
  if (den == 0.0) return std::nullopt;  // duplicate timestamps cannot occur in a buffer
  return num / den;
}

/// Slope in V/min over the `n` most recent buffer entries (default 10).
inline std::optional<double> lsq_slope(const VoltageBuffer& buf, std::size_t n = 10) {
  std::size_t take = std::min(n, buf.size());
  if (take < 2) return std::nullopt;
  std::vector<double> t(take), v(take);
  std::size_t first = buf.size() - take;
  for (std::size_t i = 0; i < take; ++i) {
    t[i] = buf[first + i].t_min;
    v[i] = buf[first + i].volts;
  }
  return lsq_slope(std::span<const double>(t), std::span<const double>(v));
}

/// One row of a CGM stream file.
struct TraceReading {
  double t_min = 0.0;
  double glucose_mgdl = 0.0;
  bool hypo_event = false;  // clinician-style annotation
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

/// Parses `t_min,glucose_mgdl[,hypo_event]`. Rejects non-monotone t.
inline std::vector<TraceReading> load_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_trace_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_trace_csv: empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = detail::split_csv_line(line);
  if (header.size() < 2 || header[0] != "t_min" || header[1] != "glucose_mgdl" ||
      (header.size() == 3 && header[2] != "hypo_event") || header.size() > 3) {
    throw std::runtime_error("load_trace_csv: bad header in " + path);
  }
  bool has_hypo = header.size() == 3;
  std::vector<TraceReading> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw std::runtime_error("load_trace_csv: wrong column count at line " +
                               std::to_string(line_no));
    }
    TraceReading r;
    try {
      r.t_min = std::stod(cells[0]);
      r.glucose_mgdl = std::stod(cells[1]);
      if (has_hypo) {
        if (cells[2] != "0" && cells[2] != "1") {
          throw std::invalid_argument("hypo_event must be 0 or 1");
        }
        r.hypo_event = cells[2] == "1";
      }
    } catch (const std::exception&) {
      throw std::runtime_error("load_trace_csv: unparsable row at line " +
                               std::to_string(line_no));
    }
    if (!out.empty() && r.t_min <= out.back().t_min) {
      throw std::runtime_error("load_trace_csv: non-monotone t_min at line " +
                               std::to_string(line_no));
    }
    out.push_back(r);
  }
  return out;
}

inline void save_trace_csv(const std::string& path, std::span<const TraceReading> trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_trace_csv: cannot open " + path);
  out << "t_min,glucose_mgdl,hypo_event\n";
  out.precision(17);
  for (const auto& r : trace) {
    out << r.t_min << ',' << r.glucose_mgdl << ',' << (r.hypo_event ? 1 : 0) << '\n';
  }
}

}  // namespace pdds

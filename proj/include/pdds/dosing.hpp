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
#include <stdexcept>

namespace pdds {

/// Hard ceiling on any computed dose, in insulin units.
inline constexpr double kDoseCapUnits = 5.0;

/// Parameters of the sigmoidal dose formula. The functional form and the
/// 5.0 U cap are fixed; the shape constants are tunable and default to a
/// curve family where the severity-2 gate reaches half activation near
/// 0.2 V of excess and the severity-0 gate near 0.5 V.
struct DoseConfig {
  double v_base = 0.5;    // volts; excess is measured above this
  double s_vg = 1.0;      // excess per volt
  double d_base = 1.0;    // units
  double lambda = 2.0;    // per (V/min); amplification for rising glucose
  double k = 10.0;        // sigmoid steepness
  double m_base = 0.5;    // gate midpoint in excess space
  double delta_m = 0.15;  // midpoint shift per severity level
  double cap = kDoseCapUnits;

  void validate() const {
    if (cap != kDoseCapUnits) throw std::invalid_argument("DoseConfig: cap is fixed at 5.0 U");
    if (!(k > 0.0)) throw std::invalid_argument("DoseConfig: k must be > 0");
    if (delta_m < 0.0) throw std::invalid_argument("DoseConfig: delta_m must be >= 0");
    if (!(d_base > 0.0)) throw std::invalid_argument("DoseConfig: d_base must be > 0");
  }
};

struct DoseResult {
  double units = 0.0;        // clipped to [0, 5]
  double excess = 0.0;       // (v - v_base) * s_vg
  double sigmoid_gate = 0.0; // in (0, 1)
};

/// Severity-shifted sigmoidal dose. The one-sided slope term means a falling
/// glucose never increases the dose; higher severity moves the gate midpoint
/// down so the full dose engages at lower excess.
inline DoseResult compute_dose(double v, double slope, int severity, const DoseConfig& cfg) {
  if (severity < 0 || severity > 2) throw std::invalid_argument("compute_dose: severity must be 0, 1 or 2");
  if (!std::isfinite(v) || !std::isfinite(slope)) throw std::invalid_argument("compute_dose: non-finite input");
  DoseResult r;
  r.excess = (v - cfg.v_base) * cfg.s_vg;
  double d0 = cfg.d_base * r.excess * (1.0 + cfg.lambda * std::max(0.0, slope));
  double m_eff = cfg.m_base - static_cast<double>(severity) * cfg.delta_m;
  r.sigmoid_gate = 1.0 / (1.0 + std::exp(-cfg.k * (r.excess - m_eff)));
  r.units = std::clamp(d0 * r.sigmoid_gate, 0.0, cfg.cap);
  return r;
}

}  // namespace pdds

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
#include <stdexcept>

#include "pdds/signal.hpp"

namespace pdds {

/// Emergency descent detection. CGM readings trail blood glucose by
/// 10-20 minutes, so the detector projects the current value forward by
/// `lag_minutes` along the recent least-squares slope.
struct EmergencyConfig {
  double lag_minutes = 15.0;
  double slope_threshold = -0.25;  // V/min
  std::size_t window = 10;

  void validate() const {
    if (!(lag_minutes > 0.0)) throw std::invalid_argument("EmergencyConfig: lag_minutes must be > 0");
    if (!(slope_threshold < 0.0)) throw std::invalid_argument("EmergencyConfig: slope_threshold must be < 0");
    if (window < 2) throw std::invalid_argument("EmergencyConfig: window must be >= 2");
  }
};

struct EmergencyVerdict {
  bool is_emergency = false;
  double slope = 0.0;        // V/min
  double projected_v = 0.0;  // volts, lag-compensated estimate
};

/// Forward projection of the current reading. Deliberately unclipped: the
/// result is a risk estimate, not a sensor value.
inline double project_lag(double v_cur, double slope, double lag_minutes) {
  if (!std::isfinite(v_cur) || !std::isfinite(slope) || !std::isfinite(lag_minutes)) {
    throw std::invalid_argument("project_lag: non-finite input");
  }
  return v_cur + slope * lag_minutes;
}

/// Runs on every reading. Never throws on short buffers: with fewer than
/// 2 readings there is no slope evidence and the verdict is non-emergency
/// with slope reported as 0.
inline EmergencyVerdict detect_emergency(const VoltageBuffer& buf, const EmergencyConfig& cfg) {
  EmergencyVerdict verdict;
  double v_cur = buf.empty() ? 0.0 : buf.back().volts;
  verdict.slope = lsq_slope(buf, cfg.window).value_or(0.0);
  verdict.projected_v = project_lag(v_cur, verdict.slope, cfg.lag_minutes);
  verdict.is_emergency = verdict.slope <= cfg.slope_threshold;
  return verdict;
}

/// Edge-triggered comparator with an epsilon guard against floating-point
/// boundary re-triggers. Fires at most once per rising edge; after a fire it
/// stays disarmed until the signal recovers below threshold - epsilon.
struct ThresholdBell {
  double threshold = 1.3;  // volts; 1.3 V corresponds to 180 mg/dL
  bool armed = true;
  double epsilon = 1e-9;
  double tau_base = 0.1;   // volts
  double alpha = 0.5;
  double delta_max = 0.3;  // volts
};

inline bool bell_check(ThresholdBell& bell, double v_cur) {
  if (bell.armed) {
    if (v_cur > bell.threshold + bell.epsilon) {
      bell.armed = false;
      return true;
    }
    return false;
  }
  if (v_cur < bell.threshold - bell.epsilon) bell.armed = true;
  return false;
}

/// Raises the threshold after a fire, with headroom proportional to how fast
/// the signal was moving, capped at delta_max. Called exactly once per fire.
/// Returns the new threshold; the bell stays disarmed until the signal drops
/// below it.
inline double bell_rearm(ThresholdBell& bell, double v_cur, double slope) {
  double increment = std::min(bell.tau_base + bell.alpha * std::abs(slope), bell.delta_max);
  bell.threshold = v_cur + increment;
  return bell.threshold;
}

}  // namespace pdds

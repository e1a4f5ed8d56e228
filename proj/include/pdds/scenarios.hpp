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

#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "pdds/pipeline.hpp"

namespace pdds {

/// Deliberate defects for harness-sensitivity (mutation) checks. Each flag
/// must flip exactly one scenario to FAIL.
struct MutationFlags {
  bool break_epsilon_guard = false;  // zero out the bell's epsilon guard
  bool break_sync_wipe = false;      // wipe telemetry batches before confirm
};

struct ScenarioResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
};

namespace scenario_detail {

inline std::vector<TraceReading> trace_from_glucose(std::span<const double> glucose,
                                                    double cadence_min) {
  std::vector<TraceReading> t;
  for (std::size_t i = 0; i < glucose.size(); ++i) {
    t.push_back({static_cast<double>(i) * cadence_min, glucose[i], false});
  }
  return t;
}

inline PipelineConfig base_config(const MutationFlags& flags, Mode mode = Mode::kDiabetic) {
  PipelineConfig cfg;
  cfg.mode = mode;
  cfg.seed = 42;
  if (flags.break_epsilon_guard) cfg.bell_epsilon = 0.0;
  return cfg;
}

inline SpikingNet harness_net() { return SpikingNet::default_arch(4242); }

struct Recorder {
  Pipeline::RunSummary summary;
  std::vector<std::vector<PipelineEvent>> per_reading;
};

inline Recorder replay(Pipeline& p, std::span<const TraceReading> trace) {
  Recorder rec;
  for (const auto& r : trace) {
    auto events = p.on_reading(r);
    ++rec.summary.readings;
    for (const auto& ev : events) {
      ++rec.summary.events;
      if (std::holds_alternative<EmergencyAlert>(ev.data)) ++rec.summary.emergencies;
      if (std::holds_alternative<BellWake>(ev.data)) ++rec.summary.bell_fires;
      if (const auto* c = std::get_if<Classified>(&ev.data)) {
        if (c->rule_fallback) ++rec.summary.fallback_classifications;
        else ++rec.summary.snn_classifications;
      }
      if (std::holds_alternative<Injection>(ev.data)) ++rec.summary.injections;
      if (std::holds_alternative<Notification>(ev.data)) ++rec.summary.notifications;
      if (std::holds_alternative<NoOp>(ev.data)) ++rec.summary.noops;
    }
    rec.per_reading.push_back(std::move(events));
  }
  return rec;
}

struct Check {
  bool ok = true;
  std::string detail;
  void expect(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

// 1. Threshold exceeded (happy path)
inline ScenarioResult s01(const MutationFlags& flags) {
  std::vector<double> g(12, 120.0);
  g.insert(g.end(), {170.0, 185.0, 195.0});
  auto trace = trace_from_glucose(g, 5.0);
  Pipeline p(base_config(flags), harness_net());
  auto rec = replay(p, trace);
  Check c;
  c.expect(rec.summary.emergencies == 0, "no emergency expected");
  c.expect(rec.summary.bell_fires >= 1, "bell should fire on the crossing");
  c.expect(rec.summary.snn_classifications >= 1, "classifier should run");
  c.expect(rec.summary.fallback_classifications == 0, "window is long enough for the encoder");
  c.expect(rec.summary.injections >= 1, "dose should be delivered");
  for (const auto& events : rec.per_reading) {
    for (const auto& ev : events) {
      if (const auto* inj = std::get_if<Injection>(&ev.data)) {
        c.expect(inj->units >= 0.0 && inj->units <= kDoseCapUnits, "dose inside [0, 5] U");
      }
    }
  }
  return {1, "Threshold exceeded (happy path)", c.ok, c.detail};
}

// 2. All readings below threshold (no wake)
inline ScenarioResult s02(const MutationFlags& flags) {
  std::vector<double> g(20, 100.0);
  auto trace = trace_from_glucose(g, 5.0);
  Pipeline p(base_config(flags), harness_net());
  auto rec = replay(p, trace);
  Check c;
  c.expect(rec.summary.bell_fires == 0, "no wake expected");
  c.expect(rec.summary.snn_classifications == 0 && rec.summary.fallback_classifications == 0,
           "classifier must stay asleep");
  c.expect(rec.summary.injections == 0, "no dose");
  c.expect(rec.summary.noops == rec.summary.readings, "every reading is a no-op");
  return {2, "All readings below threshold (no wake)", c.ok, c.detail};
}

// 3. Re-trigger prevention (epsilon guard)
inline ScenarioResult s03(const MutationFlags& flags) {
  std::vector<double> g(12, 120.0);
  g.insert(g.end(), {190.0, 195.0, 198.0});
  auto trace = trace_from_glucose(g, 5.0);
  Pipeline p(base_config(flags), harness_net());
  auto rec = replay(p, trace);
  Check c;
  c.expect(rec.summary.bell_fires == 1, "continued elevation must not re-fire");
  c.expect(rec.summary.injections == 1, "exactly one dose");
  return {3, "Re-trigger prevention (epsilon guard)", c.ok, c.detail};
}

// 4. Second spike after recovery
inline ScenarioResult s04(const MutationFlags& flags) {
  std::vector<double> g(12, 120.0);
  g.insert(g.end(), {190.0, 120.0, 115.0, 118.0, 210.0});
  auto trace = trace_from_glucose(g, 5.0);
  Pipeline p(base_config(flags), harness_net());
  auto rec = replay(p, trace);
  Check c;
  c.expect(rec.summary.bell_fires == 2, "recovery re-arms the bell for the second spike");
  return {4, "Second spike after recovery", c.ok, c.detail};
}

// 5. Steady gradual incline
inline ScenarioResult s05(const MutationFlags& flags) {
  std::vector<double> g;
  for (int i = 0; i < 49; ++i) g.push_back(100.0 + 5.0 * i);  // 1 mg/dL per minute
  auto trace = trace_from_glucose(g, 5.0);
  Pipeline p(base_config(flags), harness_net());
  auto rec = replay(p, trace);
  Check c;
  c.expect(rec.summary.emergencies == 0, "incline is not an emergency");
  c.expect(rec.summary.bell_fires >= 2, "a long incline keeps crossing raised thresholds");
  // The slope-proportional re-arm headroom spaces fires out: never two
  // consecutive readings, and each fire's threshold at least the previous.
  int last_fire = -10;
  double last_threshold = -1.0;
  for (std::size_t i = 0; i < rec.per_reading.size(); ++i) {
    for (const auto& ev : rec.per_reading[i]) {
      if (const auto* bw = std::get_if<BellWake>(&ev.data)) {
        c.expect(static_cast<int>(i) - last_fire >= 2, "fires must be spaced by headroom");
        c.expect(bw->new_threshold >= last_threshold, "thresholds ratchet upward");
        last_fire = static_cast<int>(i);
        last_threshold = bw->new_threshold;
      }
    }
  }
  return {5, "Steady gradual incline", c.ok, c.detail};
}

// 6. Rapid spike + 5.0 U safety cap
inline ScenarioResult s06(const MutationFlags& flags) {
  std::vector<double> g = {100.0, 130.0, 170.0, 230.0, 290.0, 350.0};
  auto trace = trace_from_glucose(g, 1.0);  // 1-minute cadence synthetic spike
  PipelineConfig cfg = base_config(flags);
  cfg.bell_threshold = 2.8;  // wake at the top of the spike
  Pipeline p(cfg, harness_net());
  auto rec = replay(p, trace);
  Check c;
  c.expect(rec.summary.emergencies == 0, "rising spike is not a descent emergency");
  c.expect(rec.summary.injections == 1, "exactly one dose");
  for (const auto& events : rec.per_reading) {
    for (const auto& ev : events) {
      if (const auto* inj = std::get_if<Injection>(&ev.data)) {
        c.expect(inj->units == kDoseCapUnits, "dose must be capped at exactly 5.0 U");
      }
    }
  }
  return {6, "Rapid spike + 5.0 U safety cap", c.ok, c.detail};
}

// 7. Cloud sync (UPLOAD -> CONFIRM -> WIPE)
inline ScenarioResult s07(const MutationFlags& flags) {
  SyncQueue queue;
  for (int i = 0; i < 5; ++i) queue.enqueue("record-" + std::to_string(i));
  SimulatedCloudClient client;
  SyncResult res = sync(queue, client, flags.break_sync_wipe);
  Check c;
  c.expect(res.outcome == SyncOutcome::kSynced, "upload should succeed");
  c.expect(res.wiped == 5, "all confirmed records wiped");
  c.expect(queue.empty(), "queue drained after confirm");
  c.expect(client.received.size() == 5 && client.received.front() == "record-0",
           "client received the batch");
  const auto& tr = queue.last_transitions();
  c.expect(tr.size() == 3 && tr[0] == BatchState::kLocal && tr[1] == BatchState::kUploading &&
               tr[2] == BatchState::kConfirmed,
           "protocol order LOCAL -> UPLOADING -> CONFIRMED");
  return {7, "Cloud sync (UPLOAD -> CONFIRM -> WIPE)", c.ok, c.detail};
}

// 8. Sync failure (no data loss)
inline ScenarioResult s08(const MutationFlags& flags) {
  SyncQueue queue;
  for (int i = 0; i < 5; ++i) queue.enqueue("record-" + std::to_string(i));
  auto before = queue.snapshot();
  SimulatedCloudClient client;
  client.fail_all = true;
  SyncResult res = sync(queue, client, flags.break_sync_wipe);
  Check c;
  c.expect(res.outcome == SyncOutcome::kRetryable, "failed upload is retryable");
  c.expect(queue.snapshot() == before, "queue content identical after failure");
  c.expect(client.received.empty(), "nothing persisted remotely");
  // And a later retry against a healthy client must still deliver everything.
  client.fail_all = false;
  SyncResult retry = sync(queue, client, flags.break_sync_wipe);
  c.expect(retry.outcome == SyncOutcome::kSynced && client.received.size() == 5,
           "retry delivers the full batch");
  return {8, "Sync failure (no data loss)", c.ok, c.detail};
}

// 9. SNN severity affects dose magnitude
inline ScenarioResult s09(const MutationFlags&) {
  DoseConfig dose;
  Check c;
  double prev = -1.0;
  for (int severity = 0; severity <= 2; ++severity) {
    auto inj = severity_to_dose_effect(severity, 1.0, 0.0, Mode::kDiabetic, dose);
    c.expect(inj.has_value(), "diabetic mode yields an injection");
    c.expect(inj->units >= prev, "dose is non-decreasing in severity");
    prev = inj->units;
    c.expect(!severity_to_dose_effect(severity, 1.0, 0.0, Mode::kPrediabetic, dose).has_value(),
             "prediabetic mode discards the dose");
  }
  auto lo = severity_to_dose_effect(0, 1.0, 0.0, Mode::kDiabetic, dose);
  auto hi = severity_to_dose_effect(2, 1.0, 0.0, Mode::kDiabetic, dose);
  c.expect(hi->units > lo->units, "HIGH severity must dose strictly more here");
  return {9, "SNN severity affects dose magnitude", c.ok, c.detail};
}

// 10. Buffer full (ring eviction)
inline ScenarioResult s10(const MutationFlags& flags) {
  std::vector<double> g(70, 100.0);
  auto trace = trace_from_glucose(g, 5.0);
  Pipeline p(base_config(flags), harness_net());
  auto rec = replay(p, trace);
  Check c;
  c.expect(p.buffer().size() == 60, "buffer holds exactly its capacity");
  c.expect(p.buffer()[0].t_min == 10 * 5.0, "oldest entries were evicted in order");
  c.expect(rec.summary.readings == 70, "pipeline processed the whole trace");

  VoltageBuffer small(60);
  for (int i = 0; i < 61; ++i) small.push({static_cast<double>(i), 0.5});
  c.expect(small.size() == 60 && small[0].t_min == 1.0, "61st push evicts entry 0");
  return {10, "Buffer full (ring eviction)", c.ok, c.detail};
}

// 11. Azure Insights disabled (no-op)
inline ScenarioResult s11(const MutationFlags& flags) {
  std::vector<double> g(12, 120.0);
  g.insert(g.end(), {185.0, 195.0});
  auto trace = trace_from_glucose(g, 5.0);
  PipelineConfig cfg = base_config(flags);
  cfg.telemetry_enabled = false;
  Pipeline p(cfg, harness_net());
  SimulatedCloudClient client;
  auto sum = p.run(trace, &client);
  Check c;
  c.expect(sum.bell_fires >= 1, "pipeline still operates");
  c.expect(client.upload_calls == 0, "disabled telemetry means zero client calls");
  c.expect(p.queue().empty(), "nothing queued when telemetry is off");
  return {11, "Azure Insights disabled (no-op)", c.ok, c.detail};
}

// 12. Azure Insights enabled (telemetry)
inline ScenarioResult s12(const MutationFlags& flags) {
  std::vector<double> g(12, 120.0);
  g.insert(g.end(), {185.0, 195.0});
  auto trace = trace_from_glucose(g, 5.0);
  PipelineConfig cfg = base_config(flags);
  cfg.telemetry_enabled = true;
  Pipeline p(cfg, harness_net());
  SimulatedCloudClient client;
  auto sum = p.run(trace, &client);
  Check c;
  c.expect(client.upload_calls >= 1, "telemetry must call the client");
  c.expect(static_cast<std::int64_t>(client.received.size()) == sum.events,
           "every emitted event reaches the sink");
  c.expect(p.queue().empty(), "queue fully flushed at end of run");
  return {12, "Azure Insights enabled (telemetry)", c.ok, c.detail};
}

// 13. Emergency descent (injection suppressed)
inline ScenarioResult s13(const MutationFlags& flags) {
  std::vector<double> g = {170.0, 140.0, 110.0, 80.0, 50.0};  // -0.3 V/min at 1-min cadence
  auto trace = trace_from_glucose(g, 1.0);
  Pipeline p(base_config(flags), harness_net());
  auto rec = replay(p, trace);
  Check c;
  c.expect(rec.summary.emergencies >= 1, "crash must raise an emergency");
  c.expect(rec.summary.injections == 0, "injection is unconditionally suppressed");
  c.expect(rec.summary.bell_fires == 0 && rec.summary.snn_classifications == 0,
           "emergency bypasses bell and classifier");
  for (const auto& events : rec.per_reading) {
    bool has_emergency = false, has_urgent = false;
    for (const auto& ev : events) {
      if (std::holds_alternative<EmergencyAlert>(ev.data)) has_emergency = true;
      if (const auto* n = std::get_if<Notification>(&ev.data)) {
        if (n->tier == Tier::kUrgent) has_urgent = true;
      }
    }
    if (has_emergency) {
      c.expect(has_urgent, "emergency carries an URGENT alert");
      c.expect(events.size() == 2, "emergency reading emits nothing else");
    }
  }
  return {13, "Emergency descent (injection suppressed)", c.ok, c.detail};
}

// 14. PREDIABETIC mode (notifications only)
inline ScenarioResult s14(const MutationFlags& flags) {
  std::vector<double> g(12, 120.0);
  g.insert(g.end(), {185.0, 195.0, 260.0, 120.0, 115.0, 290.0});
  auto trace = trace_from_glucose(g, 5.0);
  Pipeline p(base_config(flags, Mode::kPrediabetic), harness_net());
  auto rec = replay(p, trace);
  Check c;
  c.expect(rec.summary.bell_fires >= 1, "bell still wakes the classifier");
  c.expect(rec.summary.injections == 0, "no injection ever in PREDIABETIC mode");
  c.expect(rec.summary.notifications >= 1, "severity routes to notifications");
  for (const auto& events : rec.per_reading) {
    const Classified* cls = nullptr;
    for (const auto& ev : events) {
      if (const auto* cc = std::get_if<Classified>(&ev.data)) cls = cc;
      if (const auto* n = std::get_if<Notification>(&ev.data)) {
        if (cls) {
          c.expect(n->tier == tier_for_severity(cls->severity),
                   "tier must match severity: LOW->NUDGE, MEDIUM->ALERT, HIGH->URGENT");
        }
      }
    }
  }
  return {14, "PREDIABETIC mode (notifications only)", c.ok, c.detail};
}

// 15. Floating-point boundary (epsilon guard)
inline ScenarioResult s15(const MutationFlags& flags) {
  const double threshold_v = 1.3;
  std::vector<double> g = {100.0,
                           kGlucosePerVolt * (threshold_v + 1e-12) + kGlucoseAtZeroVolts,
                           kGlucosePerVolt * (threshold_v + 1e-6) + kGlucoseAtZeroVolts};
  auto trace = trace_from_glucose(g, 5.0);
  Pipeline p(base_config(flags), harness_net());
  auto rec = replay(p, trace);
  Check c;
  bool fired_on_boundary = false, fired_on_clear = false;
  for (const auto& ev : rec.per_reading[1]) {
    if (std::holds_alternative<BellWake>(ev.data)) fired_on_boundary = true;
  }
  for (const auto& ev : rec.per_reading[2]) {
    if (std::holds_alternative<BellWake>(ev.data)) fired_on_clear = true;
  }
  c.expect(!fired_on_boundary, "a 1e-12 V overshoot sits inside the epsilon guard");
  c.expect(fired_on_clear, "a clear crossing beyond epsilon fires");
  c.expect(rec.summary.bell_fires == 1, "exactly one fire");
  return {15, "Floating-point boundary (epsilon guard)", c.ok, c.detail};
}

}  // namespace scenario_detail

/// Runs the full validation suite. Every scenario is data-driven; the
/// mutation flags inject specific defects so tests can confirm the harness
/// actually discriminates.
inline std::vector<ScenarioResult> run_scenarios(const MutationFlags& flags = {}) {
  using namespace scenario_detail;
  const std::function<ScenarioResult(const MutationFlags&)> scenarios[] = {
      s01, s02, s03, s04, s05, s06, s07, s08, s09, s10, s11, s12, s13, s14, s15};
  std::vector<ScenarioResult> results;
  results.reserve(15);
  for (const auto& s : scenarios) results.push_back(s(flags));
  return results;
}

inline bool all_pass(std::span<const ScenarioResult> results) {
  for (const auto& r : results) {
    if (!r.pass) return false;
  }
  return true;
}

inline std::string scenario_table(std::span<const ScenarioResult> results) {
  std::ostringstream os;
  for (const auto& r : results) {
    os << (r.id < 10 ? " " : "") << r.id << "  " << r.name;
    for (std::size_t pad = r.name.size(); pad < 46; ++pad) os << ' ';
    os << (r.pass ? "PASS" : "FAIL");
    if (!r.pass && !r.detail.empty()) os << "  (" << r.detail << ")";
    os << '\n';
  }
  return os.str();
}

}  // namespace pdds

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

#include <deque>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "pdds/baselines.hpp"
#include "pdds/dataset.hpp"
#include "pdds/dosing.hpp"
#include "pdds/safety.hpp"
#include "pdds/signal.hpp"
#include "pdds/snn.hpp"

namespace pdds {

// ---------------------------------------------------------------------------
// Modes and events
// ---------------------------------------------------------------------------

enum class Mode { kDiabetic, kPrediabetic };

inline Mode mode_from_string(const std::string& s) {
  if (s == "diabetic") return Mode::kDiabetic;
  if (s == "prediabetic") return Mode::kPrediabetic;
  throw std::invalid_argument("mode must be 'diabetic' or 'prediabetic'");
}

enum class Tier { kNudge, kAlert, kUrgent };

inline Tier tier_for_severity(int severity) {
  switch (severity) {
    case kLow: return Tier::kNudge;
    case kMedium: return Tier::kAlert;
    case kHigh: return Tier::kUrgent;
    default: throw std::invalid_argument("tier_for_severity: bad severity");
  }
}

inline const char* tier_name(Tier t) {
  switch (t) {
    case Tier::kNudge: return "NUDGE";
    case Tier::kAlert: return "ALERT";
    default: return "URGENT";
  }
}

struct EmergencyAlert {
  double slope = 0.0;
  double projected_v = 0.0;
};
struct BellWake {
  double v = 0.0;
  double new_threshold = 0.0;
};
struct Classified {
  int severity = 0;
  std::array<std::int64_t, 3> counts{};
  bool rule_fallback = false;  // window too short for the encoder; static rules used
};
struct Injection {
  double units = 0.0;
  double excess = 0.0;
  double gate = 0.0;
};
struct Notification {
  Tier tier = Tier::kNudge;
  int severity = 0;
};
struct NoOp {};

using EventData = std::variant<EmergencyAlert, BellWake, Classified, Injection, Notification, NoOp>;

struct PipelineEvent {
  double t_min = 0.0;
  EventData data;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["t"] = t_min;
    std::visit(
        [&j](const auto& e) {
          using T = std::decay_t<decltype(e)>;
          if constexpr (std::is_same_v<T, EmergencyAlert>) {
            j["type"] = "emergency_alert";
            j["slope"] = e.slope;
            j["projected_v"] = e.projected_v;
          } else if constexpr (std::is_same_v<T, BellWake>) {
            j["type"] = "bell_wake";
            j["v"] = e.v;
            j["new_threshold"] = e.new_threshold;
          } else if constexpr (std::is_same_v<T, Classified>) {
            j["type"] = "classified";
            j["severity"] = e.severity;
            j["counts"] = e.counts;
            j["source"] = e.rule_fallback ? "rule_fallback" : "snn";
          } else if constexpr (std::is_same_v<T, Injection>) {
            j["type"] = "injection";
            j["units"] = e.units;
            j["excess"] = e.excess;
            j["gate"] = e.gate;
          } else if constexpr (std::is_same_v<T, Notification>) {
            j["type"] = "notification";
            j["tier"] = tier_name(e.tier);
            j["severity"] = e.severity;
          } else {
            j["type"] = "noop";
          }
        },
        data);
    return j;
  }
};

/// Dose side effect of a classification. The dose is always computed; it
/// becomes an Injection only in DIABETIC mode and is discarded otherwise.
inline std::optional<Injection> severity_to_dose_effect(int severity, double v, double slope,
                                                        Mode mode, const DoseConfig& cfg) {
  DoseResult d = compute_dose(v, slope, severity, cfg);
  if (mode != Mode::kDiabetic) return std::nullopt;  // no injection ever
  return Injection{d.units, d.excess, d.sigmoid_gate};
}

// ---------------------------------------------------------------------------
// Cloud sync: UPLOAD -> CONFIRM -> WIPE
// ---------------------------------------------------------------------------

class CloudClient {
 public:
  struct UploadResult {
    bool ok = false;
    std::uint64_t token = 0;  // confirm token; meaningful only when ok
  };
  virtual ~CloudClient() = default;
  virtual UploadResult upload(std::span<const std::string> batch) = 0;
};

/// In-memory stand-in for the real telemetry backend, with failure injection
/// for the validation suite.
class SimulatedCloudClient : public CloudClient {
 public:
  int fail_next = 0;     // fail this many upcoming uploads
  bool fail_all = false;
  int upload_calls = 0;
  std::vector<std::string> received;

  UploadResult upload(std::span<const std::string> batch) override {
    ++upload_calls;
    if (fail_all || fail_next > 0) {
      if (fail_next > 0) --fail_next;
      return {false, 0};
    }
    received.insert(received.end(), batch.begin(), batch.end());
    return {true, next_token_++};
  }

 private:
  std::uint64_t next_token_ = 1;
};

enum class BatchState { kLocal, kUploading, kConfirmed };

enum class SyncOutcome { kNothingToSync, kSynced, kRetryable };

struct SyncResult {
  SyncOutcome outcome = SyncOutcome::kNothingToSync;
  std::size_t wiped = 0;
};

/// Pending telemetry records. Records leave the queue only after a batch is
/// CONFIRMED; a failed upload reverts the batch to LOCAL with every record
/// intact. Single-writer.
class SyncQueue {
 public:
  void enqueue(std::string payload) { pending_.push_back(std::move(payload)); }
  std::size_t size() const { return pending_.size(); }
  bool empty() const { return pending_.empty(); }
  std::vector<std::string> snapshot() const { return {pending_.begin(), pending_.end()}; }
  /// State transitions of the most recent sync attempt, oldest first.
  const std::vector<BatchState>& last_transitions() const { return transitions_; }

 private:
  std::deque<std::string> pending_;
  std::set<std::uint64_t> consumed_tokens_;
  std::vector<BatchState> transitions_;

  friend SyncResult sync(SyncQueue&, CloudClient&, bool);
};

/// One sync round. Records enqueued while an upload is in flight join the
/// next batch. `wipe_before_confirm` deliberately breaks the protocol order
/// and exists solely so the validation suite can prove it would be caught.
inline SyncResult sync(SyncQueue& queue, CloudClient& client, bool wipe_before_confirm = false) {
  queue.transitions_.clear();
  if (queue.pending_.empty()) return {SyncOutcome::kNothingToSync, 0};

  const std::size_t batch_size = queue.pending_.size();
  std::vector<std::string> batch(queue.pending_.begin(), queue.pending_.begin() + batch_size);
  queue.transitions_.push_back(BatchState::kLocal);
  queue.transitions_.push_back(BatchState::kUploading);

  std::size_t wiped = 0;
  if (wipe_before_confirm) {
    queue.pending_.erase(queue.pending_.begin(), queue.pending_.begin() + batch_size);
    wiped = batch_size;
  }

  CloudClient::UploadResult res = client.upload(batch);
  if (!res.ok) {
    queue.transitions_.push_back(BatchState::kLocal);  // batch reverts; nothing lost
    return {SyncOutcome::kRetryable, wiped};
  }

  queue.transitions_.push_back(BatchState::kConfirmed);
  if (!queue.consumed_tokens_.insert(res.token).second) {
    return {SyncOutcome::kSynced, 0};  // token already wiped once
  }
  if (!wipe_before_confirm) {
    queue.pending_.erase(queue.pending_.begin(), queue.pending_.begin() + batch_size);
    wiped = batch_size;
  }
  return {SyncOutcome::kSynced, wiped};
}

// ---------------------------------------------------------------------------
// Orchestrator
// ---------------------------------------------------------------------------

struct PipelineConfig {
  Mode mode = Mode::kDiabetic;
  EmergencyConfig emergency{};
  DoseConfig dose{};
  EncoderConfig encoder{};
  std::size_t buffer_capacity = 60;
  double bell_threshold = 1.3;  // 180 mg/dL
  double bell_epsilon = 1e-9;
  double bell_tau_base = 0.1;
  double bell_alpha = 0.5;
  double bell_delta_max = 0.3;
  bool telemetry_enabled = false;
  std::uint64_t seed = 0;
};

/// Event-driven per-reading flow: the emergency detector always runs first
/// and, when it fires, bypasses the whole injection pathway; otherwise the
/// bell gates the expensive encode + classify + dose stage.
class Pipeline {
 public:
  Pipeline(PipelineConfig cfg, SpikingNet net)
      : cfg_(cfg), net_(std::move(net)), buf_(cfg.buffer_capacity) {
    cfg_.emergency.validate();
    cfg_.dose.validate();
    cfg_.encoder.validate();
    net_.check_shapes();
    bell_.threshold = cfg_.bell_threshold;
    bell_.epsilon = cfg_.bell_epsilon;
    bell_.tau_base = cfg_.bell_tau_base;
    bell_.alpha = cfg_.bell_alpha;
    bell_.delta_max = cfg_.bell_delta_max;
  }

  std::vector<PipelineEvent> on_reading(const TraceReading& r) {
    std::vector<PipelineEvent> events;
    const double t = r.t_min;
    const double v = glucose_to_voltage(GlucoseValue{r.glucose_mgdl});
    buf_.push({t, v});
    recent_.push_back(r);
    while (recent_.size() > kWindowReadings) recent_.pop_front();
    const std::int64_t idx = reading_index_++;

    // Emergency detection precedes everything; a verdict suppresses the
    // bell, the classifier and the dose for this reading.
    EmergencyVerdict verdict = detect_emergency(buf_, cfg_.emergency);
    if (verdict.is_emergency) {
      events.push_back({t, EmergencyAlert{verdict.slope, verdict.projected_v}});
      events.push_back({t, Notification{Tier::kUrgent, kHigh}});
      return events;
    }

    if (!bell_check(bell_, v)) {
      events.push_back({t, NoOp{}});
      return events;
    }
    double new_threshold = bell_rearm(bell_, v, verdict.slope);
    events.push_back({t, BellWake{v, new_threshold}});

    Classified cls;
    if (recent_.size() >= kWindowReadings) {
      Window w;
      for (int k = 0; k < kWindowReadings; ++k) {
        w.glucose_mgdl[k] = recent_[k].glucose_mgdl;
        w.t_min[k] = recent_[k].t_min;
      }
      FeatureVector features = extract_features(w);
      Rng rng(mix_seed(mix_seed(cfg_.seed, 0xC1A55), static_cast<std::uint64_t>(idx)));
      SpikeTensor x = poisson_encode(features.values(), cfg_.encoder, rng);
      ForwardResult fwd = forward(net_, x);
      cls.severity = classify(fwd.counts);
      for (int c = 0; c < 3 && c < static_cast<int>(fwd.counts.size()); ++c) {
        cls.counts[c] = fwd.counts[c];
      }
    } else {
      // Cold start: too few readings for a window, fall back to static rules.
      std::vector<double> ts, gs;
      for (const auto& rr : recent_) {
        ts.push_back(rr.t_min);
        gs.push_back(rr.glucose_mgdl);
      }
      double slope_mgdl = lsq_slope(std::span<const double>(ts), std::span<const double>(gs)).value_or(0.0);
      cls.severity = rule_assess(r.glucose_mgdl, slope_mgdl);
      cls.rule_fallback = true;
    }
    events.push_back({t, cls});

    if (auto injection = severity_to_dose_effect(cls.severity, v, verdict.slope, cfg_.mode, cfg_.dose)) {
      events.push_back({t, *injection});
    } else {
      events.push_back({t, Notification{tier_for_severity(cls.severity), cls.severity}});
    }
    return events;
  }

  struct RunSummary {
    std::int64_t readings = 0;
    std::int64_t events = 0;
    std::int64_t emergencies = 0;
    std::int64_t bell_fires = 0;
    std::int64_t snn_classifications = 0;
    std::int64_t fallback_classifications = 0;
    std::int64_t injections = 0;
    std::int64_t notifications = 0;
    std::int64_t noops = 0;
    std::int64_t sync_rounds = 0;
  };

  /// Replays a trace. Telemetry (when enabled and a client is supplied)
  /// enqueues every event and syncs after each bell wake and at end of run;
  /// sync failures leave records queued for the next round.
  RunSummary run(std::span<const TraceReading> trace, CloudClient* client = nullptr,
                 std::ostream* jsonl = nullptr) {
    RunSummary sum;
    for (const auto& reading : trace) {
      auto events = on_reading(reading);
      ++sum.readings;
      bool fired = false;
      for (const auto& ev : events) {
        ++sum.events;
        if (std::holds_alternative<EmergencyAlert>(ev.data)) ++sum.emergencies;
        if (std::holds_alternative<BellWake>(ev.data)) {
          ++sum.bell_fires;
          fired = true;
        }
        if (const auto* c = std::get_if<Classified>(&ev.data)) {
          if (c->rule_fallback) ++sum.fallback_classifications;
          else ++sum.snn_classifications;
        }
        if (std::holds_alternative<Injection>(ev.data)) ++sum.injections;
        if (std::holds_alternative<Notification>(ev.data)) ++sum.notifications;
        if (std::holds_alternative<NoOp>(ev.data)) ++sum.noops;
        if (jsonl) *jsonl << ev.to_json().dump() << '\n';
        if (cfg_.telemetry_enabled && client) queue_.enqueue(ev.to_json().dump());
      }
      if (fired && cfg_.telemetry_enabled && client) {
        sync(queue_, *client);
        ++sum.sync_rounds;
      }
    }
    if (cfg_.telemetry_enabled && client && !queue_.empty()) {
      sync(queue_, *client);
      ++sum.sync_rounds;
    }
    return sum;
  }

  const VoltageBuffer& buffer() const { return buf_; }
  const ThresholdBell& bell() const { return bell_; }
  SyncQueue& queue() { return queue_; }
  const PipelineConfig& config() const { return cfg_; }

 private:
  PipelineConfig cfg_;
  SpikingNet net_;
  VoltageBuffer buf_;
  ThresholdBell bell_;
  std::deque<TraceReading> recent_;
  SyncQueue queue_;
  std::int64_t reading_index_ = 0;
};

}  // namespace pdds

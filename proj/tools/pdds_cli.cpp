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

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "pdds/baselines.hpp"
#include "pdds/dataset.hpp"
#include "pdds/pipeline.hpp"
#include "pdds/scenarios.hpp"
#include "pdds/snn.hpp"
#include "pdds/training.hpp"

namespace fs = std::filesystem;

namespace {

constexpr std::array<double, 3> kSplitFractions = {0.90, 0.055, 0.045};
constexpr std::uint64_t kSplitSeed = 1234;

pdds::GoldSplit load_split(const std::string& gold_path) {
  auto records = pdds::read_gold_csv(gold_path);
  return pdds::split_by_patient(records, kSplitFractions, kSplitSeed);
}

int patient_id_from_name(const fs::path& p, int fallback) {
  std::string digits;
  for (char ch : p.stem().string()) {
    if (ch >= '0' && ch <= '9') digits += ch;
  }
  return digits.empty() ? fallback : std::stoi(digits);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-driven glucose severity pipeline"};
  app.require_subcommand(1);

  // --- run ---------------------------------------------------------------
  auto* run_cmd = app.add_subcommand("run", "Replay a CGM trace through the pipeline");
  std::string run_trace, run_mode = "diabetic", run_weights, run_log;
  bool run_telemetry = false;
  run_cmd->add_option("--trace", run_trace, "CGM trace CSV")->required();
  run_cmd->add_option("--mode", run_mode, "diabetic|prediabetic");
  run_cmd->add_option("--weights", run_weights, "trained weight file")->required();
  run_cmd->add_option("--log", run_log, "JSON-lines event log output");
  run_cmd->add_flag("--telemetry", run_telemetry, "enable the simulated cloud sink");

  // --- train --------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "Train the spiking classifier on a Gold file");
  std::string train_gold, train_out, train_config, train_history;
  train_cmd->add_option("--gold", train_gold, "Gold CSV")->required();
  train_cmd->add_option("--out", train_out, "output weight file")->required();
  train_cmd->add_option("--config", train_config, "training config JSON");
  train_cmd->add_option("--history", train_history, "training history CSV (default <out>.history.csv)");

  // --- ingest ---------------------------------------------------------------
  auto* ingest_cmd = app.add_subcommand("ingest", "Build a Gold CSV from trace files");
  std::string ingest_dir, ingest_out;
  ingest_cmd->add_option("--traces", ingest_dir, "directory of trace CSVs")->required();
  ingest_cmd->add_option("--out", ingest_out, "output Gold CSV")->required();

  // --- synth ---------------------------------------------------------------
  auto* synth_cmd = app.add_subcommand("synth", "Generate synthetic annotated CGM traces");
  std::string synth_config, synth_out;
  synth_cmd->add_option("--config", synth_config, "generator config JSON");
  synth_cmd->add_option("--out", synth_out, "output directory")->required();

  // --- eval ----------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate trained weights on the Gold test split");
  std::string eval_gold, eval_weights;
  int eval_repeats = 1;
  eval_cmd->add_option("--gold", eval_gold, "Gold CSV")->required();
  eval_cmd->add_option("--weights", eval_weights, "weight file")->required();
  eval_cmd->add_option("--repeats", eval_repeats, "votes per window");

  // --- scenarios ------------------------------------------------------------
  auto* scen_cmd = app.add_subcommand("scenarios", "Run the 15-scenario validation suite");

  // --- energy ---------------------------------------------------------------
  auto* energy_cmd = app.add_subcommand("energy", "SynOps/MAC energy comparison");
  std::string energy_weights, energy_gold;
  bool paper_calibration = false;
  double e_synop = 0.9e-12, e_mac = 0.9e-12;
  int energy_limit = 2000;
  energy_cmd->add_option("--weights", energy_weights, "weight file")->required();
  energy_cmd->add_option("--gold", energy_gold, "Gold CSV for activity measurement")->required();
  energy_cmd->add_flag("--paper-calibration", paper_calibration,
                       "surface the per-synop energy implied by the reported figure");
  energy_cmd->add_option("--e-synop", e_synop, "joules per synaptic event");
  energy_cmd->add_option("--e-mac", e_mac, "joules per multiply-accumulate");
  energy_cmd->add_option("--limit", energy_limit, "max windows to measure");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      auto trace = pdds::load_trace_csv(run_trace);
      pdds::WeightsMeta meta;
      pdds::SpikingNet net = pdds::load_weights(run_weights, &meta);
      pdds::PipelineConfig cfg;
      cfg.mode = pdds::mode_from_string(run_mode);
      cfg.encoder.timesteps = meta.timesteps;
      cfg.encoder.noise_sigma = meta.noise_sigma;
      cfg.encoder.axonal_delay = meta.axonal_delay;
      cfg.telemetry_enabled = run_telemetry;
      pdds::Pipeline pipeline(cfg, std::move(net));
      pdds::SimulatedCloudClient client;
      std::ofstream log;
      std::ostream* log_stream = nullptr;
      if (!run_log.empty()) {
        log.open(run_log);
        if (!log) throw std::runtime_error("cannot open log file " + run_log);
        log_stream = &log;
      }
      auto sum = pipeline.run(trace, run_telemetry ? &client : nullptr, log_stream);
      nlohmann::json j = {{"readings", sum.readings},
                          {"events", sum.events},
                          {"emergencies", sum.emergencies},
                          {"bell_fires", sum.bell_fires},
                          {"snn_classifications", sum.snn_classifications},
                          {"fallback_classifications", sum.fallback_classifications},
                          {"injections", sum.injections},
                          {"notifications", sum.notifications},
                          {"noops", sum.noops},
                          {"sync_rounds", sum.sync_rounds},
                          {"telemetry_uploads", client.upload_calls}};
      std::cout << j.dump(2) << '\n';
      return 0;
    }

    if (*train_cmd) {
      pdds::TrainConfig cfg;
      if (!train_config.empty()) {
        std::ifstream in(train_config);
        if (!in) throw std::runtime_error("cannot open config " + train_config);
        cfg = pdds::TrainConfig::from_json(nlohmann::json::parse(in));
      }
      auto split = load_split(train_gold);
      std::cerr << "train " << split.train.size() << " / val " << split.val.size() << " / test "
                << split.test.size() << " windows\n";
      pdds::SpikingNet net = pdds::SpikingNet::default_arch(cfg.seed);
      auto fit_result = pdds::fit(net, split.train, split.val, cfg);
      pdds::WeightsMeta meta{cfg.encoder.timesteps, cfg.encoder.noise_sigma,
                             cfg.encoder.axonal_delay, cfg.seed};
      pdds::save_weights(net, train_out, meta);
      std::string history_path = train_history.empty() ? train_out + ".history.csv" : train_history;
      pdds::write_history_csv(history_path, fit_result.history);
      auto report = pdds::evaluate(net, split.test, cfg.encoder, pdds::mix_seed(cfg.seed, 0x7e57),
                                   cfg.eval_repeats);
      nlohmann::json j = {{"best_epoch", fit_result.best_epoch},
                          {"best_val_acc", fit_result.best_val_acc},
                          {"epochs_run", fit_result.history.size()},
                          {"test", report.to_json()}};
      std::cout << j.dump(2) << '\n';
      return 0;
    }

    if (*ingest_cmd) {
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(ingest_dir)) {
        if (entry.path().extension() == ".csv") files.push_back(entry.path());
      }
      std::sort(files.begin(), files.end());
      if (files.empty()) throw std::runtime_error("no .csv trace files in " + ingest_dir);
      std::vector<pdds::GoldRecord> gold;
      int fallback_id = 0;
      for (const auto& f : files) {
        pdds::PatientTrace trace;
        trace.patient_id = patient_id_from_name(f, fallback_id++);
        trace.readings = pdds::load_trace_csv(f.string());
        auto recs = pdds::build_gold(trace, "external");
        gold.insert(gold.end(), recs.begin(), recs.end());
      }
      pdds::write_gold_csv(ingest_out, gold);
      std::cerr << "wrote " << gold.size() << " windows from " << files.size() << " traces\n";
      return 0;
    }

    if (*synth_cmd) {
      pdds::SynthConfig cfg;
      if (!synth_config.empty()) {
        std::ifstream in(synth_config);
        if (!in) throw std::runtime_error("cannot open config " + synth_config);
        cfg = pdds::SynthConfig::from_json(nlohmann::json::parse(in));
      }
      fs::create_directories(synth_out);
      auto patients = pdds::synth_generate(cfg);
      for (const auto& p : patients) {
        char name[32];
        std::snprintf(name, sizeof name, "p%03d.csv", p.patient_id);
        pdds::save_trace_csv((fs::path(synth_out) / name).string(), p.readings);
      }
      std::cerr << "wrote " << patients.size() << " traces to " << synth_out << '\n';
      return 0;
    }

    if (*eval_cmd) {
      auto split = load_split(eval_gold);
      pdds::WeightsMeta meta;
      pdds::SpikingNet net = pdds::load_weights(eval_weights, &meta);
      pdds::EncoderConfig enc{meta.timesteps, meta.noise_sigma, meta.axonal_delay, 0};
      auto report = pdds::evaluate(net, split.test, enc, pdds::mix_seed(meta.seed, 0x7e57), eval_repeats);
      std::cout << report.to_json().dump(2) << '\n';
      return 0;
    }

    if (*scen_cmd) {
      auto results = pdds::run_scenarios();
      std::cout << pdds::scenario_table(results);
      bool ok = pdds::all_pass(results);
      std::cout << (ok ? "15/15 PASS\n" : "FAILURES PRESENT\n");
      return ok ? 0 : 1;
    }

    if (*energy_cmd) {
      auto split = load_split(energy_gold);
      pdds::WeightsMeta meta;
      pdds::SpikingNet net = pdds::load_weights(energy_weights, &meta);
      pdds::EncoderConfig enc{meta.timesteps, meta.noise_sigma, meta.axonal_delay, 0};
      const auto& windows = split.test.empty() ? split.train : split.test;
      std::size_t n = std::min<std::size_t>(windows.size(), energy_limit);
      double synop_sum = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        pdds::Rng rng(pdds::mix_seed(0xE7E26, k));
        auto x = pdds::poisson_encode(windows[k].features.values(), enc, rng);
        auto fwd = pdds::forward(net, x);
        synop_sum += static_cast<double>(pdds::count_synops(net, fwd));
      }
      double mean_synops = n > 0 ? synop_sum / static_cast<double>(n) : 0.0;
      pdds::EnergyModel model;
      model.e_synop_joules = e_synop;
      model.e_mac_joules = e_mac;
      auto report = pdds::energy_report(mean_synops, pdds::synops_upper_bound(net, enc.timesteps),
                                        pdds::count_macs_mlp(net.inputs(), net.hidden1(),
                                                             net.hidden2(), net.outputs()),
                                        model, paper_calibration);
      std::cout << report.to_table_text() << '\n' << report.to_json().dump(2) << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

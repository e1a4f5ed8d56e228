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
#include <set>

#include "pdds/baselines.hpp"
#include "pdds/dataset.hpp"
#include "pdds/rng.hpp"
#include "pdds/snn.hpp"

using namespace pdds;
using Catch::Approx;

namespace {

Window line_window(double last, double slope, bool hypo = false) {
  Window w;
  for (int i = 0; i < kWindowReadings; ++i) {
    w.glucose_mgdl[i] = last + slope * (5.0 * i - 45.0);
    w.t_min[i] = 5.0 * i;
  }
  w.hypo_event = hypo;
  return w;
}

std::vector<GoldRecord> separable_toy(int n_per_class, std::uint64_t seed) {
  std::vector<GoldRecord> out;
  Rng rng(seed);
  const std::array<std::array<double, 10>, 3> prototypes = {{
      {0.9, 0.1, 0.1, 0.1, 0.1, 0.9, 0.1, 0.1, 0.1, 0.1},
      {0.1, 0.9, 0.1, 0.9, 0.1, 0.1, 0.9, 0.1, 0.1, 0.1},
      {0.1, 0.1, 0.9, 0.1, 0.9, 0.1, 0.1, 0.9, 0.1, 0.9},
  }};
  for (int c = 0; c < 3; ++c) {
    for (int k = 0; k < n_per_class; ++k) {
      GoldRecord r;
      r.label = c;
      for (int i = 0; i < 10; ++i) {
        r.features.v[i] = std::clamp(prototypes[c][i] + rng.uniform(-0.05, 0.05), 0.0, 1.0);
      }
      r.window_id = "p0_w" + std::to_string(out.size());
      out.push_back(r);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("rule-based severity from the ADA thresholds") {
  CHECK(rule_assess(260.0, 0.0) == kHigh);
  CHECK(rule_assess(190.0, 0.3) == kMedium);
  CHECK(rule_assess(100.0, 0.0) == kLow);
  CHECK(rule_assess(53.0, 0.0) == kHigh);
  CHECK(rule_assess(60.0, 0.0) == kMedium);
  CHECK(rule_assess(100.0, -3.5) == kHigh);
  CHECK(rule_assess(100.0, 2.0) == kMedium);
  CHECK_THROWS_AS(rule_assess(std::nan(""), 0.0), std::invalid_argument);
}

TEST_CASE("rule agrees with the labeller on unannotated windows") {
  Rng rng(1001);
  for (int trial = 0; trial < 5000; ++trial) {
    double last = rng.uniform(40.0, 300.0);
    double slope = rng.uniform(-4.0, 4.0);
    Window w = line_window(last, slope, false);
    CHECK(rule_assess(last, window_slope_mgdl_per_min(w)) == ada_label(w));
  }
}

TEST_CASE("rule is structurally blind to annotation overrides") {
  // Post-hypo rebound pattern: benign latest reading, annotated window.
  Window w = line_window(150.0, 1.0, true);
  CHECK(ada_label(w) == kHigh);
  CHECK(rule_assess(150.0, window_slope_mgdl_per_min(w)) == kLow);
}

TEST_CASE("mlp forward on a hand-computed toy") {
  MlpNet net = MlpNet::random(2, 2, 2, 3, 1);
  net.w1 << 1.0, -1.0, 0.5, 0.25;
  net.b1 << 0.1, -0.2;
  net.w2 << 1.0, 2.0, -1.0, 0.5;
  net.b2 << 0.0, 0.3;
  net.w3 << 1.0, 0.0, 0.0, 1.0, 0.5, -0.5;
  net.b3 << 0.0, 0.1, 0.2;

  std::vector<double> x = {0.6, 0.2};
  // h1 = relu([1*0.6 - 1*0.2 + 0.1, 0.5*0.6 + 0.25*0.2 - 0.2]) = [0.5, 0.15]
  // h2 = relu([0.5 + 2*0.15, -0.5 + 0.5*0.15 + 0.3]) = [0.8, 0]
  // scores = [0.8, 0.1, 0.6]
  auto scores = mlp_forward(net, x);
  CHECK(scores(0) == Approx(0.8).margin(1e-12));
  CHECK(scores(1) == Approx(0.1).margin(1e-12));
  CHECK(scores(2) == Approx(0.6).margin(1e-12));
  CHECK(mlp_classify(net, x) == 0);

  SECTION("zero parameters give zero scores") {
    net.w1.setZero(); net.w2.setZero(); net.w3.setZero();
    net.b1.setZero(); net.b2.setZero(); net.b3.setZero();
    auto z = mlp_forward(net, x);
    CHECK(z.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("mlp is deterministic while the spiking path is not") {
  MlpNet mlp = MlpNet::default_arch(3);
  std::vector<double> f = {0.3, 0.4, 0.2, 0.5, 0.1, 0.5, 0.3, 0.2, 0.0, 0.1};
  auto s1 = mlp_forward(mlp, f);
  auto s2 = mlp_forward(mlp, f);
  CHECK(s1 == s2);

  SpikingNet snn = SpikingNet::default_arch(3);
  snn.w1 *= 3.0;  // push the random net into its firing regime
  snn.w2 *= 3.0;
  snn.w3 *= 3.0;
  std::set<std::vector<std::int64_t>> outputs;
  for (int seed = 0; seed < 40; ++seed) {
    EncoderConfig enc;
    enc.seed = seed;
    outputs.insert(forward(snn, poisson_encode(f, enc)).counts);
  }
  CHECK(outputs.size() >= 2);
}

TEST_CASE("parameter parity with the spiking network") {
  MlpNet mlp = MlpNet::default_arch(0);
  SpikingNet snn = SpikingNet::default_arch(0);
  CHECK(mlp.param_count() == 9859);
  CHECK(mlp.param_count() == snn.param_count());
}

TEST_CASE("mlp training separates a toy problem") {
  auto train = separable_toy(100, 5);
  auto test = separable_toy(40, 6);
  MlpNet net = MlpNet::random(10, 16, 8, 3, 2);
  MlpTrainConfig cfg;
  cfg.epochs = 40;
  cfg.batch_size = 50;
  auto report = mlp_train(net, train, test, cfg);
  CHECK(report.accuracy >= 0.99);
}

TEST_CASE("MAC counting") {
  CHECK(count_macs_mlp(10, 128, 64, 3) == 9664);
  CHECK(count_macs_mlp(0, 0, 0, 0) == 0);
  SpikingNet net = SpikingNet::default_arch(0);
  CHECK(synops_upper_bound(net, 50) == 50 * count_macs_mlp(10, 128, 64, 3));
  CHECK(synops_upper_bound(net, 50) == 483200);
}

TEST_CASE("energy report") {
  EnergyModel model;
  SECTION("reference ratio reproduces the reported factor") {
    auto r = energy_report(1000.0, 483200, 9664, model, true);
    CHECK(r.reference_lstm_over_snn == Approx(122.9e-9 / 1551e-15).margin(1.0));
    CHECK(r.reference_lstm_over_snn == Approx(79252.0).epsilon(0.001));
    CHECK(r.implied_e_synop_joules == Approx(1551e-15 / 1000.0).epsilon(1e-9));
  }
  SECTION("zero spikes cost zero energy") {
    auto r = energy_report(0.0, 483200, 9664, model);
    CHECK(r.e_snn_joules == 0.0);
    CHECK(r.sparsity == 0.0);
  }
  SECTION("ratios are invariant under a common per-op rescale") {
    auto a = energy_report(20000.0, 483200, 9664, model);
    EnergyModel scaled = model;
    scaled.e_synop_joules *= 10.0;
    scaled.e_mac_joules *= 10.0;
    auto b = energy_report(20000.0, 483200, 9664, scaled);
    CHECK(a.snn_vs_mlp_ratio == Approx(b.snn_vs_mlp_ratio).epsilon(1e-12));
  }
  SECTION("with equal per-op cost the ratio reduces to sparsity times T") {
    // E_snn / E_mlp = synops / macs = (sparsity * T * macs) / macs.
    const int T = 50;
    const double sparsity = 0.03;
    double synops = sparsity * T * 9664;
    auto r = energy_report(synops, T * 9664, 9664, model);
    CHECK(r.snn_vs_mlp_ratio == Approx(sparsity * T).epsilon(1e-9));
  }
  SECTION("measured activity sits strictly inside the bound when anything is silent") {
    SpikingNet net = SpikingNet::default_arch(9);
    EncoderConfig enc;
    enc.seed = 17;
    std::vector<double> f = {0.2, 0.3, 0.25, 0.35, 0.05, 0.5, 0.04, 0.1, 0.0, 0.0};
    auto fwd = forward(net, poisson_encode(f, enc));
    auto synops = count_synops(net, fwd);
    CHECK(synops > 0);
    CHECK(synops < synops_upper_bound(net, enc.timesteps));
    auto r = energy_report(static_cast<double>(synops), synops_upper_bound(net, enc.timesteps),
                           9664, model);
    CHECK(r.sparsity > 0.0);
    CHECK(r.sparsity < 1.0);
  }
}

TEST_CASE("energy report table mentions the reference rows") {
  EnergyModel model;
  auto r = energy_report(15000.0, 483200, 9664, model, true);
  std::string table = r.to_table_text();
  CHECK(table.find("Bi-LSTM") != std::string::npos);
  CHECK(table.find("paper-reported") != std::string::npos);
  CHECK(table.find("measured") != std::string::npos);
  CHECK(r.to_json().contains("paper_reported"));
}

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

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdds/dataset.hpp"
#include "pdds/rng.hpp"
#include "pdds/training.hpp"

namespace pdds {

// ---------------------------------------------------------------------------
// ADA threshold rule
// ---------------------------------------------------------------------------

/// Memoryless severity from the latest reading and slope only — the same
/// decision table as the rule tiers of ada_label, without the annotation
/// input (the rule has nothing to learn from and no history).
inline int rule_assess(double last_glucose_mgdl, double slope_mgdl_per_min) {
  if (!std::isfinite(last_glucose_mgdl) || !std::isfinite(slope_mgdl_per_min)) {
    throw std::invalid_argument("rule_assess: non-finite input");
  }
  double abs_slope = std::abs(slope_mgdl_per_min);
  if (last_glucose_mgdl < 54.0 || last_glucose_mgdl > 250.0 || abs_slope > 3.0) return kHigh;
  if ((last_glucose_mgdl >= 54.0 && last_glucose_mgdl < 70.0) ||
      (last_glucose_mgdl > 180.0 && last_glucose_mgdl <= 250.0) ||
      (abs_slope >= 2.0 && abs_slope <= 3.0)) {
    return kMedium;
  }
  return kLow;
}

// ---------------------------------------------------------------------------
// Dense baseline, parameter-matched to the spiking net
// ---------------------------------------------------------------------------

struct MlpNet {
  Eigen::MatrixXd w1, w2, w3;
  Eigen::VectorXd b1, b2, b3;

  int inputs() const { return static_cast<int>(w1.cols()); }
  int outputs() const { return static_cast<int>(w3.rows()); }

  std::size_t param_count() const {
    return static_cast<std::size_t>(w1.size() + w2.size() + w3.size() +
                                    b1.size() + b2.size() + b3.size());
  }

  static MlpNet random(int in, int h1, int h2, int out, std::uint64_t seed) {
    MlpNet net;
    Rng rng(mix_seed(seed, 0x317));
    auto fill = [&rng](Eigen::MatrixXd& m, int rows, int cols) {
      double bound = 1.0 / std::sqrt(static_cast<double>(cols));
      m.resize(rows, cols);
      for (int c = 0; c < cols; ++c)
        for (int r = 0; r < rows; ++r) m(r, c) = rng.uniform(-bound, bound);
    };
    auto fill_vec = [&rng](Eigen::VectorXd& v, int rows, int fan_in) {
      double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      v.resize(rows);
      for (int r = 0; r < rows; ++r) v(r) = rng.uniform(-bound, bound);
    };
    fill(net.w1, h1, in);
    fill_vec(net.b1, h1, in);
    fill(net.w2, h2, h1);
    fill_vec(net.b2, h2, h1);
    fill(net.w3, out, h2);
    fill_vec(net.b3, out, h2);
    return net;
  }

  static MlpNet default_arch(std::uint64_t seed) { return random(10, 128, 64, 3, seed); }
};

/// Two rectified hidden layers, linear scores. Deterministic, by contrast
/// with the stochastic spike-encoded classifier.
inline Eigen::VectorXd mlp_forward(const MlpNet& net, std::span<const double> features) {
  if (static_cast<int>(features.size()) != net.inputs()) {
    throw std::invalid_argument("mlp_forward: input size mismatch");
  }
  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(features.data(), features.size());
  Eigen::VectorXd h1 = ((net.w1 * x + net.b1).array().max(0.0)).matrix();
  Eigen::VectorXd h2 = ((net.w2 * h1 + net.b2).array().max(0.0)).matrix();
  return net.w3 * h2 + net.b3;
}

inline int mlp_classify(const MlpNet& net, std::span<const double> features) {
  Eigen::VectorXd scores = mlp_forward(net, features);
  int best = 0;
  for (int c = 1; c < scores.size(); ++c) {
    if (scores(c) >= scores(best)) best = c;
  }
  return best;
}

struct MlpTrainConfig {
  int epochs = 60;
  double lr_init = 0.05;
  double momentum = 0.9;
  int batch_size = 256;
  std::uint64_t seed = 7;
};

/// Plain momentum SGD with the same class-weighted cross-entropy and cosine
/// schedule as the spiking trainer. Returns the evaluation report on `test`.
inline EvalReport mlp_train(MlpNet& net, std::span<const GoldRecord> train,
                            std::span<const GoldRecord> test, const MlpTrainConfig& cfg) {
  if (train.empty()) throw std::invalid_argument("mlp_train: empty dataset");
  std::array<std::int64_t, 3> support{};
  for (const auto& r : train) ++support[r.label];
  std::array<double, 3> weights = class_weights(support);

  const int in = net.inputs(), out = net.outputs();
  Eigen::MatrixXd X(in, train.size());
  std::vector<int> y(train.size());
  for (std::size_t k = 0; k < train.size(); ++k) {
    X.col(k) = Eigen::Map<const Eigen::VectorXd>(train[k].features.v.data(), in);
    y[k] = train[k].label;
  }

  MlpNet vel;  // momentum buffers, zero-initialised to the same shapes
  vel.w1 = Eigen::MatrixXd::Zero(net.w1.rows(), net.w1.cols());
  vel.w2 = Eigen::MatrixXd::Zero(net.w2.rows(), net.w2.cols());
  vel.w3 = Eigen::MatrixXd::Zero(net.w3.rows(), net.w3.cols());
  vel.b1 = Eigen::VectorXd::Zero(net.b1.size());
  vel.b2 = Eigen::VectorXd::Zero(net.b2.size());
  vel.b3 = Eigen::VectorXd::Zero(net.b3.size());

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.seed, 0xA100 + static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::size_t j = shuffle_rng.below(i);
      std::swap(order[i - 1], order[j]);
    }
    double lr = cosine_lr(epoch, cfg.epochs, cfg.lr_init);

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      int B = static_cast<int>(stop - start);
      Eigen::MatrixXd xb(in, B);
      std::vector<int> yb(B);
      double wsum = 0.0;
      for (int k = 0; k < B; ++k) {
        xb.col(k) = X.col(order[start + k]);
        yb[k] = y[order[start + k]];
        wsum += weights[yb[k]];
      }
      Eigen::MatrixXd a1 = net.w1 * xb;
      a1.colwise() += net.b1;
      Eigen::MatrixXd h1 = a1.array().max(0.0).matrix();
      Eigen::MatrixXd a2 = net.w2 * h1;
      a2.colwise() += net.b2;
      Eigen::MatrixXd h2 = a2.array().max(0.0).matrix();
      Eigen::MatrixXd scores = net.w3 * h2;
      scores.colwise() += net.b3;

      Eigen::MatrixXd dscores(out, B);
      for (int k = 0; k < B; ++k) {
        double m = scores.col(k).maxCoeff();
        Eigen::VectorXd p = (scores.col(k).array() - m).exp();
        p /= p.sum();
        double w = weights[yb[k]];
        dscores.col(k) = (w / wsum) * p;
        dscores(yb[k], k) -= w / wsum;
      }

      Eigen::MatrixXd gw3 = dscores * h2.transpose();
      Eigen::VectorXd gb3 = dscores.rowwise().sum();
      Eigen::MatrixXd dh2 = net.w3.transpose() * dscores;
      dh2 = (dh2.array() * (a2.array() > 0.0).cast<double>()).matrix();
      Eigen::MatrixXd gw2 = dh2 * h1.transpose();
      Eigen::VectorXd gb2 = dh2.rowwise().sum();
      Eigen::MatrixXd dh1 = net.w2.transpose() * dh2;
      dh1 = (dh1.array() * (a1.array() > 0.0).cast<double>()).matrix();
      Eigen::MatrixXd gw1 = dh1 * xb.transpose();
      Eigen::VectorXd gb1 = dh1.rowwise().sum();

      auto sgd = [lr, &cfg](auto& param, auto& v, const auto& g) {
        v = cfg.momentum * v - lr * g;
        param += v;
      };
      sgd(net.w1, vel.w1, gw1);
      sgd(net.b1, vel.b1, gb1);
      sgd(net.w2, vel.w2, gw2);
      sgd(net.b2, vel.b2, gb2);
      sgd(net.w3, vel.w3, gw3);
      sgd(net.b3, vel.b3, gb3);
    }
  }

  std::vector<int> truth, pred;
  truth.reserve(test.size());
  pred.reserve(test.size());
  for (const auto& rec : test) {
    truth.push_back(rec.label);
    pred.push_back(mlp_classify(net, rec.features.values()));
  }
  return EvalReport::from_predictions(truth, pred);
}

// ---------------------------------------------------------------------------
// Energy accounting
// ---------------------------------------------------------------------------

/// MACs per dense inference: sum of fan-in x fan-out over the layers.
inline std::int64_t count_macs_mlp(int in, int h1, int h2, int out) {
  return static_cast<std::int64_t>(in) * h1 + static_cast<std::int64_t>(h1) * h2 +
         static_cast<std::int64_t>(h2) * out;
}

// Reference constants reported for the recurrent baseline; that model is not
// trained here, its published numbers only give the report context.
inline constexpr std::int64_t kLstmReferenceParams = 138627;
inline constexpr double kLstmReferenceAccuracy = 0.9906;
inline constexpr double kMlpReferenceAccuracy = 0.9900;

struct EnergyModel {
  double e_synop_joules = 0.9e-12;  // user-tunable; no published constant is assumed
  double e_mac_joules = 0.9e-12;    // 8.7 nJ / 9664 MACs, back-solved from the reference row
  // Reported per-inference energies, kept verbatim for context.
  double reference_snn_joules = 1551e-15;
  double reference_lstm_joules = 122.9e-9;
  double reference_mlp_joules = 8.7e-9;
};

struct EnergyReport {
  double mean_synops = 0.0;
  std::int64_t synops_worst_case = 0;
  double sparsity = 0.0;  // mean_synops / worst case
  std::int64_t macs_mlp = 0;
  double e_snn_joules = 0.0;
  double e_mlp_joules = 0.0;
  double snn_vs_mlp_ratio = 0.0;  // E_snn / E_mlp
  double reference_lstm_over_snn = 0.0;
  double reference_mlp_over_snn = 0.0;
  bool paper_calibration = false;
  double implied_e_synop_joules = 0.0;  // reference_snn / mean_synops, calibration mode only

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["measured"] = {{"mean_synops", mean_synops},
                     {"synops_worst_case", synops_worst_case},
                     {"sparsity", sparsity},
                     {"macs_mlp", macs_mlp},
                     {"e_snn_joules", e_snn_joules},
                     {"e_mlp_joules", e_mlp_joules},
                     {"snn_vs_mlp_ratio", snn_vs_mlp_ratio}};
    j["paper_reported"] = {{"snn_joules", 1551e-15},
                           {"lstm_joules", 122.9e-9},
                           {"mlp_joules", 8.7e-9},
                           {"lstm_over_snn", reference_lstm_over_snn},
                           {"mlp_over_snn", reference_mlp_over_snn},
                           {"lstm_params", kLstmReferenceParams},
                           {"lstm_accuracy", kLstmReferenceAccuracy},
                           {"mlp_accuracy", kMlpReferenceAccuracy}};
    j["paper_calibration"] = paper_calibration;
    if (paper_calibration) j["implied_e_synop_joules"] = implied_e_synop_joules;
    return j;
  }

  std::string to_table_text() const {
    std::ostringstream os;
    os << std::left;
    os << "Model      Energy/inf            Ops/inf                 Source\n";
    os << "---------  --------------------  ----------------------  --------------\n";
    auto fmt_e = [](double joules) {
      std::ostringstream s;
      if (joules < 1e-12) s << std::fixed << std::setprecision(1) << joules * 1e15 << " fJ";
      else if (joules < 1e-9) s << std::fixed << std::setprecision(2) << joules * 1e12 << " pJ";
      else if (joules < 1e-6) s << std::fixed << std::setprecision(2) << joules * 1e9 << " nJ";
      else s << std::scientific << std::setprecision(2) << joules << " J";
      return s.str();
    };
    os << std::setw(11) << "SNN" << std::setw(22) << fmt_e(e_snn_joules)
       << std::setw(24) << (std::to_string(static_cast<std::int64_t>(mean_synops)) + " SynOps (measured)")
       << "measured\n";
    os << std::setw(11) << "MLP" << std::setw(22) << fmt_e(e_mlp_joules)
       << std::setw(24) << (std::to_string(macs_mlp) + " MACs") << "measured\n";
    os << std::setw(11) << "SNN" << std::setw(22) << "1551.0 fJ" << std::setw(24) << "-"
       << "paper-reported\n";
    os << std::setw(11) << "Bi-LSTM" << std::setw(22) << "122.90 nJ"
       << std::setw(24) << (std::to_string(kLstmReferenceParams) + " params") << "paper-reported\n";
    os << std::setw(11) << "MLP" << std::setw(22) << "8.70 nJ" << std::setw(24) << "-"
       << "paper-reported\n";
    os << '\n';
    os << "spike sparsity: " << std::fixed << std::setprecision(4) << sparsity
       << " of worst-case " << synops_worst_case << " SynOps\n";
    os << "reference LSTM/SNN energy ratio: " << std::setprecision(0) << reference_lstm_over_snn << "x\n";
    if (paper_calibration) {
      os << "implied e_synop from reported 1551 fJ at measured activity: "
         << std::scientific << std::setprecision(3) << implied_e_synop_joules << " J\n";
    }
    return os.str();
  }
};

/// Builds the energy comparison. Measured rows use the supplied per-op
/// constants; reported reference energies and their ratios are always echoed,
/// clearly labelled. In calibration mode the per-synop energy implied by the
/// reported figure is surfaced rather than asserted.
inline EnergyReport energy_report(double mean_synops, std::int64_t synops_worst_case,
                                  std::int64_t macs_mlp, const EnergyModel& model,
                                  bool paper_calibration = false) {
  if (mean_synops < 0.0 || synops_worst_case <= 0) {
    throw std::invalid_argument("energy_report: bad synop counts");
  }
  EnergyReport r;
  r.mean_synops = mean_synops;
  r.synops_worst_case = synops_worst_case;
  r.sparsity = mean_synops / static_cast<double>(synops_worst_case);
  r.macs_mlp = macs_mlp;
  r.e_snn_joules = mean_synops * model.e_synop_joules;
  r.e_mlp_joules = static_cast<double>(macs_mlp) * model.e_mac_joules;
  r.snn_vs_mlp_ratio = r.e_mlp_joules > 0.0 ? r.e_snn_joules / r.e_mlp_joules : 0.0;
  r.reference_lstm_over_snn = model.reference_lstm_joules / model.reference_snn_joules;
  r.reference_mlp_over_snn = model.reference_mlp_joules / model.reference_snn_joules;
  r.paper_calibration = paper_calibration;
  if (paper_calibration && mean_synops > 0.0) {
    r.implied_e_synop_joules = model.reference_snn_joules / mean_synops;
  }
  return r;
}

}  // namespace pdds

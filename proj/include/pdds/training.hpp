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
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdds/dataset.hpp"
#include "pdds/rng.hpp"
#include "pdds/snn.hpp"

namespace pdds {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct TrainConfig {
  int epochs_max = 200;
  int patience = 15;
  double lr_init = 5e-4;
  double clip_norm = 1.0;
  double rho = 0.9;             // RMaxProp decay
  double balance_lambda = 1e-4;
  double trace_decay = 0.9;
  int batch_size = 256;
  std::uint64_t seed = 0;
  EncoderConfig encoder{};      // encoder.seed is ignored; epoch seeds derive from `seed`
  int eval_repeats = 1;
  double surrogate_slope = 25.0;

  void validate() const {
    if (epochs_max <= 0 || patience <= 0 || batch_size <= 0 || eval_repeats <= 0) {
      throw std::invalid_argument("TrainConfig: counts must be positive");
    }
    if (!(lr_init > 0.0) || !(clip_norm > 0.0) || !(rho > 0.0) || balance_lambda < 0.0 ||
        !(trace_decay > 0.0) || !(surrogate_slope > 0.0)) {
      throw std::invalid_argument("TrainConfig: rates must be positive");
    }
    if (patience >= epochs_max) throw std::invalid_argument("TrainConfig: patience must be < epochs_max");
    encoder.validate();
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.epochs_max = j.value("epochs_max", c.epochs_max);
    c.patience = j.value("patience", c.patience);
    c.lr_init = j.value("lr_init", c.lr_init);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.rho = j.value("rho", c.rho);
    c.balance_lambda = j.value("balance_lambda", c.balance_lambda);
    c.trace_decay = j.value("trace_decay", c.trace_decay);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.eval_repeats = j.value("eval_repeats", c.eval_repeats);
    c.surrogate_slope = j.value("surrogate_slope", c.surrogate_slope);
    c.encoder.timesteps = j.value("timesteps", c.encoder.timesteps);
    c.encoder.noise_sigma = j.value("noise_sigma", c.encoder.noise_sigma);
    c.encoder.axonal_delay = j.value("axonal_delay", c.encoder.axonal_delay);
    c.validate();
    return c;
  }
};

// ---------------------------------------------------------------------------
// Gradient container and optimizer
// ---------------------------------------------------------------------------

struct NetGrads {
  Eigen::MatrixXd w1, w2, w3;
  Eigen::VectorXd b1, b2, b3;

  static NetGrads zeros_like(const SpikingNet& net) {
    NetGrads g;
    g.w1 = Eigen::MatrixXd::Zero(net.w1.rows(), net.w1.cols());
    g.w2 = Eigen::MatrixXd::Zero(net.w2.rows(), net.w2.cols());
    g.w3 = Eigen::MatrixXd::Zero(net.w3.rows(), net.w3.cols());
    g.b1 = Eigen::VectorXd::Zero(net.b1.size());
    g.b2 = Eigen::VectorXd::Zero(net.b2.size());
    g.b3 = Eigen::VectorXd::Zero(net.b3.size());
    return g;
  }

  void set_zero() {
    w1.setZero(); w2.setZero(); w3.setZero();
    b1.setZero(); b2.setZero(); b3.setZero();
  }

  double squared_norm() const {
    return w1.squaredNorm() + w2.squaredNorm() + w3.squaredNorm() +
           b1.squaredNorm() + b2.squaredNorm() + b3.squaredNorm();
  }

  double global_norm() const { return std::sqrt(squared_norm()); }

  void scale(double s) {
    w1 *= s; w2 *= s; w3 *= s;
    b1 *= s; b2 *= s; b3 *= s;
  }

  bool all_finite() const {
    return w1.allFinite() && w2.allFinite() && w3.allFinite() &&
           b1.allFinite() && b2.allFinite() && b3.allFinite();
  }
};

/// Clips the global L2 norm across every parameter block. Returns the
/// pre-clip norm.
inline double clip_global_norm(NetGrads& g, double max_norm) {
  double norm = g.global_norm();
  if (norm > max_norm && norm > 0.0) g.scale(max_norm / norm);
  return norm;
}

/// Optimizer state: per-parameter running maximum of squared gradients.
/// Unlike a running mean, the maximum stays a stable denominator across the
/// long silent stretches typical of spiking-network gradients.
struct RMaxPropState {
  NetGrads v_max;  // elementwise, non-negative
  std::int64_t skipped_steps = 0;

  static RMaxPropState init(const SpikingNet& net) {
    RMaxPropState s;
    s.v_max = NetGrads::zeros_like(net);
    return s;
  }
};

/// v_max <- max(rho * v_max, g^2); theta <- theta - lr * g / sqrt(v_max + eps).
/// A non-finite gradient skips the whole step and bumps the skip counter.
inline void rmaxprop_step(SpikingNet& net, const NetGrads& g, RMaxPropState& state, double lr,
                          double rho = 0.9, double eps = 1e-8) {
  if (!g.all_finite()) {
    ++state.skipped_steps;
    return;
  }
  auto update = [lr, rho, eps](auto& param, const auto& grad, auto& vmax) {
    vmax = (rho * vmax.array()).max(grad.array().square()).matrix();
    param.array() -= lr * grad.array() / (vmax.array() + eps).sqrt();
  };
  update(net.w1, g.w1, state.v_max.w1);
  update(net.w2, g.w2, state.v_max.w2);
  update(net.w3, g.w3, state.v_max.w3);
  update(net.b1, g.b1, state.v_max.b1);
  update(net.b2, g.b2, state.v_max.b2);
  update(net.b3, g.b3, state.v_max.b3);
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

/// Inverse-frequency class weights w_c = N / (3 * N_c).
inline std::array<double, 3> class_weights(const std::array<std::int64_t, 3>& support) {
  std::int64_t total = support[0] + support[1] + support[2];
  std::array<double, 3> w{};
  for (int c = 0; c < 3; ++c) {
    if (support[c] <= 0) throw std::invalid_argument("class_weights: zero-support class");
    w[c] = static_cast<double>(total) / (3.0 * static_cast<double>(support[c]));
  }
  return w;
}

/// Weighted cross-entropy of a softmax over raw class scores (spike counts
/// or relaxed totals).
inline double weighted_cross_entropy(std::span<const double> scores, int label,
                                     std::span<const double> weights) {
  if (scores.size() != weights.size()) throw std::invalid_argument("loss: score/weight size mismatch");
  if (label < 0 || label >= static_cast<int>(scores.size())) throw std::invalid_argument("loss: bad label");
  double m = *std::max_element(scores.begin(), scores.end());
  double lse = 0.0;
  for (double s : scores) lse += std::exp(s - m);
  lse = m + std::log(lse);
  return weights[label] * (lse - scores[label]);
}

// ---------------------------------------------------------------------------
// Regularisers
// ---------------------------------------------------------------------------

/// Homeostatic synaptic balancing: for each hidden neuron, penalise the
/// squared difference between incoming and outgoing squared weight mass.
/// Returns lambda * penalty and, when grad is given, accumulates the exact
/// gradient contribution into it.
inline double balancing_penalty(const SpikingNet& net, double lambda, NetGrads* grad = nullptr) {
  Eigen::VectorXd in1 = net.w1.rowwise().squaredNorm();
  Eigen::VectorXd out1 = net.w2.colwise().squaredNorm().transpose();
  Eigen::VectorXd d1 = in1 - out1;
  Eigen::VectorXd in2 = net.w2.rowwise().squaredNorm();
  Eigen::VectorXd out2 = net.w3.colwise().squaredNorm().transpose();
  Eigen::VectorXd d2 = in2 - out2;
  double penalty = d1.squaredNorm() + d2.squaredNorm();
  if (grad) {
    double c = 4.0 * lambda;
    grad->w1 += c * d1.asDiagonal() * net.w1;
    grad->w2 += c * d2.asDiagonal() * net.w2;
    grad->w2 -= c * net.w2 * d1.asDiagonal();
    grad->w3 -= c * net.w3 * d2.asDiagonal();
  }
  return lambda * penalty;
}

/// Three-factor-style credit assignment: scales first-layer gradient columns
/// by a low-pass filtered trace of pre-synaptic activity, normalised to mean
/// one so the expected gradient scale is unchanged. An all-silent batch
/// leaves the gradient untouched.
inline void eligibility_modulate(Eigen::MatrixXd& fc1_grad,
                                 std::span<const SpikeTensor* const> batch,
                                 double trace_decay) {
  if (batch.empty()) return;
  const int n_in = static_cast<int>(fc1_grad.cols());
  const int T = batch[0]->steps();
  std::vector<double> decay(T);
  for (int t = 0; t < T; ++t) decay[t] = std::pow(trace_decay, static_cast<double>(T - t));
  Eigen::VectorXd trace = Eigen::VectorXd::Zero(n_in);
  for (const SpikeTensor* x : batch) {
    if (x->features() != n_in || x->steps() != T) {
      throw std::invalid_argument("eligibility_modulate: tensor shape mismatch");
    }
    for (int i = 0; i < n_in; ++i) {
      for (int t = 0; t < T; ++t) {
        if (x->get(i, t)) trace(i) += decay[t];
      }
    }
  }
  trace /= static_cast<double>(batch.size());
  double mean = trace.mean();
  if (mean <= 1e-12) return;
  trace /= mean;
  for (int i = 0; i < n_in; ++i) fc1_grad.col(i) *= trace(i);
}

inline double cosine_lr(int epoch, int epochs_max, double lr_init) {
  if (epochs_max <= 0 || epoch < 0 || epoch > epochs_max) {
    throw std::invalid_argument("cosine_lr: epoch out of range");
  }
  return lr_init * (1.0 + std::cos(std::numbers::pi * epoch / epochs_max)) / 2.0;
}

// ---------------------------------------------------------------------------
// Batched unrolled forward/backward
// ---------------------------------------------------------------------------

/// kBinary runs the real spiking dynamics with the surrogate derivative in
/// the backward pass only. kRelaxed replaces the spike function by the smooth
/// relaxed_spike everywhere, making the whole graph differentiable; it exists
/// so the backward pass can be finite-difference checked.
enum class SpikeMode { kBinary, kRelaxed };

namespace detail {

struct BatchTapes {
  std::vector<Eigen::MatrixXd> s_in;                    // T x (in x B)
  std::vector<Eigen::MatrixXd> vpre1, s1, vpre2, s2, vpre3, s3;
  Eigen::MatrixXd counts;                               // out x B
};

inline void batch_forward(const SpikingNet& net, std::span<const SpikeTensor* const> xs,
                          SpikeMode mode, double surrogate_slope, BatchTapes& tape) {
  const int B = static_cast<int>(xs.size());
  const int T = xs[0]->steps();
  const int n_in = net.inputs(), h1 = net.hidden1(), h2 = net.hidden2(), out = net.outputs();
  const double theta = net.v_threshold;

  tape.s_in.assign(T, Eigen::MatrixXd::Zero(n_in, B));
  for (int n = 0; n < B; ++n) {
    const SpikeTensor& x = *xs[n];
    if (x.features() != n_in || x.steps() != T) {
      throw std::invalid_argument("batch_forward: tensor shape mismatch");
    }
    for (int i = 0; i < n_in; ++i) {
      for (int t = 0; t < T; ++t) {
        if (x.get(i, t)) tape.s_in[t](i, n) = 1.0;
      }
    }
  }

  tape.vpre1.assign(T, Eigen::MatrixXd());
  tape.s1.assign(T, Eigen::MatrixXd());
  tape.vpre2.assign(T, Eigen::MatrixXd());
  tape.s2.assign(T, Eigen::MatrixXd());
  tape.vpre3.assign(T, Eigen::MatrixXd());
  tape.s3.assign(T, Eigen::MatrixXd());
  tape.counts = Eigen::MatrixXd::Zero(out, B);

  auto spike_of = [mode, surrogate_slope, theta](const Eigen::MatrixXd& vpre) {
    if (mode == SpikeMode::kBinary) {
      return Eigen::MatrixXd((vpre.array() >= theta).cast<double>());
    }
    Eigen::ArrayXXd x = vpre.array() - theta;
    Eigen::ArrayXXd sx = surrogate_slope * x;
    return Eigen::MatrixXd(0.5 + sx / (1.0 + sx.abs()));
  };

  Eigen::MatrixXd v1post = Eigen::MatrixXd::Zero(h1, B);
  Eigen::MatrixXd v2post = Eigen::MatrixXd::Zero(h2, B);
  Eigen::MatrixXd v3post = Eigen::MatrixXd::Zero(out, B);

  for (int t = 0; t < T; ++t) {
    tape.vpre1[t].noalias() = net.w1 * tape.s_in[t];
    tape.vpre1[t].colwise() += net.b1;
    tape.vpre1[t] += net.betas[0] * v1post;
    tape.s1[t] = spike_of(tape.vpre1[t]);
    if (net.reset_mode == ResetMode::kSubtract) {
      v1post = tape.vpre1[t] - theta * tape.s1[t];
    } else {
      v1post = (tape.vpre1[t].array() * (1.0 - tape.s1[t].array())).matrix();
    }

    tape.vpre2[t].noalias() = net.w2 * tape.s1[t];
    tape.vpre2[t].colwise() += net.b2;
    tape.vpre2[t] += net.betas[1] * v2post;
    tape.s2[t] = spike_of(tape.vpre2[t]);
    if (net.reset_mode == ResetMode::kSubtract) {
      v2post = tape.vpre2[t] - theta * tape.s2[t];
    } else {
      v2post = (tape.vpre2[t].array() * (1.0 - tape.s2[t].array())).matrix();
    }

    tape.vpre3[t].noalias() = net.w3 * tape.s2[t];
    tape.vpre3[t].colwise() += net.b3;
    tape.vpre3[t] += net.betas[2] * v3post;
    tape.s3[t] = spike_of(tape.vpre3[t]);
    if (net.reset_mode == ResetMode::kSubtract) {
      v3post = tape.vpre3[t] - theta * tape.s3[t];
    } else {
      v3post = (tape.vpre3[t].array() * (1.0 - tape.s3[t].array())).matrix();
    }
    tape.counts += tape.s3[t];
  }
}

/// Loss over the tape's counts, plus the head gradient dL/dC.
inline double head_loss(const Eigen::MatrixXd& counts, std::span<const int> labels,
                        std::span<const double> class_wts, Eigen::MatrixXd* dLdC) {
  const int out = static_cast<int>(counts.rows());
  const int B = static_cast<int>(counts.cols());
  double weight_sum = 0.0;
  for (int n = 0; n < B; ++n) {
    if (labels[n] < 0 || labels[n] >= out) throw std::invalid_argument("head_loss: bad label");
    weight_sum += class_wts[labels[n]];
  }
  if (dLdC) dLdC->setZero(out, B);
  double loss = 0.0;
  for (int n = 0; n < B; ++n) {
    double m = counts.col(n).maxCoeff();
    Eigen::VectorXd p = (counts.col(n).array() - m).exp();
    double z = p.sum();
    p /= z;
    double w = class_wts[labels[n]];
    loss += w * (std::log(z) + m - counts(labels[n], n));
    if (dLdC) {
      dLdC->col(n) = (w / weight_sum) * p;
      (*dLdC)(labels[n], n) -= w / weight_sum;
    }
  }
  return loss / weight_sum;
}

}  // namespace detail

/// Forward-only batch loss (used by gradient checking).
inline double batch_loss(const SpikingNet& net, std::span<const SpikeTensor* const> xs,
                         std::span<const int> labels, std::span<const double> class_wts,
                         SpikeMode mode, double surrogate_slope = 25.0) {
  if (xs.empty()) throw std::invalid_argument("batch_loss: empty batch");
  detail::BatchTapes tape;
  detail::batch_forward(net, xs, mode, surrogate_slope, tape);
  return detail::head_loss(tape.counts, labels, class_wts, nullptr);
}

/// Full unrolled backpropagation through time over all T steps. The spike
/// derivative is fast_sigmoid_grad in both modes; the reset path is kept in
/// the graph (no detach), which is what makes the relaxed mode exactly
/// finite-difference consistent. Returns the batch loss; gradients for every
/// parameter block are written into `grads`.
inline double batch_gradients(const SpikingNet& net, std::span<const SpikeTensor* const> xs,
                              std::span<const int> labels, std::span<const double> class_wts,
                              SpikeMode mode, NetGrads& grads, double surrogate_slope = 25.0) {
  net.check_shapes();
  if (xs.empty()) throw std::invalid_argument("batch_gradients: empty batch");
  if (xs.size() != labels.size()) throw std::invalid_argument("batch_gradients: label count mismatch");

  detail::BatchTapes tape;
  detail::batch_forward(net, xs, mode, surrogate_slope, tape);

  Eigen::MatrixXd dLdC;
  double loss = detail::head_loss(tape.counts, labels, class_wts, &dLdC);

  const int T = static_cast<int>(tape.s_in.size());
  const int B = static_cast<int>(xs.size());
  const int h1 = net.hidden1(), h2 = net.hidden2(), out = net.outputs();
  const double theta = net.v_threshold;
  const bool subtract = net.reset_mode == ResetMode::kSubtract;

  grads.set_zero();
  Eigen::MatrixXd g1 = Eigen::MatrixXd::Zero(h1, B);
  Eigen::MatrixXd g2 = Eigen::MatrixXd::Zero(h2, B);
  Eigen::MatrixXd g3 = Eigen::MatrixXd::Zero(out, B);

  auto surrogate_of = [surrogate_slope, theta](const Eigen::MatrixXd& vpre) {
    Eigen::ArrayXXd d = 1.0 + (surrogate_slope * (vpre.array() - theta)).abs();
    return Eigen::ArrayXXd(surrogate_slope / (d * d));
  };

  // d v_post / d v_pre with s treated through the surrogate separately:
  //   subtract: v_post = v_pre - theta * s   ->  dpre = g + (ds_ext - theta*g) o sg
  //   to-zero:  v_post = v_pre * (1 - s)     ->  dpre = g o (1-s) + (ds_ext - v_pre o g) o sg
  Eigen::MatrixXd dpre, ds_ext;
  for (int t = T - 1; t >= 0; --t) {
    Eigen::ArrayXXd sg3 = surrogate_of(tape.vpre3[t]);
    if (subtract) {
      dpre = g3 + ((dLdC - theta * g3).array() * sg3).matrix();
    } else {
      dpre = (g3.array() * (1.0 - tape.s3[t].array())).matrix() +
             ((dLdC.array() - tape.vpre3[t].array() * g3.array()) * sg3).matrix();
    }
    grads.w3.noalias() += dpre * tape.s2[t].transpose();
    grads.b3 += dpre.rowwise().sum();
    ds_ext.noalias() = net.w3.transpose() * dpre;
    g3 = net.betas[2] * dpre;

    Eigen::ArrayXXd sg2 = surrogate_of(tape.vpre2[t]);
    if (subtract) {
      dpre = g2 + ((ds_ext - theta * g2).array() * sg2).matrix();
    } else {
      dpre = (g2.array() * (1.0 - tape.s2[t].array())).matrix() +
             ((ds_ext.array() - tape.vpre2[t].array() * g2.array()) * sg2).matrix();
    }
    grads.w2.noalias() += dpre * tape.s1[t].transpose();
    grads.b2 += dpre.rowwise().sum();
    ds_ext.noalias() = net.w2.transpose() * dpre;
    g2 = net.betas[1] * dpre;

    Eigen::ArrayXXd sg1 = surrogate_of(tape.vpre1[t]);
    if (subtract) {
      dpre = g1 + ((ds_ext - theta * g1).array() * sg1).matrix();
    } else {
      dpre = (g1.array() * (1.0 - tape.s1[t].array())).matrix() +
             ((ds_ext.array() - tape.vpre1[t].array() * g1.array()) * sg1).matrix();
    }
    grads.w1.noalias() += dpre * tape.s_in[t].transpose();
    grads.b1 += dpre.rowwise().sum();
    g1 = net.betas[0] * dpre;
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalReport {
  std::array<std::array<std::int64_t, 3>, 3> confusion{};  // [truth][prediction]
  double accuracy = 0.0;
  std::array<double, 3> precision{}, recall{}, f1{};
  double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
  std::int64_t total = 0;

  /// HIGH-class recall is the primary safety metric.
  double high_recall() const { return recall[kHigh]; }

  std::int64_t support(int c) const {
    return confusion[c][0] + confusion[c][1] + confusion[c][2];
  }

  static EvalReport from_predictions(std::span<const int> truth, std::span<const int> pred) {
    if (truth.size() != pred.size()) throw std::invalid_argument("EvalReport: size mismatch");
    EvalReport r;
    std::int64_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth[i] < 0 || truth[i] > 2 || pred[i] < 0 || pred[i] > 2) {
        throw std::invalid_argument("EvalReport: class out of range");
      }
      ++r.confusion[truth[i]][pred[i]];
      if (truth[i] == pred[i]) ++correct;
    }
    r.total = static_cast<std::int64_t>(truth.size());
    r.accuracy = r.total > 0 ? static_cast<double>(correct) / static_cast<double>(r.total) : 0.0;
    for (int c = 0; c < 3; ++c) {
      std::int64_t tp = r.confusion[c][c];
      std::int64_t pred_c = r.confusion[0][c] + r.confusion[1][c] + r.confusion[2][c];
      std::int64_t supp_c = r.support(c);
      r.precision[c] = pred_c > 0 ? static_cast<double>(tp) / static_cast<double>(pred_c) : 0.0;
      r.recall[c] = supp_c > 0 ? static_cast<double>(tp) / static_cast<double>(supp_c) : 0.0;
      double pr = r.precision[c] + r.recall[c];
      r.f1[c] = pr > 0.0 ? 2.0 * r.precision[c] * r.recall[c] / pr : 0.0;
      r.macro_precision += r.precision[c] / 3.0;
      r.macro_recall += r.recall[c] / 3.0;
      r.macro_f1 += r.f1[c] / 3.0;
    }
    return r;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["accuracy"] = accuracy;
    j["total"] = total;
    const char* names[3] = {"LOW", "MEDIUM", "HIGH"};
    for (int c = 0; c < 3; ++c) {
      j["per_class"][names[c]] = {{"precision", precision[c]},
                                  {"recall", recall[c]},
                                  {"f1", f1[c]},
                                  {"support", support(c)}};
    }
    j["macro"] = {{"precision", macro_precision}, {"recall", macro_recall}, {"f1", macro_f1}};
    j["primary_safety_metric"] = {{"name", "high_recall"}, {"value", high_recall()}};
    j["confusion"] = confusion;
    return j;
  }
};

/// Encodes each window with a seed derived from (eval_seed, window index,
/// repeat) and classifies by spike-count argmax; with n_repeats > 1 the
/// per-repeat predictions vote, ties toward the higher class.
inline EvalReport evaluate(const SpikingNet& net, std::span<const GoldRecord> records,
                           const EncoderConfig& enc, std::uint64_t eval_seed, int n_repeats = 1) {
  if (n_repeats < 1) throw std::invalid_argument("evaluate: n_repeats must be >= 1");
  std::vector<int> truth, pred;
  truth.reserve(records.size());
  pred.reserve(records.size());
  for (std::size_t k = 0; k < records.size(); ++k) {
    std::array<int, 3> votes{};
    for (int rep = 0; rep < n_repeats; ++rep) {
      Rng rng(mix_seed(mix_seed(eval_seed, k), static_cast<std::uint64_t>(rep)));
      SpikeTensor x = poisson_encode(records[k].features.values(), enc, rng);
      ForwardResult fwd = forward(net, x);
      ++votes[classify(fwd.counts)];
    }
    int winner = 0;
    for (int c = 1; c < 3; ++c) {
      if (votes[c] >= votes[winner]) winner = c;
    }
    truth.push_back(records[k].label);
    pred.push_back(winner);
  }
  return EvalReport::from_predictions(truth, pred);
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct EpochRow {
  int epoch;
  double lr;
  double train_loss;
  double val_acc;
};

struct FitResult {
  std::vector<EpochRow> history;
  int best_epoch = -1;
  double best_val_acc = 0.0;
  std::int64_t skipped_steps = 0;
};

inline void write_history_csv(const std::string& path, std::span<const EpochRow> history) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_history_csv: cannot open " + path);
  out << "epoch,lr,train_loss,val_acc\n";
  out.precision(12);
  for (const auto& row : history) {
    out << row.epoch << ',' << row.lr << ',' << row.train_loss << ',' << row.val_acc << '\n';
  }
}

/// Surrogate-gradient training through time. Every epoch re-encodes the
/// training features with a fresh seed (stochastic augmentation at zero
/// memory cost), then walks shuffled mini-batches: BPTT gradients,
/// eligibility modulation on fc1, balancing penalty, global-norm clipping,
/// RMaxProp step under cosine-annealed lr. Early-stops on validation
/// accuracy and restores the best epoch's weights.
inline FitResult fit(SpikingNet& net, std::span<const GoldRecord> train,
                     std::span<const GoldRecord> val, const TrainConfig& cfg) {
  cfg.validate();
  net.check_shapes();
  if (train.empty() || val.empty()) throw std::invalid_argument("fit: empty dataset");

  std::array<std::int64_t, 3> support{};
  for (const auto& r : train) ++support[r.label];
  std::array<double, 3> weights = class_weights(support);

  RMaxPropState opt = RMaxPropState::init(net);
  NetGrads grads = NetGrads::zeros_like(net);
  FitResult result;
  SpikingNet best_net = net;
  double best_acc = -1.0;
  int wait = 0;
  const std::uint64_t eval_seed = mix_seed(cfg.seed, 0xEA11);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < cfg.epochs_max; ++epoch) {
    // Per-epoch re-encoding; seeds are per (epoch, window) so the encoding
    // is deterministic regardless of iteration order.
    const std::uint64_t epoch_seed = mix_seed(cfg.seed, 0xE000 + static_cast<std::uint64_t>(epoch));
    std::vector<SpikeTensor> tensors;
    tensors.reserve(train.size());
    for (std::size_t k = 0; k < train.size(); ++k) {
      Rng rng(mix_seed(epoch_seed, k));
      tensors.push_back(poisson_encode(train[k].features.values(), cfg.encoder, rng));
    }

    Rng shuffle_rng(mix_seed(cfg.seed, 0x50FF1E + static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::size_t j = shuffle_rng.below(i);
      std::swap(order[i - 1], order[j]);
    }

    const double lr = cosine_lr(epoch, cfg.epochs_max, cfg.lr_init);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<const SpikeTensor*> xs;
      std::vector<int> labels;
      xs.reserve(stop - start);
      labels.reserve(stop - start);
      for (std::size_t k = start; k < stop; ++k) {
        xs.push_back(&tensors[order[k]]);
        labels.push_back(train[order[k]].label);
      }
      double data_loss = batch_gradients(net, xs, labels, weights, SpikeMode::kBinary, grads,
                                         cfg.surrogate_slope);
      if (std::isnan(data_loss)) {
        throw std::runtime_error("fit: NaN loss at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(batches));
      }
      eligibility_modulate(grads.w1, xs, cfg.trace_decay);
      double penalty = balancing_penalty(net, cfg.balance_lambda, &grads);
      clip_global_norm(grads, cfg.clip_norm);
      rmaxprop_step(net, grads, opt, lr, cfg.rho);
      loss_sum += data_loss + penalty;
      ++batches;
    }

    double val_acc = evaluate(net, val, cfg.encoder, eval_seed, cfg.eval_repeats).accuracy;
    result.history.push_back({epoch, lr, loss_sum / batches, val_acc});

    if (val_acc > best_acc) {
      best_acc = val_acc;
      result.best_epoch = epoch;
      best_net = net;
      wait = 0;
    } else if (++wait >= cfg.patience) {
      break;
    }
  }

  net = best_net;  // restore the best epoch, not the last
  result.best_val_acc = best_acc;
  result.skipped_steps = opt.skipped_steps;
  return result;
}

}  // namespace pdds

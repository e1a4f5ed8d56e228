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
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdds/rng.hpp"

namespace pdds {

// ---------------------------------------------------------------------------
// Poisson rate encoding
// ---------------------------------------------------------------------------

/// Encoder settings. Each feature in [0,1] becomes the Bernoulli firing
/// probability of one spike train of `timesteps` steps; Gaussian jitter with
/// std `noise_sigma` is resampled per (feature, timestep) to break pathological
/// synchrony, and all trains are shifted right by `axonal_delay` steps.
struct EncoderConfig {
  int timesteps = 50;
  double noise_sigma = 0.05;
  int axonal_delay = 2;
  std::uint64_t seed = 0;

  void validate() const {
    if (timesteps < 1) throw std::invalid_argument("EncoderConfig: timesteps must be >= 1");
    if (noise_sigma < 0.0 || noise_sigma > 1.0) throw std::invalid_argument("EncoderConfig: noise_sigma must be in [0,1]");
    if (axonal_delay < 0 || axonal_delay >= timesteps) throw std::invalid_argument("EncoderConfig: axonal_delay must be in [0, timesteps)");
  }
};

/// Binary spike trains, shape (features x timesteps), row-major.
class SpikeTensor {
 public:
  SpikeTensor(int features, int steps)
      : features_(features), steps_(steps), data_(static_cast<std::size_t>(features) * steps, 0) {
    if (features < 1 || steps < 1) throw std::invalid_argument("SpikeTensor: bad shape");
  }

  int features() const { return features_; }
  int steps() const { return steps_; }

  std::uint8_t get(int i, int t) const { return data_[idx(i, t)]; }
  void set(int i, int t, bool on) { data_[idx(i, t)] = on ? 1 : 0; }

  std::int64_t total_spikes() const {
    std::int64_t n = 0;
    for (auto b : data_) n += b;
    return n;
  }

  std::int64_t row_spikes(int i) const {
    std::int64_t n = 0;
    for (int t = 0; t < steps_; ++t) n += get(i, t);
    return n;
  }

  const std::vector<std::uint8_t>& raw() const { return data_; }
  bool operator==(const SpikeTensor& o) const {
    return features_ == o.features_ && steps_ == o.steps_ && data_ == o.data_;
  }

 private:
  std::size_t idx(int i, int t) const {
    return static_cast<std::size_t>(i) * steps_ + t;
  }
  int features_, steps_;
  std::vector<std::uint8_t> data_;
};

/// Stochastic rate encoding: s_i[t] ~ Bernoulli(clip(r_i + N(0, sigma), 0, 1))
/// for t >= axonal_delay; earlier columns stay zero. Deterministic given the
/// rng state, and therefore given (rates, cfg, seed).
inline SpikeTensor poisson_encode(std::span<const double> rates, const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  for (double r : rates) {
    if (!std::isfinite(r) || r < 0.0 || r > 1.0) {
      throw std::invalid_argument("poisson_encode: feature outside [0,1]");
    }
  }
  SpikeTensor out(static_cast<int>(rates.size()), cfg.timesteps);
  for (int i = 0; i < out.features(); ++i) {
    for (int t = cfg.axonal_delay; t < cfg.timesteps; ++t) {
      double p = rates[static_cast<std::size_t>(i)];
      if (cfg.noise_sigma > 0.0) p += cfg.noise_sigma * rng.normal();
      p = std::clamp(p, 0.0, 1.0);
      out.set(i, t, rng.uniform() < p);
    }
  }
  return out;
}

inline SpikeTensor poisson_encode(std::span<const double> rates, const EncoderConfig& cfg) {
  Rng rng(cfg.seed);
  return poisson_encode(rates, cfg, rng);
}

// ---------------------------------------------------------------------------
// LIF dynamics
// ---------------------------------------------------------------------------

enum class ResetMode {
  kSubtract,  // spiking neurons keep v' - threshold
  kToZero,    // spiking neurons reset to 0
};

struct LifState {
  std::vector<double> v;
  explicit LifState(std::size_t n) : v(n, 0.0) {}
};

/// One membrane update: v' = beta * v + input; spike where v' >= threshold.
/// Appends nothing; writes spikes for every neuron into `spikes`.
inline void lif_step(LifState& state, std::span<const double> input_current, double beta,
                     std::vector<std::uint8_t>& spikes, double threshold = 1.0,
                     ResetMode mode = ResetMode::kSubtract) {
  if (input_current.size() != state.v.size()) {
    throw std::invalid_argument("lif_step: dimension mismatch");
  }
  spikes.assign(state.v.size(), 0);
  for (std::size_t j = 0; j < state.v.size(); ++j) {
    double v = beta * state.v[j] + input_current[j];
    if (v >= threshold) {
      spikes[j] = 1;
      state.v[j] = mode == ResetMode::kSubtract ? v - threshold : 0.0;
    } else {
      state.v[j] = v;
    }
  }
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

/// Three dense layers of LIF neurons with per-layer decay. The default
/// architecture is 10 -> 128 -> 64 -> 3 with betas 0.95 / 0.90 / 0.80:
/// the first layer integrates slowly (long memory), the output layer fires
/// fast so per-class counts stay crisp.
struct SpikingNet {
  Eigen::MatrixXd w1, w2, w3;  // h1 x in, h2 x h1, out x h2
  Eigen::VectorXd b1, b2, b3;
  std::array<double, 3> betas{0.95, 0.90, 0.80};
  double v_threshold = 1.0;
  ResetMode reset_mode = ResetMode::kSubtract;

  int inputs() const { return static_cast<int>(w1.cols()); }
  int hidden1() const { return static_cast<int>(w1.rows()); }
  int hidden2() const { return static_cast<int>(w2.rows()); }
  int outputs() const { return static_cast<int>(w3.rows()); }

  std::size_t param_count() const {
    return static_cast<std::size_t>(w1.size() + w2.size() + w3.size() + b1.size() + b2.size() + b3.size());
  }

  void check_shapes() const {
    if (w2.cols() != w1.rows() || w3.cols() != w2.rows() ||
        b1.size() != w1.rows() || b2.size() != w2.rows() || b3.size() != w3.rows()) {
      throw std::invalid_argument("SpikingNet: inconsistent layer shapes");
    }
    if (!(betas[0] > betas[1] && betas[1] > betas[2])) {
      throw std::invalid_argument("SpikingNet: betas must be strictly decreasing");
    }
  }

  /// Uniform init in +-1/sqrt(fan_in), the usual dense-layer scheme.
  static SpikingNet random(int in, int h1, int h2, int out, std::uint64_t seed) {
    SpikingNet net;
    Rng rng(mix_seed(seed, 0x5e7));
    auto fill = [&rng](Eigen::MatrixXd& m, int rows, int cols, int fan_in) {
      double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      m.resize(rows, cols);
      for (int c = 0; c < cols; ++c)
        for (int r = 0; r < rows; ++r) m(r, c) = rng.uniform(-bound, bound);
    };
    auto fill_vec = [&rng](Eigen::VectorXd& v, int rows, int fan_in) {
      double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      v.resize(rows);
      for (int r = 0; r < rows; ++r) v(r) = rng.uniform(-bound, bound);
    };
    fill(net.w1, h1, in, in);
    fill_vec(net.b1, h1, in);
    fill(net.w2, h2, h1, h1);
    fill_vec(net.b2, h2, h1);
    fill(net.w3, out, h2, h2);
    fill_vec(net.b3, out, h2);
    return net;
  }

  static SpikingNet default_arch(std::uint64_t seed) { return random(10, 128, 64, 3, seed); }
};

struct ForwardResult {
  std::vector<std::int64_t> counts;  // per output class, summed over T
  std::int64_t input_spikes = 0;
  std::int64_t layer1_spikes = 0;
  std::int64_t layer2_spikes = 0;
  std::int64_t layer3_spikes = 0;
  // Step-major rasters (index t * layer_size + j), kept for audit recounts.
  std::vector<std::uint8_t> raster1, raster2, raster3;
};

/// Unrolls the network over all timesteps of `x`. States start at zero.
/// Plain scalar loops in ascending index order; this path is the reference
/// inference semantics and stays bit-reproducible.
inline ForwardResult forward(const SpikingNet& net, const SpikeTensor& x) {
  net.check_shapes();
  if (x.features() != net.inputs()) throw std::invalid_argument("forward: input shape mismatch");
  const int T = x.steps();
  const int n_in = net.inputs(), h1 = net.hidden1(), h2 = net.hidden2(), out = net.outputs();

  ForwardResult res;
  res.counts.assign(out, 0);
  res.raster1.reserve(static_cast<std::size_t>(T) * h1);
  res.raster2.reserve(static_cast<std::size_t>(T) * h2);
  res.raster3.reserve(static_cast<std::size_t>(T) * out);

  LifState s1(h1), s2(h2), s3(out);
  std::vector<double> cur1(h1), cur2(h2), cur3(out);
  std::vector<std::uint8_t> spk1, spk2, spk3;

  for (int t = 0; t < T; ++t) {
    for (int j = 0; j < h1; ++j) {
      double acc = net.b1(j);
      for (int i = 0; i < n_in; ++i) {
        if (x.get(i, t)) acc += net.w1(j, i);
      }
      cur1[j] = acc;
    }
    lif_step(s1, cur1, net.betas[0], spk1, net.v_threshold, net.reset_mode);

    for (int j = 0; j < h2; ++j) {
      double acc = net.b2(j);
      for (int i = 0; i < h1; ++i) {
        if (spk1[i]) acc += net.w2(j, i);
      }
      cur2[j] = acc;
    }
    lif_step(s2, cur2, net.betas[1], spk2, net.v_threshold, net.reset_mode);

    for (int j = 0; j < out; ++j) {
      double acc = net.b3(j);
      for (int i = 0; i < h2; ++i) {
        if (spk2[i]) acc += net.w3(j, i);
      }
      cur3[j] = acc;
    }
    lif_step(s3, cur3, net.betas[2], spk3, net.v_threshold, net.reset_mode);

    for (int i = 0; i < n_in; ++i) res.input_spikes += x.get(i, t);
    for (int j = 0; j < h1; ++j) res.layer1_spikes += spk1[j];
    for (int j = 0; j < h2; ++j) res.layer2_spikes += spk2[j];
    for (int c = 0; c < out; ++c) {
      res.layer3_spikes += spk3[c];
      res.counts[c] += spk3[c];
    }
    res.raster1.insert(res.raster1.end(), spk1.begin(), spk1.end());
    res.raster2.insert(res.raster2.end(), spk2.begin(), spk2.end());
    res.raster3.insert(res.raster3.end(), spk3.begin(), spk3.end());
  }
  return res;
}

/// Spike-count argmax; ties break toward the higher class, the fail-safe
/// direction for a severity scale.
inline int classify(std::span<const std::int64_t> counts) {
  if (counts.empty()) throw std::invalid_argument("classify: empty counts");
  int best = 0;
  for (int c = 1; c < static_cast<int>(counts.size()); ++c) {
    if (counts[c] >= counts[best]) best = c;
  }
  return best;
}

/// Surrogate derivative of the spike function: s / (1 + |s*x|)^2.
inline double fast_sigmoid_grad(double x, double slope = 25.0) {
  double d = 1.0 + std::abs(slope * x);
  return slope / (d * d);
}

/// Smooth spike stand-in used by the rate-relaxed forward mode. This is the
/// exact antiderivative of fast_sigmoid_grad, anchored at 0.5 for x = 0, so
/// analytic gradients of the relaxed model are finite-difference checkable.
inline double relaxed_spike(double x, double slope = 25.0) {
  return 0.5 + slope * x / (1.0 + std::abs(slope * x));
}

/// SynOps per inference: every spike entering a weight matrix costs one
/// synaptic event per outgoing connection.
inline std::int64_t count_synops(const SpikingNet& net, const ForwardResult& r) {
  return r.input_spikes * net.hidden1() + r.layer1_spikes * net.hidden2() +
         r.layer2_spikes * net.outputs();
}

/// All-neurons-firing-every-step bound on SynOps.
inline std::int64_t synops_upper_bound(const SpikingNet& net, int timesteps) {
  std::int64_t per_step = static_cast<std::int64_t>(net.inputs()) * net.hidden1() +
                          static_cast<std::int64_t>(net.hidden1()) * net.hidden2() +
                          static_cast<std::int64_t>(net.hidden2()) * net.outputs();
  return per_step * timesteps;
}

// ---------------------------------------------------------------------------
// Weight file IO
// ---------------------------------------------------------------------------
// Little-endian binary: magic "PDDS", format version u32, then for each of
// fc1, fc2, fc3: rows u32, cols u32, row-major f32 weights, bias length u32,
// f32 biases; then 3 f64 betas. A JSON sidecar at <path>.json records the
// encoder settings and training seed.

inline constexpr std::uint32_t kWeightsFormatVersion = 1;

struct WeightsMeta {
  int timesteps = 50;
  double noise_sigma = 0.05;
  int axonal_delay = 2;
  std::uint64_t seed = 0;
};

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "weight files are little-endian; big-endian hosts are unsupported");

inline void put_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw std::runtime_error("weights: truncated file");
  return v;
}

inline void put_matrix(std::ostream& os, const Eigen::MatrixXd& m) {
  put_u32(os, static_cast<std::uint32_t>(m.rows()));
  put_u32(os, static_cast<std::uint32_t>(m.cols()));
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) {
      float f = static_cast<float>(m(r, c));
      os.write(reinterpret_cast<const char*>(&f), sizeof f);
    }
  }
}

inline void put_bias(std::ostream& os, const Eigen::VectorXd& v) {
  put_u32(os, static_cast<std::uint32_t>(v.size()));
  for (int r = 0; r < v.size(); ++r) {
    float f = static_cast<float>(v(r));
    os.write(reinterpret_cast<const char*>(&f), sizeof f);
  }
}

inline Eigen::MatrixXd get_matrix(std::istream& is) {
  std::uint32_t rows = get_u32(is), cols = get_u32(is);
  Eigen::MatrixXd m(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r) {
    for (std::uint32_t c = 0; c < cols; ++c) {
      float f;
      is.read(reinterpret_cast<char*>(&f), sizeof f);
      if (!is) throw std::runtime_error("weights: truncated file");
      m(r, c) = f;
    }
  }
  return m;
}

inline Eigen::VectorXd get_bias(std::istream& is) {
  std::uint32_t n = get_u32(is);
  Eigen::VectorXd v(n);
  for (std::uint32_t r = 0; r < n; ++r) {
    float f;
    is.read(reinterpret_cast<char*>(&f), sizeof f);
    if (!is) throw std::runtime_error("weights: truncated file");
    v(r) = f;
  }
  return v;
}

}  // namespace detail

inline void save_weights(const SpikingNet& net, const std::string& path, const WeightsMeta& meta) {
  net.check_shapes();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_weights: cannot open " + path);
  os.write("PDDS", 4);
  detail::put_u32(os, kWeightsFormatVersion);
  detail::put_matrix(os, net.w1);
  detail::put_bias(os, net.b1);
  detail::put_matrix(os, net.w2);
  detail::put_bias(os, net.b2);
  detail::put_matrix(os, net.w3);
  detail::put_bias(os, net.b3);
  for (double beta : net.betas) {
    os.write(reinterpret_cast<const char*>(&beta), sizeof beta);
  }
  if (!os) throw std::runtime_error("save_weights: write failed for " + path);

  nlohmann::json sidecar = {
      {"timesteps", meta.timesteps},
      {"noise_sigma", meta.noise_sigma},
      {"axonal_delay", meta.axonal_delay},
      {"seed", meta.seed},
  };
  std::ofstream js(path + ".json");
  if (!js) throw std::runtime_error("save_weights: cannot open " + path + ".json");
  js << sidecar.dump(2) << '\n';
}

inline SpikingNet load_weights(const std::string& path, WeightsMeta* meta = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_weights: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "PDDS", 4) != 0) throw std::runtime_error("load_weights: bad magic");
  std::uint32_t version = detail::get_u32(is);
  if (version != kWeightsFormatVersion) throw std::runtime_error("load_weights: unsupported version");
  SpikingNet net;
  net.w1 = detail::get_matrix(is);
  net.b1 = detail::get_bias(is);
  net.w2 = detail::get_matrix(is);
  net.b2 = detail::get_bias(is);
  net.w3 = detail::get_matrix(is);
  net.b3 = detail::get_bias(is);
  for (double& beta : net.betas) {
    is.read(reinterpret_cast<char*>(&beta), sizeof beta);
    if (!is) throw std::runtime_error("load_weights: truncated file");
  }
  net.check_shapes();
  if (meta) {
    std::ifstream js(path + ".json");
    if (js) {
      nlohmann::json sidecar = nlohmann::json::parse(js);
      meta->timesteps = sidecar.value("timesteps", 50);
      meta->noise_sigma = sidecar.value("noise_sigma", 0.05);
      meta->axonal_delay = sidecar.value("axonal_delay", 2);
      meta->seed = sidecar.value("seed", std::uint64_t{0});
    }
  }
  return net;
}

}  // namespace pdds

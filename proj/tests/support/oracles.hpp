#pragma once

// Independent reference computations used by the tests. None of these call
// into the code path they check.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "scbench/scbench.hpp"

namespace oracle {

// Nearest representable value by scanning every raw code; ties go to the
// code with larger magnitude.
inline std::int64_t nearest_raw(double v, int int_bits, int frac_bits) {
  const std::int64_t lo = -(std::int64_t{1} << (int_bits + frac_bits));
  const std::int64_t hi = -lo - 1;
  std::int64_t best = lo;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::int64_t r = lo; r <= hi; ++r) {
    const double d = std::fabs(v - double(r) / double(std::int64_t{1} << frac_bits));
    if (d < best_d || (d == best_d && std::llabs(r) > std::llabs(best))) {
      best = r;
      best_d = d;
    }
  }
  return best;
}

// Stationary decode of the saturating K-state counter driven by i.i.d. bits
// with P(1) = (x + 1) / 2: a birth-death chain with pi_i ~ (p / q)^i.
inline double stanh_stationary(int K, double x) {
  const double p = (x + 1.0) / 2.0, q = 1.0 - p;
  std::vector<double> pi(K);
  double z = 0.0;
  for (int i = 0; i < K; ++i) z += pi[i] = std::pow(p / q, i);
  double upper = 0.0;
  for (int i = K / 2; i < K; ++i) upper += pi[i] / z;
  return 2.0 * upper - 1.0;
}

// Per-output evaluation of a conv layer with the PE arithmetic in
// accumulation order (channel, row, column), converting through the buffer
// entry at every row end except the last. Same seeds as the simulator.
template <class Pe>
scbench::Tensor<scbench::FixedPoint> direct_conv(const scbench::PuConfig& cfg, const Pe& pe,
                                                 const scbench::Tensor<scbench::FixedPoint>& w,
                                                 const scbench::Tensor<scbench::FixedPoint>& x, std::uint64_t seed) {
  const scbench::MacKeys keys{seed};
  const int OH = cfg.input_h - cfg.kernel_h + 1, OW = cfg.input_w - cfg.kernel_w + 1;
  scbench::Tensor<scbench::FixedPoint> out({std::size_t(cfg.out_channels), std::size_t(OH), std::size_t(OW)});
  for (int oc = 0; oc < cfg.out_channels; ++oc)
    for (int oi = 0; oi < OH; ++oi)
      for (int oj = 0; oj < OW; ++oj) {
        auto p = pe.init(keys.init(oc, oi, oj));
        for (int c = 0; c < cfg.in_channels; ++c)
          for (int r = 0; r < cfg.kernel_h; ++r) {
            for (int k = 0; k < cfg.kernel_w; ++k)
              p = pe.mac(p, x(c, oi + r, oj + k), w(oc, c, r, k), keys.mac(oc, c, r, k, oi, oj));
            const bool last = c == cfg.in_channels - 1 && r == cfg.kernel_h - 1;
            if (!last) {
              const auto key = keys.buffer(oc, c, r, oi, oj);
              p = pe.from_buffer(pe.to_buffer(p, key), key);
            }
          }
        out(oc, oi, oj) = pe.finalize(p, keys.finalize(oc, oi, oj));
      }
  return out;
}

// Plain double-precision convolution (correlation), no quantization.
inline std::vector<double> conv_real(const std::vector<double>& in, int C, int H, int W, const std::vector<double>& w,
                                     int OC, int K, const std::vector<double>& bias) {
  const int OH = H - K + 1, OW = W - K + 1;
  std::vector<double> out(std::size_t(OC) * OH * OW);
  for (int oc = 0; oc < OC; ++oc)
    for (int i = 0; i < OH; ++i)
      for (int j = 0; j < OW; ++j) {
        double s = bias[oc];
        for (int c = 0; c < C; ++c)
          for (int r = 0; r < K; ++r)
            for (int k = 0; k < K; ++k)
              s += in[(std::size_t(c) * H + i + r) * W + j + k] * w[((std::size_t(oc) * C + c) * K + r) * K + k];
        out[(std::size_t(oc) * OH + i) * OW + j] = s;
      }
  return out;
}

}  // namespace oracle

namespace fixtures {

// Small randomly initialized 3-conv + 1-fc network on 1x16x16 inputs:
// conv3 1->4, pool2, conv3 4->6, pool2, conv2 6->8, fc 8->10 (no final ReLU).
inline scbench::ModelWeights synthetic_model(std::uint64_t seed) {
  using namespace scbench;
  std::mt19937_64 rng(seed);
  auto init = [&](Tensor<double>& t, int fan_in) {
    std::normal_distribution<double> d(0.0, std::sqrt(2.0 / fan_in));
    for (double& v : t.data()) v = std::clamp(d(rng), -1.9, 1.9);
  };
  auto bias = [&](int n) {
    std::uniform_real_distribution<double> d(-0.1, 0.1);
    std::vector<double> b(n);
    for (double& v : b) v = d(rng);
    return b;
  };
  ModelWeights m;
  m.input = InputSpec{1, 16, 16, 0, InputNorm::None};
  Layer c1{LayerSpec::conv(1, 4, 3), Tensor<double>({4, 1, 3, 3}), bias(4)};
  Layer c2{LayerSpec::conv(4, 6, 3), Tensor<double>({6, 4, 3, 3}), bias(6)};
  Layer c3{LayerSpec::conv(6, 8, 2), Tensor<double>({8, 6, 2, 2}), bias(8)};
  Layer f{LayerSpec::fc(8, 10), Tensor<double>({10, 8}), bias(10)};
  init(c1.weights, 9);
  init(c2.weights, 36);
  init(c3.weights, 24);
  init(f.weights, 8);
  const Layer relu{LayerSpec::relu(), {}, {}};
  const Layer pool{LayerSpec::pool_layer(2, PoolKind::Max), {}, {}};
  m.layers = {c1, relu, pool, c2, relu, pool, c3, relu, f};
  check_model(m);
  return m;
}

// Blob-like synthetic images in [0, 1).
inline scbench::Dataset synthetic_images(std::size_t n, std::uint64_t seed, int side = 16) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  scbench::Dataset d;
  d.rows = d.cols = side;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> img(std::size_t(side) * side, 0.0);
    const int strokes = 2 + int(u(rng) * 3);
    for (int s = 0; s < strokes; ++s) {
      const double cx = 3 + u(rng) * (side - 6), cy = 3 + u(rng) * (side - 6), r = 1.5 + u(rng) * 3;
      for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
          const double dd = std::hypot(x - cx, y - cy);
          if (dd < r) img[std::size_t(y) * side + x] = std::min(0.996, img[std::size_t(y) * side + x] + 0.6 * (1 - dd / r) + 0.3);
        }
    }
    d.images.push_back(std::move(img));
    d.labels.push_back(int(i % 10));
  }
  return d;
}

// Random model rescaled layer by layer (data-dependent unit-variance init) so
// that pre-activations on the calibration images have standard deviation
// `target`; keeps activations inside a fixed-point range instead of at its
// bottom or past its top.
inline scbench::ModelWeights calibrated_model(std::uint64_t seed, const scbench::Dataset& calib, double target = 1.0) {
  using namespace scbench;
  ModelWeights m = synthetic_model(seed);
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    auto& l = m.layers[li];
    if (l.spec.kind != LayerKind::Conv && l.spec.kind != LayerKind::FullyConnected) continue;
    ModelWeights prefix{m.input, {m.layers.begin(), m.layers.begin() + std::ptrdiff_t(li) + 1}};
    double s = 0, sq = 0, n = 0;
    for (const auto& img : calib.images)
      for (double v : forward(prefix, preprocess(m.input, img), BackendConfig{}, 0)) s += v, sq += v * v, ++n;
    const double sd = std::sqrt(std::max(1e-12, sq / n - (s / n) * (s / n)));
    for (double& w : l.weights.data()) w *= target / sd;
    for (double& b : l.bias) b *= target / sd;
  }
  return m;
}

}  // namespace fixtures

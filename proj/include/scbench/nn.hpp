#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "scbench/accelerator.hpp"
#include "scbench/bisc.hpp"
#include "scbench/error.hpp"
#include "scbench/esl.hpp"
#include "scbench/numeric.hpp"
#include "scbench/random.hpp"
#include "scbench/tensor.hpp"

namespace scbench {

enum class LayerKind { Conv, Pool, FullyConnected, Activation };
enum class PoolKind { Max, Average };
enum class ActivationKind { ReLU, None };

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Conv: return "conv";
    case LayerKind::Pool: return "pool";
    case LayerKind::FullyConnected: return "fc";
    case LayerKind::Activation: return "activation";
  }
  return "?";
}

struct LayerSpec {
  LayerKind kind = LayerKind::Conv;
  int in_channels = 0;   // conv: input channels; fc: input features
  int out_channels = 0;  // conv: output channels; fc: output features
  int kernel = 0;        // conv and pool window
  int stride = 1;        // pool only; conv is always stride 1
  PoolKind pool = PoolKind::Max;
  ActivationKind activation = ActivationKind::ReLU;

  static LayerSpec conv(int in, int out, int k) { return {LayerKind::Conv, in, out, k, 1}; }
  static LayerSpec fc(int in, int out) { return {LayerKind::FullyConnected, in, out, 0, 1}; }
  static LayerSpec pool_layer(int k, PoolKind p) { return {LayerKind::Pool, 0, 0, k, k, p}; }
  static LayerSpec relu() { return {LayerKind::Activation, 0, 0, 0, 1, PoolKind::Max, ActivationKind::ReLU}; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

enum class InputNorm { None, Standardize };

struct InputSpec {
  int channels = 1;
  int height = 28;
  int width = 28;
  int pad = 0;
  InputNorm norm = InputNorm::None;

  friend bool operator==(const InputSpec&, const InputSpec&) = default;
};

struct Layer {
  LayerSpec spec;
  Tensor<double> weights;  // conv [out][in][k][k], fc [out][in]
  std::vector<double> bias;

  friend bool operator==(const Layer&, const Layer&) = default;
};

struct ModelWeights {
  InputSpec input;
  std::vector<Layer> layers;

  friend bool operator==(const ModelWeights&, const ModelWeights&) = default;
};

struct Dataset {
  int rows = 28;
  int cols = 28;
  std::vector<std::vector<double>> images;  // row-major pixels in [0, 1)
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

struct Shape3 {
  int c = 0, h = 0, w = 0;
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

// Walks the layer table and returns the output shape; throws DataError
// naming the first layer whose shape does not compose.
inline Shape3 check_model(const ModelWeights& m) {
  Shape3 s{m.input.channels, m.input.height + 2 * m.input.pad, m.input.width + 2 * m.input.pad};
  if (s.c < 1 || s.h < 1 || s.w < 1) throw DataError("model input shape must be positive");
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const auto& l = m.layers[i];
    const std::string where = "layer " + std::to_string(i) + " (" + to_string(l.spec.kind) + "): ";
    switch (l.spec.kind) {
      case LayerKind::Conv: {
        const auto& sp = l.spec;
        if (sp.in_channels != s.c) throw DataError(where + "expects " + std::to_string(sp.in_channels) +
                                                   " channels, got " + std::to_string(s.c));
        if (sp.kernel < 1 || sp.kernel > s.h || sp.kernel > s.w) throw DataError(where + "kernel does not fit input");
        const std::vector<std::size_t> ws = {std::size_t(sp.out_channels), std::size_t(sp.in_channels),
                                             std::size_t(sp.kernel), std::size_t(sp.kernel)};
        if (l.weights.shape() != ws) throw DataError(where + "weight tensor shape mismatch");
        if (l.bias.size() != std::size_t(sp.out_channels)) throw DataError(where + "bias length mismatch");
        s = {sp.out_channels, s.h - sp.kernel + 1, s.w - sp.kernel + 1};
        break;
      }
      case LayerKind::Pool:
        if (l.spec.kernel < 1 || s.h < l.spec.kernel || s.w < l.spec.kernel) throw DataError(where + "window too large");
        s = {s.c, (s.h - l.spec.kernel) / l.spec.stride + 1, (s.w - l.spec.kernel) / l.spec.stride + 1};
        break;
      case LayerKind::FullyConnected: {
        const int in = s.c * s.h * s.w;
        if (l.spec.in_channels != in)
          throw DataError(where + "expects " + std::to_string(l.spec.in_channels) + " features, got " +
                          std::to_string(in));
        const std::vector<std::size_t> ws = {std::size_t(l.spec.out_channels), std::size_t(in)};
        if (l.weights.shape() != ws) throw DataError(where + "weight tensor shape mismatch");
        if (l.bias.size() != std::size_t(l.spec.out_channels)) throw DataError(where + "bias length mismatch");
        s = {l.spec.out_channels, 1, 1};
        break;
      }
      case LayerKind::Activation:
        break;
    }
  }
  return s;
}

inline double relu(double v) { return v > 0.0 ? v : 0.0; }

// Pads and optionally standardizes one image into the network input.
inline Tensor<double> preprocess(const InputSpec& in, std::span<const double> pixels) {
  const std::size_t plane = std::size_t(in.height) * in.width;
  if (pixels.size() != plane * in.channels) throw DataError("image size does not match the model input");
  double mean = 0.0, sd = 1.0;
  if (in.norm == InputNorm::Standardize) {
    double sum = 0.0, sq = 0.0;
    for (double p : pixels) {
      sum += p;
      sq += p * p;
    }
    mean = sum / double(pixels.size());
    sd = std::sqrt(std::max(0.0, sq / double(pixels.size()) - mean * mean));
    if (sd == 0.0) sd = 1.0;
  }
  const int H = in.height + 2 * in.pad, W = in.width + 2 * in.pad;
  Tensor<double> t({std::size_t(in.channels), std::size_t(H), std::size_t(W)}, 0.0);
  for (int c = 0; c < in.channels; ++c)
    for (int i = 0; i < in.height; ++i)
      for (int j = 0; j < in.width; ++j)
        t(c, i + in.pad, j + in.pad) = (pixels[(c * in.height + i) * in.width + j] - mean) / sd;
  return t;
}

// ---- arithmetic backends -------------------------------------------------

enum class NnBackend { Float, Fixed, Bisc, EslRaw, EslConvert };

inline const char* to_string(NnBackend b) {
  switch (b) {
    case NnBackend::Float: return "float";
    case NnBackend::Fixed: return "fixed";
    case NnBackend::Bisc: return "bisc";
    case NnBackend::EslRaw: return "esl-raw";
    case NnBackend::EslConvert: return "esl-convert";
  }
  return "?";
}

inline NnBackend parse_nn_backend(const std::string& s) {
  if (s == "float") return NnBackend::Float;
  if (s == "fixed") return NnBackend::Fixed;
  if (s == "bisc") return NnBackend::Bisc;
  if (s == "esl-raw") return NnBackend::EslRaw;
  if (s == "esl-convert") return NnBackend::EslConvert;
  throw ConfigError("unknown backend '" + s + "' (float, fixed, bisc, esl-raw, esl-convert)");
}

inline bool is_stochastic(NnBackend b) { return b == NnBackend::Bisc || b == NnBackend::EslRaw || b == NnBackend::EslConvert; }

inline Backend accelerator_backend(NnBackend b) {
  switch (b) {
    case NnBackend::EslRaw: return Backend::EslRaw;
    case NnBackend::EslConvert: return Backend::EslConvert;
    default: return Backend::Bisc;
  }
}

struct BackendConfig {
  NnBackend kind = NnBackend::Float;
  FixedFormat format{2, 6};
  int sn_exponent = 9;
  SourceKind source = SourceKind::LfsrBased;
  ClockPeriods clocks{};
};

// One output of a conv or fc layer: inputs, weights, bias and the length of
// the contiguous runs that share a PE row (P2B/B2P happen between runs).
struct DotJob {
  std::span<const double> x;
  std::span<const double> w;
  double bias = 0.0;
  std::uint64_t key = 0;
  std::size_t segment = 1;
};

template <class B>
concept Arithmetic = requires(const B& b, double v, const DotJob& job) {
  { b.input(v) } -> std::convertible_to<double>;
  { b.dot(job) } -> std::convertible_to<double>;
  { b.mac_cycles(v) } -> std::convertible_to<std::int64_t>;
};

struct FloatArithmetic {
  double input(double v) const { return v; }
  double dot(const DotJob& j) const {
    double acc = j.bias;
    for (std::size_t i = 0; i < j.x.size(); ++i) acc += j.x[i] * j.w[i];
    return acc;
  }
  std::int64_t mac_cycles(double) const { return 0; }
};

namespace detail {

// Arithmetic shift right with round-half-away-from-zero.
inline std::int64_t round_shift(std::int64_t v, int s) {
  if (s == 0) return v;
  const std::int64_t half = std::int64_t{1} << (s - 1);
  return v >= 0 ? (v + half) >> s : -((-v + half) >> s);
}

}  // namespace detail

// Exact products in a wide accumulator, rounded once at the output.
struct FixedArithmetic {
  FixedFormat fmt{2, 6};

  double input(double v) const { return quantize_value(v, fmt); }
  double dot(const DotJob& j) const {
    std::int64_t acc = quantize(j.bias, fmt).raw << fmt.frac_bits;
    for (std::size_t i = 0; i < j.x.size(); ++i) acc += quantize(j.x[i], fmt).raw * quantize(j.w[i], fmt).raw;
    return FixedPoint{saturate_raw(detail::round_shift(acc, fmt.frac_bits), fmt), fmt}.value();
  }
  std::int64_t mac_cycles(double) const { return 0; }
};

// Input-counted SC-MAC per product; the accumulator is read out in binary.
struct BiscArithmetic {
  FixedFormat fmt{2, 6};

  double input(double v) const { return quantize_value(v, fmt); }
  double dot(const DotJob& j) const {
    const auto& sel = detail::cached_selector(bisc_exponent(fmt));
    std::int64_t acc = 0;
    for (std::size_t i = 0; i < j.x.size(); ++i)
      acc = bisc_mac(quantize(j.x[i], fmt), quantize(j.w[i], fmt), BiscImpl::InputCounted, acc, sel).acc;
    const std::int64_t raw = (acc << fmt.int_bits) + quantize(j.bias, fmt).raw;
    return FixedPoint{saturate_raw(raw, fmt), fmt}.value();
  }
  std::int64_t mac_cycles(double x) const { return std::abs(quantize(x, fmt).raw); }
};

namespace detail {

inline std::vector<EslNumber> esl_products(std::span<const double> x, std::span<const double> w,
                                           const FixedFormat& fmt, int n, const RandomSource& src,
                                           std::size_t first = 0) {
  std::vector<EslNumber> out;
  out.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const RandomSource s = src.derive(first + i);
    out.push_back(esl_mul(esl_encode(quantize_value(x[i], fmt), n, s.derive(1)),
                          esl_encode(quantize_value(w[i], fmt), n, s.derive(2))));
  }
  return out;
}

inline EslNumber esl_reduce(std::span<const EslNumber> terms, const RandomSource& src) {
  if (terms.size() == 1) return terms.front();
  return esl_array_add(terms, ArrayAddStrategy::Tree, src);
}

}  // namespace detail

// All products of an output stay in stream form and meet in one adder tree;
// a single P2B feeds the binary bias/activation stage.
struct EslRawArithmetic {
  FixedFormat fmt{2, 6};
  int n = 9;
  SourceKind kind = SourceKind::LfsrBased;

  double input(double v) const { return quantize_value(v, fmt); }
  double dot(const DotJob& j) const {
    const RandomSource src{kind, j.key, 0, false};
    auto terms = detail::esl_products(j.x, j.w, fmt, n, src.derive(0));
    const EslNumber sum = detail::esl_reduce(terms, src.derive(1));
    const FixedPoint p = esl_to_binary(sum, fmt, src.derive(2));
    return FixedPoint{saturate_raw(p.raw + quantize(j.bias, fmt).raw, fmt), fmt}.value();
  }
  std::int64_t mac_cycles(double) const { return std::int64_t{1} << n; }
};

// Each PE row reduces its products together with the B2P-converted running
// partial; the row result is converted back to binary before the next row.
struct EslConvertArithmetic {
  FixedFormat fmt{2, 6};
  int n = 9;
  SourceKind kind = SourceKind::LfsrBased;

  double input(double v) const { return quantize_value(v, fmt); }
  double dot(const DotJob& j) const {
    const RandomSource src{kind, j.key, 0, false};
    const std::size_t seg = std::max<std::size_t>(1, j.segment);
    FixedPoint partial{0, fmt};
    for (std::size_t start = 0, s = 0; start < j.x.size(); start += seg, ++s) {
      const std::size_t len = std::min(seg, j.x.size() - start);
      const RandomSource ss = src.derive(s);
      auto terms = detail::esl_products(j.x.subspan(start, len), j.w.subspan(start, len), fmt, n, ss.derive(0));
      if (start > 0) terms.insert(terms.begin(), esl_encode(partial.value(), n, ss.derive(1)));
      partial = esl_to_binary(detail::esl_reduce(terms, ss.derive(2)), fmt, ss.derive(3));
    }
    return FixedPoint{saturate_raw(partial.raw + quantize(j.bias, fmt).raw, fmt), fmt}.value();
  }
  std::int64_t mac_cycles(double) const { return std::int64_t{1} << n; }
};

// ---- forward pass ---------------------------------------------------------

namespace detail {

inline std::uint64_t output_key(std::uint64_t seed, std::size_t layer, std::size_t index) {
  return derive_seed(seed, {0x11E7, layer, index});
}

template <Arithmetic A>
Tensor<double> conv_forward(const A& a, const Layer& l, const Tensor<double>& in, std::uint64_t seed,
                            std::size_t layer_index, LayerCycles& lc) {
  const int C = int(in.dim(0)), H = int(in.dim(1)), W = int(in.dim(2));
  const int K = l.spec.kernel, OC = l.spec.out_channels;
  const int OH = H - K + 1, OW = W - K + 1;
  Tensor<double> out({std::size_t(OC), std::size_t(OH), std::size_t(OW)});
  const std::size_t n = std::size_t(C) * K * K;
  std::vector<double> xs(n);
  std::int64_t stream_cost = 0;
  for (double v : in.data()) stream_cost += a.mac_cycles(v);
  for (int oi = 0; oi < OH; ++oi)
    for (int oj = 0; oj < OW; ++oj) {
      std::size_t p = 0;
      std::int64_t cost = 0;
      for (int c = 0; c < C; ++c)
        for (int r = 0; r < K; ++r)
          for (int k = 0; k < K; ++k) {
            xs[p++] = in(c, oi + r, oj + k);
            cost += a.mac_cycles(in(c, oi + r, oj + k));
          }
      for (int oc = 0; oc < OC; ++oc) {
        const std::span<const double> ws(l.weights.data().data() + std::size_t(oc) * n, n);
        const std::size_t idx = (std::size_t(oc) * OH + oi) * OW + oj;
        out(oc, oi, oj) = a.dot(DotJob{xs, ws, l.bias[oc], output_key(seed, layer_index, idx), std::size_t(K)});
        lc.macs += std::int64_t(n);
        lc.cycles += cost;
      }
    }
  lc.pu_cycles += stream_cost * OC;
  return out;
}

template <Arithmetic A>
Tensor<double> fc_forward(const A& a, const Layer& l, const Tensor<double>& in, std::uint64_t seed,
                          std::size_t layer_index, LayerCycles& lc) {
  const std::size_t n = in.size();
  const int OUT = l.spec.out_channels;
  Tensor<double> out({std::size_t(OUT), 1, 1});
  std::int64_t cost = 0;
  for (double v : in.data()) cost += a.mac_cycles(v);
  const std::size_t seg = in.rank() == 3 ? in.dim(2) : n;
  for (int o = 0; o < OUT; ++o) {
    const std::span<const double> ws(l.weights.data().data() + std::size_t(o) * n, n);
    out.data()[o] = a.dot(DotJob{in.data(), ws, l.bias[o], output_key(seed, layer_index, o), seg});
    lc.macs += std::int64_t(n);
    lc.cycles += cost;
  }
  lc.pu_cycles += cost * OUT;
  return out;
}

inline Tensor<double> pool_forward(const LayerSpec& sp, const Tensor<double>& in) {
  const int C = int(in.dim(0)), H = int(in.dim(1)), W = int(in.dim(2));
  const int K = sp.kernel, S = sp.stride;
  const int OH = (H - K) / S + 1, OW = (W - K) / S + 1;
  Tensor<double> out({std::size_t(C), std::size_t(OH), std::size_t(OW)});
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < OH; ++i)
      for (int j = 0; j < OW; ++j) {
        double acc = sp.pool == PoolKind::Max ? in(c, i * S, j * S) : 0.0;
        for (int r = 0; r < K; ++r)
          for (int k = 0; k < K; ++k) {
            const double v = in(c, i * S + r, j * S + k);
            acc = sp.pool == PoolKind::Max ? std::max(acc, v) : acc + v;
          }
        out(c, i, j) = sp.pool == PoolKind::Max ? acc : acc / double(K * K);
      }
  return out;
}

}  // namespace detail

// Runs the network on one preprocessed input. Stochastic arithmetic is keyed
// by `seed`; cycle counts are appended to `cycles` when given.
template <Arithmetic A>
std::vector<double> forward(const ModelWeights& model, const Tensor<double>& input, const A& a, std::uint64_t seed,
                            CycleReport* cycles = nullptr) {
  Tensor<double> t = input;
  for (double& v : t.data()) v = a.input(v);
  std::size_t mac_layer = 0;
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    const Layer& l = model.layers[li];
    switch (l.spec.kind) {
      case LayerKind::Conv:
      case LayerKind::FullyConnected: {
        LayerCycles lc{to_string(l.spec.kind) + std::to_string(++mac_layer), 0, 0, 0};
        t = l.spec.kind == LayerKind::Conv ? detail::conv_forward(a, l, t, seed, li, lc)
                                           : detail::fc_forward(a, l, t, seed, li, lc);
        if (cycles) cycles->layers.push_back(lc);
        break;
      }
      case LayerKind::Pool:
        t = detail::pool_forward(l.spec, t);
        if (l.spec.pool == PoolKind::Average)
          for (double& v : t.data()) v = a.input(v);
        break;
      case LayerKind::Activation:
        if (l.spec.activation == ActivationKind::ReLU)
          for (double& v : t.data()) v = relu(v);
        break;
    }
  }
  return t.data();
}

template <class F>
decltype(auto) with_arithmetic(const BackendConfig& cfg, F&& f) {
  switch (cfg.kind) {
    case NnBackend::Float: return f(FloatArithmetic{});
    case NnBackend::Fixed: return f(FixedArithmetic{cfg.format});
    case NnBackend::Bisc: return f(BiscArithmetic{cfg.format});
    case NnBackend::EslRaw: return f(EslRawArithmetic{cfg.format, cfg.sn_exponent, cfg.source});
    case NnBackend::EslConvert: return f(EslConvertArithmetic{cfg.format, cfg.sn_exponent, cfg.source});
  }
  throw std::invalid_argument("unknown backend");
}

inline std::vector<double> forward(const ModelWeights& model, const Tensor<double>& input, const BackendConfig& cfg,
                                   std::uint64_t seed, CycleReport* cycles = nullptr) {
  if (cycles) {
    cycles->backend = accelerator_backend(cfg.kind);
    cycles->clock_period_ns = is_stochastic(cfg.kind) ? cfg.clocks.of(cycles->backend) : 0.0;
    cycles->buffer_entry_bits = buffer_entry_bits(cycles->backend, cfg.sn_exponent, cfg.format);
  }
  return with_arithmetic(cfg, [&](const auto& a) { return forward(model, input, a, seed, cycles); });
}

// Lowest index wins ties.
inline int argmax(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("argmax of an empty score vector");
  return int(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

struct AccuracyResult {
  std::size_t correct = 0;
  std::size_t total = 0;
  std::vector<int> predictions;
  std::vector<std::vector<double>> scores;
  CycleReport cycles;  // summed over all images

  double accuracy() const { return total ? double(correct) / double(total) : 0.0; }
};

inline std::uint64_t image_seed(std::uint64_t seed, std::size_t index) { return derive_seed(seed, {0x1AA6E, index}); }

// Images are independent; `jobs` workers pull them in order and results are
// reduced by image index, so any job count yields identical output.
inline AccuracyResult evaluate_accuracy(const ModelWeights& model, const Dataset& data, const BackendConfig& cfg,
                                        std::uint64_t seed, int jobs = 1, std::size_t limit = 0) {
  const std::size_t total = limit ? std::min(limit, data.size()) : data.size();
  if (total == 0) throw DataError("dataset is empty");
  check_model(model);
  std::vector<std::vector<double>> scores(total);
  std::vector<CycleReport> reports(total);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (std::size_t i; !failed && (i = next++) < total;) {
      try {
        const auto in = preprocess(model.input, data.images[i]);
        scores[i] = forward(model, in, cfg, image_seed(seed, i), &reports[i]);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
      }
    }
  };
  const int n = std::max(1, jobs);
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  AccuracyResult res;
  res.total = total;
  res.cycles = reports.front();
  for (auto& l : res.cycles.layers) l = LayerCycles{l.name, 0, 0, 0};
  for (std::size_t i = 0; i < total; ++i) {
    const int p = argmax(scores[i]);
    res.predictions.push_back(p);
    if (p == data.labels[i]) ++res.correct;
    for (std::size_t k = 0; k < reports[i].layers.size(); ++k) {
      res.cycles.layers[k].macs += reports[i].layers[k].macs;
      res.cycles.layers[k].cycles += reports[i].layers[k].cycles;
      res.cycles.layers[k].pu_cycles += reports[i].layers[k].pu_cycles;
    }
  }
  res.scores = std::move(scores);
  return res;
}

struct BitwidthPoint {
  int int_bits = 0;
  int frac_bits = 0;
  double accuracy = 0.0;
};

inline std::vector<BitwidthPoint> bitwidth_sweep(const ModelWeights& model, const Dataset& data,
                                                 std::span<const int> int_bits, std::span<const int> frac_bits,
                                                 int jobs = 1, std::size_t limit = 0) {
  std::vector<BitwidthPoint> table;
  for (int ib : int_bits)
    for (int fb : frac_bits) {
      BackendConfig cfg;
      cfg.kind = NnBackend::Fixed;
      cfg.format = {ib, fb};
      validate(cfg.format);
      table.push_back({ib, fb, evaluate_accuracy(model, data, cfg, 0, jobs, limit).accuracy()});
    }
  return table;
}

}  // namespace scbench

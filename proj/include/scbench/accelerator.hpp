#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "scbench/bisc.hpp"
#include "scbench/config.hpp"
#include "scbench/error.hpp"
#include "scbench/esl.hpp"
#include "scbench/numeric.hpp"
#include "scbench/random.hpp"
#include "scbench/tensor.hpp"

namespace scbench {

enum class Backend { Bisc, EslRaw, EslConvert };

inline const char* to_string(Backend b) {
  switch (b) {
    case Backend::Bisc: return "bisc";
    case Backend::EslRaw: return "esl-raw";
    case Backend::EslConvert: return "esl-convert";
  }
  return "?";
}

inline Backend parse_backend(const std::string& s) {
  if (s == "bisc") return Backend::Bisc;
  if (s == "esl-raw" || s == "esl_raw") return Backend::EslRaw;
  if (s == "esl-convert" || s == "esl_convert") return Backend::EslConvert;
  throw ConfigError("unknown accelerator backend '" + s + "'");
}

// Critical-path delays of the synthesized designs, in ns.
struct ClockPeriods {
  double bisc = 1.40;
  double esl_raw = 2.25;
  double esl_convert = 2.39;

  double of(Backend b) const {
    switch (b) {
      case Backend::Bisc: return bisc;
      case Backend::EslRaw: return esl_raw;
      case Backend::EslConvert: return esl_convert;
    }
    return 0.0;
  }
};

// One processing unit: k_h rows of k_w PEs, fed one input channel at a
// time. Defaults are the small reference design (6-bit binary, 64-bit SC).
struct PuConfig {
  int kernel_w = 2;
  int kernel_h = 2;
  int input_w = 4;
  int input_h = 4;
  int in_channels = 3;
  int out_channels = 4;
  int int_bits = 1;
  int frac_bits = 4;
  int sn_exponent = 6;
  Backend backend = Backend::Bisc;
  BiscImpl bisc_impl = BiscImpl::InputCounted;
  SourceKind source = SourceKind::LfsrBased;
  ClockPeriods clocks{};

  FixedFormat format() const { return {int_bits, frac_bits}; }
  int binary_width() const { return format().width(); }
  double clock_period_ns() const { return clocks.of(backend); }
  int output_w() const { return input_w - kernel_w + 1; }
  int output_h() const { return input_h - kernel_h + 1; }
};

inline void validate(const PuConfig& cfg) {
  if (cfg.kernel_w < 1 || cfg.kernel_h < 1 || cfg.input_w < 1 || cfg.input_h < 1)
    throw ConfigError("kernel and input dimensions must be positive");
  if (cfg.in_channels < 1 || cfg.out_channels < 1) throw ConfigError("channel counts must be positive");
  if (cfg.kernel_w > cfg.input_w || cfg.kernel_h > cfg.input_h)
    throw ConfigError("kernel larger than the input feature map");
  if (cfg.sn_exponent < 1 || cfg.sn_exponent > kMaxStreamExponent) throw ConfigError("sn_exponent must be in [1, 16]");
  if (cfg.int_bits < 0 || cfg.frac_bits < 0 || cfg.int_bits + cfg.frac_bits > 20)
    throw ConfigError("fixed-point widths must be non-negative with at most 20 magnitude bits");
  if (cfg.clocks.bisc <= 0 || cfg.clocks.esl_raw <= 0 || cfg.clocks.esl_convert <= 0)
    throw ConfigError("clock periods must be positive");
}

inline const std::vector<std::string>& pu_config_keys() {
  static const std::vector<std::string> keys = {
      "kernel_w",  "kernel_h",    "input_w", "input_h",   "in_channels",   "out_channels",      "int_bits",
      "frac_bits", "sn_exponent", "backend", "bisc_impl", "source",        "clock_bisc_ns",     "clock_esl_raw_ns",
      "clock_esl_convert_ns"};
  return keys;
}

// Keys not listed in pu_config_keys() are left to the caller.
inline PuConfig pu_config_from(const KeyValueConfig& kv, PuConfig cfg = {}) {
  cfg.kernel_w = kv.get_int("kernel_w", cfg.kernel_w);
  cfg.kernel_h = kv.get_int("kernel_h", cfg.kernel_h);
  cfg.input_w = kv.get_int("input_w", cfg.input_w);
  cfg.input_h = kv.get_int("input_h", cfg.input_h);
  cfg.in_channels = kv.get_int("in_channels", cfg.in_channels);
  cfg.out_channels = kv.get_int("out_channels", cfg.out_channels);
  cfg.int_bits = kv.get_int("int_bits", cfg.int_bits);
  cfg.frac_bits = kv.get_int("frac_bits", cfg.frac_bits);
  cfg.sn_exponent = kv.get_int("sn_exponent", cfg.sn_exponent);
  if (kv.has("backend")) cfg.backend = parse_backend(kv.get_string("backend", ""));
  if (kv.has("bisc_impl")) {
    const auto s = kv.get_string("bisc_impl", "");
    if (s == "input-counted")
      cfg.bisc_impl = BiscImpl::InputCounted;
    else if (s == "weight-counted")
      cfg.bisc_impl = BiscImpl::WeightCounted;
    else
      throw ConfigError("bisc_impl must be input-counted or weight-counted");
  }
  if (kv.has("source")) {
    const auto s = kv.get_string("source", "");
    if (s == "lfsr")
      cfg.source = SourceKind::LfsrBased;
    else if (s == "full-period")
      cfg.source = SourceKind::FullPeriodPermutation;
    else
      throw ConfigError("source must be lfsr or full-period");
  }
  cfg.clocks.bisc = kv.get_double("clock_bisc_ns", cfg.clocks.bisc);
  cfg.clocks.esl_raw = kv.get_double("clock_esl_raw_ns", cfg.clocks.esl_raw);
  cfg.clocks.esl_convert = kv.get_double("clock_esl_convert_ns", cfg.clocks.esl_convert);
  validate(cfg);
  return cfg;
}

// Bits per Partial Result Buffer entry: a stream pair for raw ESL, the
// binary word otherwise.
inline std::int64_t buffer_entry_bits(Backend backend, int sn_exponent, const FixedFormat& fmt) {
  if (backend == Backend::EslRaw) return 2 * (std::int64_t{1} << sn_exponent);
  return fmt.width();
}

struct DataflowPlan {
  int rows = 0;
  int pes_per_row = 0;
  int output_w = 0;
  int output_h = 0;
  // Steps between a row's last PE finishing an anchor and the next row's
  // last PE finishing the same anchor.
  int reuse_distance = 0;
  // Steps an entry waits in the buffer between its write and its read.
  int buffer_residency = 0;
  std::int64_t steps_per_channel = 0;
  std::int64_t buffer_writes = 0;
  std::int64_t outputs = 0;
  bool uses_buffer = false;
};

inline DataflowPlan schedule_conv(const PuConfig& cfg) {
  validate(cfg);
  DataflowPlan p;
  p.rows = cfg.kernel_h;
  p.pes_per_row = cfg.kernel_w;
  p.output_w = cfg.output_w();
  p.output_h = cfg.output_h();
  p.reuse_distance = cfg.input_w;
  p.buffer_residency = cfg.input_w - cfg.kernel_w + 1;
  p.steps_per_channel = std::int64_t{cfg.input_w} * cfg.input_h;
  const std::int64_t anchors = std::int64_t{p.output_w} * p.output_h;
  // Every row of every channel writes one partial per anchor, except the
  // final row of the last channel, which emits the output.
  p.buffer_writes = anchors * (std::int64_t{cfg.kernel_h} * cfg.in_channels - 1) * cfg.out_channels;
  p.outputs = anchors * cfg.out_channels;
  p.uses_buffer = p.buffer_writes > 0;
  return p;
}

struct BufferStats {
  std::int64_t entry_bits = 0;
  std::int64_t writes = 0;
  std::int64_t reads = 0;
  std::int64_t peak_entries = 0;
  std::int64_t min_residency = 0;
  std::int64_t max_residency = 0;

  std::int64_t traffic_bits() const { return (writes + reads) * entry_bits; }
  std::int64_t capacity_bits() const { return peak_entries * entry_bits; }
};

// SRAM between rows (and across input channels). Addressed by the producing
// (channel, row) and the output anchor; each entry is read exactly once.
template <class Entry>
class PartialResultBuffer {
 public:
  using Address = std::tuple<int, int, int, int>;

  explicit PartialResultBuffer(std::int64_t entry_bits) { stats_.entry_bits = entry_bits; }

  void write(const Address& a, Entry e, std::int64_t step) {
    if (!slots_.emplace(a, Slot{std::move(e), step}).second)
      throw std::logic_error("partial result written twice to the same address");
    ++stats_.writes;
    stats_.peak_entries = std::max<std::int64_t>(stats_.peak_entries, static_cast<std::int64_t>(slots_.size()));
  }

  Entry read(const Address& a, std::int64_t step) {
    auto it = slots_.find(a);
    if (it == slots_.end()) throw std::logic_error("partial result read before it was written");
    Entry e = std::move(it->second.entry);
    const std::int64_t residency = step - it->second.written;
    if (stats_.reads == 0) {
      stats_.min_residency = stats_.max_residency = residency;
    } else {
      stats_.min_residency = std::min(stats_.min_residency, residency);
      stats_.max_residency = std::max(stats_.max_residency, residency);
    }
    slots_.erase(it);
    ++stats_.reads;
    return e;
  }

  std::size_t occupancy() const { return slots_.size(); }
  const BufferStats& stats() const { return stats_; }

 private:
  struct Slot {
    Entry entry;
    std::int64_t written;
  };
  std::map<Address, Slot> slots_;
  BufferStats stats_;
};

struct LayerCycles {
  std::string name;
  std::int64_t macs = 0;
  std::int64_t cycles = 0;     // one MAC at a time
  std::int64_t pu_cycles = 0;  // all PEs of a PU in lockstep
};

struct CycleReport {
  Backend backend = Backend::Bisc;
  double clock_period_ns = 0.0;
  std::vector<LayerCycles> layers;
  std::int64_t buffer_entry_bits = 0;
  std::int64_t buffer_peak_entries = 0;
  std::int64_t buffer_traffic_bits = 0;

  std::int64_t total_cycles() const {
    std::int64_t n = 0;
    for (const auto& l : layers) n += l.cycles;
    return n;
  }
  std::int64_t pu_cycles() const {
    std::int64_t n = 0;
    for (const auto& l : layers) n += l.pu_cycles;
    return n;
  }
  std::int64_t macs() const {
    std::int64_t n = 0;
    for (const auto& l : layers) n += l.macs;
    return n;
  }
  std::int64_t buffer_bits() const { return buffer_entry_bits * buffer_peak_entries; }
  double evaluation_time_s() const { return static_cast<double>(total_cycles()) * clock_period_ns * 1e-9; }
};

inline double latency_estimate(double cycles, double clock_period_ns) { return cycles * clock_period_ns * 1e-9; }

inline double latency_estimate(Backend backend, double cycles, const ClockPeriods& clocks = {}) {
  return latency_estimate(cycles, clocks.of(backend));
}

// Seeds of every stochastic event in a layer. They depend on the PE and the
// output anchor only, so any evaluation order reproduces the same bits.
struct MacKeys {
  std::uint64_t seed = 0;

  std::uint64_t init(int oc, int oi, int oj) const { return derive_seed(seed, {0x1417, u(oc), u(oi), u(oj)}); }
  std::uint64_t mac(int oc, int c, int r, int k, int oi, int oj) const {
    return derive_seed(seed, {0x3AC, u(oc), u(c), u(r), u(k), u(oi), u(oj)});
  }
  std::uint64_t buffer(int oc, int c, int r, int oi, int oj) const {
    return derive_seed(seed, {0xB0F, u(oc), u(c), u(r), u(oi), u(oj)});
  }
  std::uint64_t finalize(int oc, int oi, int oj) const { return derive_seed(seed, {0xF17, u(oc), u(oi), u(oj)}); }

 private:
  static std::uint64_t u(int v) { return static_cast<std::uint64_t>(static_cast<std::int64_t>(v)); }
};

// PE arithmetic policies. Each provides the partial-sum type flowing along a
// row, the buffer entry type, and the conversions at the row ends.

class BiscPe {
 public:
  using Partial = std::int64_t;
  using Entry = FixedPoint;

  explicit BiscPe(const PuConfig& cfg)
      : fmt_(cfg.format()), impl_(cfg.bisc_impl), selector_(selector_sequence(bisc_exponent(fmt_))) {}

  Partial init(std::uint64_t) const { return 0; }
  Partial mac(Partial acc, const FixedPoint& x, const FixedPoint& w, std::uint64_t) const {
    return bisc_mac(x, w, impl_, acc, selector_).acc;
  }
  std::int64_t mac_cycles(const FixedPoint& x, const FixedPoint& w) const {
    return std::abs(impl_ == BiscImpl::InputCounted ? x.raw : w.raw);
  }
  // One count is 2^(N - 2f) = 2^-f * 2^int_bits, i.e. 2^int_bits raw units.
  Entry to_buffer(Partial acc, std::uint64_t) const { return FixedPoint{saturate_raw(acc << fmt_.int_bits, fmt_), fmt_}; }
  Partial from_buffer(const Entry& e, std::uint64_t) const { return e.raw >> fmt_.int_bits; }
  FixedPoint finalize(Partial acc, std::uint64_t key) const { return to_buffer(acc, key); }
  std::int64_t entry_bits() const { return fmt_.width(); }
  BiscImpl impl() const { return impl_; }

 private:
  FixedFormat fmt_;
  BiscImpl impl_;
  std::vector<int> selector_;
};

// Shared ESL PE core: B2P of both operands, XNOR multiply, two-input
// HalfConst adder with the incoming partial.
class EslPeBase {
 public:
  using Partial = EslNumber;

  explicit EslPeBase(const PuConfig& cfg) : fmt_(cfg.format()), n_(cfg.sn_exponent), kind_(cfg.source) {}

  Partial init(std::uint64_t key) const { return esl_encode(0.0, n_, source(key)); }
  Partial mac(const Partial& acc, const FixedPoint& x, const FixedPoint& w, std::uint64_t key) const {
    const RandomSource src = source(key);
    EslNumber prod = esl_mul(esl_encode(x.value(), n_, src.derive(1)), esl_encode(w.value(), n_, src.derive(2)));
    return esl_add2(acc, prod, EslAddVariant::HalfConst, src.derive(3));
  }
  std::int64_t mac_cycles(const FixedPoint&, const FixedPoint&) const { return std::int64_t{1} << n_; }
  FixedPoint finalize(const Partial& acc, std::uint64_t key) const { return esl_to_binary(acc, fmt_, source(key)); }

 protected:
  RandomSource source(std::uint64_t key) const { return RandomSource{kind_, key, 0, false}; }

  FixedFormat fmt_;
  int n_;
  SourceKind kind_;
};

// Partials stay in stream form in the buffer.
class EslRawPe : public EslPeBase {
 public:
  using Entry = EslNumber;
  using EslPeBase::EslPeBase;

  Entry to_buffer(const Partial& p, std::uint64_t) const { return p; }
  Partial from_buffer(const Entry& e, std::uint64_t) const { return e; }
  std::int64_t entry_bits() const { return 2 * (std::int64_t{1} << n_); }
};

// P2B before every buffer write, B2P after every read.
class EslConvertPe : public EslPeBase {
 public:
  using Entry = FixedPoint;
  using EslPeBase::EslPeBase;

  Entry to_buffer(const Partial& p, std::uint64_t key) const { return esl_to_binary(p, fmt_, source(key).derive(0)); }
  Partial from_buffer(const Entry& e, std::uint64_t key) const {
    return esl_encode(e.value(), n_, source(key).derive(1));
  }
  std::int64_t entry_bits() const { return fmt_.width(); }
};

struct ConvRun {
  Tensor<FixedPoint> output;  // [out_channels][output_h][output_w]
  CycleReport report;
  BufferStats buffer;
  // Producer-to-consumer distance of row handoffs within a channel.
  std::int64_t min_reuse_distance = 0;
  std::int64_t max_reuse_distance = 0;
};

inline Tensor<FixedPoint> quantize_tensor(const Tensor<double>& t, const FixedFormat& fmt) {
  std::vector<FixedPoint> q;
  q.reserve(t.size());
  for (double v : t.data()) q.push_back(quantize(v, fmt));
  return Tensor<FixedPoint>(t.shape(), std::move(q));
}

namespace detail {

inline void check_conv_shapes(const PuConfig& cfg, const Tensor<FixedPoint>& weights,
                              const Tensor<FixedPoint>& input) {
  const std::vector<std::size_t> ws = {std::size_t(cfg.out_channels), std::size_t(cfg.in_channels),
                                       std::size_t(cfg.kernel_h), std::size_t(cfg.kernel_w)};
  const std::vector<std::size_t> is = {std::size_t(cfg.in_channels), std::size_t(cfg.input_h),
                                       std::size_t(cfg.input_w)};
  if (weights.shape() != ws) throw std::invalid_argument("weight tensor shape does not match the PU config");
  if (input.shape() != is) throw std::invalid_argument("input tensor shape does not match the PU config");
}

}  // namespace detail

// Streams each input channel through one PU per output channel. At step t
// the pixel (i, j) is broadcast to every PE; PE (r, k) works on the output
// anchor (i - r, j - k). Partials move one PE right per step, and row ends
// talk to the Partial Result Buffer.
template <class Pe>
ConvRun simulate_conv(const PuConfig& cfg, const Pe& pe, const Tensor<FixedPoint>& weights,
                      const Tensor<FixedPoint>& input, std::uint64_t seed) {
  const DataflowPlan plan = schedule_conv(cfg);
  detail::check_conv_shapes(cfg, weights, input);
  const MacKeys keys{seed};
  const int kh = cfg.kernel_h, kw = cfg.kernel_w, H = cfg.input_h, W = cfg.input_w;
  const int OH = plan.output_h, OW = plan.output_w, C = cfg.in_channels;

  using Partial = typename Pe::Partial;
  using Entry = typename Pe::Entry;

  ConvRun run;
  run.output = Tensor<FixedPoint>({std::size_t(cfg.out_channels), std::size_t(OH), std::size_t(OW)},
                                  FixedPoint{0, cfg.format()});
  LayerCycles layer{"conv", 0, 0, 0};
  PartialResultBuffer<Entry> buffer(pe.entry_bits());
  // Step at which a row's last PE completed an anchor, for the reuse check.
  std::map<std::tuple<int, int, int, int>, std::int64_t> completed;
  bool have_distance = false;

  std::int64_t step = 0;
  for (int oc = 0; oc < cfg.out_channels; ++oc) {
    std::vector<FixedPoint> pu_weights;
    for (int c = 0; c < C; ++c)
      for (int r = 0; r < kh; ++r)
        for (int k = 0; k < kw; ++k) pu_weights.push_back(weights(oc, c, r, k));

    for (int c = 0; c < C; ++c) {
      std::vector<std::vector<std::optional<Partial>>> regs(kh, std::vector<std::optional<Partial>>(kw));
      for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j, ++step) {
          const FixedPoint& x = input(c, i, j);
          if constexpr (std::is_same_v<Pe, BiscPe>) {
            std::vector<FixedPoint> row_w(pu_weights.begin() + c * kh * kw, pu_weights.begin() + (c + 1) * kh * kw);
            layer.pu_cycles += pu_iteration_cycles(row_w, x, pe.impl());
          } else {
            layer.pu_cycles += pe.mac_cycles(x, x);
          }
          for (int r = 0; r < kh; ++r) {
            const int oi = i - r;
            for (int k = kw - 1; k >= 0; --k) {
              const int oj = j - k;
              if (oi < 0 || oi >= OH || oj < 0 || oj >= OW) continue;
              Partial in;
              if (k > 0) {
                in = std::move(*regs[r][k - 1]);
                regs[r][k - 1].reset();
              } else if (r == 0 && c == 0) {
                in = pe.init(keys.init(oc, oi, oj));
              } else {
                const int pc = r == 0 ? c - 1 : c;
                const int pr = r == 0 ? kh - 1 : r - 1;
                in = pe.from_buffer(buffer.read({pc, pr, oi, oj}, step), keys.buffer(oc, pc, pr, oi, oj));
              }
              const FixedPoint& w = weights(oc, c, r, k);
              Partial out = pe.mac(in, x, w, keys.mac(oc, c, r, k, oi, oj));
              ++layer.macs;
              layer.cycles += pe.mac_cycles(x, w);
              if (k < kw - 1) {
                regs[r][k] = std::move(out);
                continue;
              }
              completed[{c, r, oi, oj}] = step;
              if (r > 0) {
                const std::int64_t d = step - completed.at({c, r - 1, oi, oj});
                if (!have_distance) {
                  run.min_reuse_distance = run.max_reuse_distance = d;
                  have_distance = true;
                } else {
                  run.min_reuse_distance = std::min(run.min_reuse_distance, d);
                  run.max_reuse_distance = std::max(run.max_reuse_distance, d);
                }
              }
              if (r == kh - 1 && c == C - 1)
                run.output(oc, oi, oj) = pe.finalize(out, keys.finalize(oc, oi, oj));
              else
                buffer.write({c, r, oi, oj}, pe.to_buffer(out, keys.buffer(oc, c, r, oi, oj)), step);
            }
          }
        }
      }
    }
    if (buffer.occupancy() != 0) throw std::logic_error("partial results left in the buffer after a PU pass");
    completed.clear();
  }

  run.buffer = buffer.stats();
  run.report.backend = cfg.backend;
  run.report.clock_period_ns = cfg.clock_period_ns();
  run.report.layers.push_back(layer);
  run.report.buffer_entry_bits = run.buffer.entry_bits;
  run.report.buffer_peak_entries = run.buffer.peak_entries;
  run.report.buffer_traffic_bits = run.buffer.traffic_bits();
  return run;
}

inline ConvRun run_conv_layer(const PuConfig& cfg, const Tensor<FixedPoint>& weights, const Tensor<FixedPoint>& input,
                              std::uint64_t seed) {
  switch (cfg.backend) {
    case Backend::Bisc: return simulate_conv(cfg, BiscPe(cfg), weights, input, seed);
    case Backend::EslRaw: return simulate_conv(cfg, EslRawPe(cfg), weights, input, seed);
    case Backend::EslConvert: return simulate_conv(cfg, EslConvertPe(cfg), weights, input, seed);
  }
  throw std::invalid_argument("unknown backend");
}

inline ConvRun run_conv_layer(const PuConfig& cfg, const Tensor<double>& weights, const Tensor<double>& input,
                              std::uint64_t seed) {
  return run_conv_layer(cfg, quantize_tensor(weights, cfg.format()), quantize_tensor(input, cfg.format()), seed);
}

}  // namespace scbench

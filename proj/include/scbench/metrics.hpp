#pragma once

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "scbench/accelerator.hpp"
#include "scbench/bitstream.hpp"
#include "scbench/error.hpp"
#include "scbench/esl.hpp"
#include "scbench/random.hpp"

namespace scbench {

inline double rmse(std::span<const double> estimates, std::span<const double> truths) {
  if (estimates.size() != truths.size()) throw std::invalid_argument("rmse: length mismatch");
  if (estimates.empty()) throw std::invalid_argument("rmse: empty input");
  double sq = 0.0;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const double d = estimates[i] - truths[i];
    sq += d * d;
  }
  return std::sqrt(sq / double(estimates.size()));
}

enum class Experiment { SngError, P2bError, MulError, ArrayAdder, EslHistogram };

inline const char* to_string(Experiment e) {
  switch (e) {
    case Experiment::SngError: return "sng-error";
    case Experiment::P2bError: return "p2b-error";
    case Experiment::MulError: return "mul-error";
    case Experiment::ArrayAdder: return "array-adder";
    case Experiment::EslHistogram: return "esl-histogram";
  }
  return "?";
}

inline Experiment parse_experiment(const std::string& s) {
  for (auto e : {Experiment::SngError, Experiment::P2bError, Experiment::MulError, Experiment::ArrayAdder,
                 Experiment::EslHistogram})
    if (s == to_string(e)) return e;
  throw ConfigError("unknown experiment '" + s + "'");
}

inline ArrayAddStrategy parse_strategy(const std::string& s) {
  for (auto a : {ArrayAddStrategy::Tree, ArrayAddStrategy::Sequential, ArrayAddStrategy::Flat})
    if (s == to_string(a)) return a;
  throw ConfigError("unknown array-add strategy '" + s + "'");
}

struct SweepSpec {
  Experiment experiment = Experiment::SngError;
  int exponent_min = 6;
  int exponent_max = 13;
  double value_min = -4.0;
  double value_max = 3.0;
  int grid_points = 57;  // uniform grid over [value_min, value_max]
  int trials = 1000;
  std::uint64_t seed = 1;
  std::vector<ArrayAddStrategy> strategies = {ArrayAddStrategy::Tree, ArrayAddStrategy::Sequential,
                                              ArrayAddStrategy::Flat};
  std::vector<int> fan_ins = {2, 4, 8, 16, 32};
  EslAddVariant variant = EslAddVariant::HalfConst;
  FixedFormat p2b_format{0, 6};
  // Source for the B2P experiments: an LFSR wider than the comparator, so
  // runs of the sequence do not repeat inside one stream.
  int lfsr_width = 24;

  static SweepSpec defaults_for(Experiment e) {
    SweepSpec s;
    s.experiment = e;
    switch (e) {
      case Experiment::SngError: break;
      case Experiment::P2bError:
        s.exponent_min = 9, s.exponent_max = 13, s.value_min = -1.0, s.value_max = 1.0, s.grid_points = 33;
        break;
      case Experiment::MulError: s.exponent_min = 12, s.exponent_max = 16; break;
      case Experiment::ArrayAdder:
        s.exponent_min = 10, s.exponent_max = 10, s.value_min = -1.0, s.value_max = 1.0;
        break;
      case Experiment::EslHistogram: s.exponent_min = s.exponent_max = 2; break;
    }
    return s;
  }
};

inline void validate(const SweepSpec& s) {
  if (s.trials < 1) throw ConfigError("trials must be at least 1");
  if (s.exponent_min < 1 || s.exponent_max > kMaxStreamExponent || s.exponent_min > s.exponent_max)
    throw ConfigError("exponent range must be non-empty within [1, 16]");
  if (!(s.value_min <= s.value_max)) throw ConfigError("value range must be non-empty");
  if (s.grid_points < 1) throw ConfigError("grid_points must be at least 1");
  if (s.experiment == Experiment::ArrayAdder) {
    if (s.strategies.empty()) throw ConfigError("array-adder sweep needs at least one strategy");
    if (s.fan_ins.empty()) throw ConfigError("array-adder sweep needs at least one fan-in");
    for (int f : s.fan_ins)
      if (f < 2) throw ConfigError("fan-ins must be at least 2");
  }
  if (s.experiment == Experiment::P2bError) validate(s.p2b_format);
  if (s.experiment == Experiment::EslHistogram && s.exponent_max > 4)
    throw ConfigError("esl-histogram enumerates all stream pairs; exponent must be at most 4");
}

inline SweepSpec sweep_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("sweep spec must be a JSON object");
  if (!j.contains("experiment") || !j.at("experiment").is_string())
    throw ConfigError("sweep spec field 'experiment' is required and must be a string");
  SweepSpec s = SweepSpec::defaults_for(parse_experiment(j.at("experiment").get<std::string>()));
  static const std::vector<std::string> known = {"experiment", "exponent_min", "exponent_max", "value_min",
                                                 "value_max",  "grid_points",  "trials",       "seed",
                                                 "strategies", "fan_ins",      "variant",      "p2b_int_bits",
                                                 "p2b_frac_bits", "lfsr_width"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw ConfigError("sweep spec field '" + it.key() + "' is not recognized");
  try {
    s.exponent_min = j.value("exponent_min", s.exponent_min);
    s.exponent_max = j.value("exponent_max", s.exponent_max);
    s.value_min = j.value("value_min", s.value_min);
    s.value_max = j.value("value_max", s.value_max);
    s.grid_points = j.value("grid_points", s.grid_points);
    s.trials = j.value("trials", s.trials);
    s.seed = j.value("seed", s.seed);
    s.lfsr_width = j.value("lfsr_width", s.lfsr_width);
    s.p2b_format.int_bits = j.value("p2b_int_bits", s.p2b_format.int_bits);
    s.p2b_format.frac_bits = j.value("p2b_frac_bits", s.p2b_format.frac_bits);
    if (j.contains("strategies")) {
      s.strategies.clear();
      for (const auto& v : j.at("strategies")) s.strategies.push_back(parse_strategy(v.get<std::string>()));
    }
    if (j.contains("fan_ins")) s.fan_ins = j.at("fan_ins").get<std::vector<int>>();
    if (j.contains("variant")) {
      const auto v = j.at("variant").get<std::string>();
      if (v == "half-const")
        s.variant = EslAddVariant::HalfConst;
      else if (v == "mux-zero")
        s.variant = EslAddVariant::MuxZero;
      else
        throw ConfigError("sweep spec field 'variant' must be half-const or mux-zero");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("sweep spec has a field of the wrong type: ") + e.what());
  }
  validate(s);
  return s;
}

struct ErrorReport {
  std::string experiment;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  nlohmann::json metadata;

  std::string to_csv() const {
    std::ostringstream out;
    for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
    out << '\n';
    out << std::setprecision(10);
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
      out << '\n';
    }
    return out.str();
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["experiment"] = experiment;
    j["metadata"] = metadata;
    j["columns"] = columns;
    j["rows"] = rows;
    return j;
  }

  // Column lookup for tests and reports.
  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    throw std::out_of_range("no column " + name);
  }
};

namespace detail {

inline std::vector<double> grid(double lo, double hi, int points) {
  std::vector<double> g;
  if (points == 1) return {lo};
  for (int i = 0; i < points; ++i) g.push_back(lo + (hi - lo) * i / (points - 1));
  return g;
}

// Evaluates `point(i)` for i in [0, n) on `jobs` workers; output order is i.
template <class F>
std::vector<std::vector<double>> parallel_rows(std::size_t n, int jobs, F point) {
  std::vector<std::vector<double>> rows(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < n;) rows[i] = point(i);
  };
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return rows;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace detail

// Error of ESL B2P for value v at one stream length.
inline double sng_error_point(double v, int n, const SweepSpec& s, std::uint64_t point_seed) {
  std::vector<double> est, truth;
  const double limit = std::ldexp(1.0, n);
  for (int t = 0; t < s.trials; ++t) {
    RandomSource src = lfsr_source(derive_seed(point_seed, {std::uint64_t(t)}), std::max(s.lfsr_width, n));
    if (!fits_esl(v, n)) throw std::invalid_argument("value out of ESL range");
    est.push_back(esl_decode_saturated(esl_encode(v, n, src), limit));
    truth.push_back(v);
  }
  return rmse(est, truth);
}

inline double p2b_error_point(double v, int n, const SweepSpec& s, std::uint64_t point_seed) {
  std::vector<double> est, truth;
  for (int t = 0; t < s.trials; ++t) {
    const RandomSource src = lfsr_source(derive_seed(point_seed, {std::uint64_t(t)}));
    const EslNumber e = esl_encode(v, n, src.derive(0));
    est.push_back(esl_to_binary(e, s.p2b_format, src.derive(1)).value());
    truth.push_back(v);
  }
  return rmse(est, truth);
}

inline double mul_error_point(int n, const SweepSpec& s, std::uint64_t point_seed) {
  std::vector<double> est, truth;
  std::mt19937_64 rng(point_seed);
  const double limit = std::ldexp(1.0, n);
  for (int t = 0; t < s.trials; ++t) {
    const double a = detail::uniform(rng, s.value_min, s.value_max);
    const double b = detail::uniform(rng, s.value_min, s.value_max);
    const RandomSource src = lfsr_source(derive_seed(point_seed, {std::uint64_t(t)}));
    est.push_back(esl_decode_saturated(esl_mul(esl_encode(a, n, src.derive(0)), esl_encode(b, n, src.derive(1))), limit));
    truth.push_back(a * b);
  }
  return rmse(est, truth);
}

inline double array_adder_point(ArrayAddStrategy strategy, int f, int n, const SweepSpec& s,
                                std::uint64_t point_seed) {
  std::vector<double> est, truth;
  std::mt19937_64 rng(point_seed);
  // Estimates are clamped to the largest sum the inputs can produce.
  const double limit = f * std::max(std::fabs(s.value_min), std::fabs(s.value_max));
  for (int t = 0; t < s.trials; ++t) {
    const RandomSource src = lfsr_source(derive_seed(point_seed, {std::uint64_t(t)}));
    std::vector<EslNumber> terms;
    double sum = 0.0;
    for (int i = 0; i < f; ++i) {
      const double v = detail::uniform(rng, s.value_min, s.value_max);
      sum += v;
      terms.push_back(esl_encode(v, n, src.derive(0, std::uint64_t(i))));
    }
    est.push_back(esl_decode_saturated(esl_array_add(terms, strategy, src.derive(1), s.variant), limit));
    truth.push_back(sum);
  }
  return rmse(est, truth);
}

// Frequency of every ratio decode(X)/decode(Y) over all stream pairs of
// length 2^n with a nonzero denominator.
inline std::map<double, std::uint64_t> esl_value_histogram(int n) {
  const int len = 1 << n;
  std::vector<std::uint64_t> weight(len + 1, 0);  // streams per popcount
  for (std::uint32_t p = 0; p < (1u << len); ++p) ++weight[std::popcount(p)];
  std::map<double, std::uint64_t> hist;
  for (int px = 0; px <= len; ++px)
    for (int py = 0; py <= len; ++py) {
      const double y = 2.0 * py / len - 1.0;
      if (y == 0.0) continue;
      const double x = 2.0 * px / len - 1.0;
      double r = x / y;
      if (r == 0.0) r = 0.0;  // fold -0 into 0
      hist[r] += weight[px] * weight[py];
    }
  return hist;
}

inline std::uint64_t sweep_point_seed(const SweepSpec& s, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = derive_seed(s.seed, {std::uint64_t(s.experiment)});
  for (auto t : tags) h = derive_seed(h, {t});
  return h;
}

inline ErrorReport run_sweep(const SweepSpec& s, int jobs = 1) {
  validate(s);
  ErrorReport rep;
  rep.experiment = to_string(s.experiment);
  rep.metadata = {{"seed", s.seed},
                  {"trials", s.trials},
                  {"exponent_min", s.exponent_min},
                  {"exponent_max", s.exponent_max},
                  {"value_min", s.value_min},
                  {"value_max", s.value_max},
                  {"grid_points", s.grid_points},
                  {"sampling", "uniform grid"}};
  std::vector<int> exps;
  for (int n = s.exponent_min; n <= s.exponent_max; ++n) exps.push_back(n);
  const auto values = detail::grid(s.value_min, s.value_max, s.grid_points);

  switch (s.experiment) {
    case Experiment::SngError:
    case Experiment::P2bError: {
      rep.columns = {"exponent", "length", "value", "rmse"};
      const std::size_t nv = values.size();
      if (s.experiment == Experiment::P2bError)
        rep.metadata["p2b_format"] = {{"int_bits", s.p2b_format.int_bits}, {"frac_bits", s.p2b_format.frac_bits}};
      else
        rep.metadata["lfsr_width"] = s.lfsr_width;
      rep.rows = detail::parallel_rows(exps.size() * nv, jobs, [&](std::size_t i) {
        const int n = exps[i / nv];
        const double v = values[i % nv];
        const std::uint64_t ps = sweep_point_seed(s, {std::uint64_t(n), i % nv});
        const double e = s.experiment == Experiment::SngError ? sng_error_point(v, n, s, ps) : p2b_error_point(v, n, s, ps);
        return std::vector<double>{double(n), std::ldexp(1.0, n), v, e};
      });
      break;
    }
    case Experiment::MulError:
      rep.columns = {"exponent", "length", "rmse"};
      rep.metadata["sampling"] = "uniform random pairs";
      rep.rows = detail::parallel_rows(exps.size(), jobs, [&](std::size_t i) {
        const int n = exps[i];
        return std::vector<double>{double(n), std::ldexp(1.0, n), mul_error_point(n, s, sweep_point_seed(s, {std::uint64_t(n)}))};
      });
      break;
    case Experiment::ArrayAdder: {
      rep.columns = {"strategy", "fan_in", "exponent", "length", "rmse"};
      rep.metadata["sampling"] = "uniform random terms";
      rep.metadata["strategy_codes"] = {{"0", "tree"}, {"1", "sequential"}, {"2", "flat"}};
      rep.metadata["variant"] = s.variant == EslAddVariant::HalfConst ? "half-const" : "mux-zero";
      struct Point {
        ArrayAddStrategy st;
        int f, n;
      };
      std::vector<Point> pts;
      for (auto st : s.strategies)
        for (int f : s.fan_ins)
          for (int n : exps) pts.push_back({st, f, n});
      rep.rows = detail::parallel_rows(pts.size(), jobs, [&](std::size_t i) {
        const auto& p = pts[i];
        // The same term values and encodings for every strategy at a point.
        const std::uint64_t ps = sweep_point_seed(s, {std::uint64_t(p.f), std::uint64_t(p.n)});
        return std::vector<double>{double(int(p.st)), double(p.f), double(p.n), std::ldexp(1.0, p.n),
                                   array_adder_point(p.st, p.f, p.n, s, ps)};
      });
      break;
    }
    case Experiment::EslHistogram:
      rep.columns = {"exponent", "ratio", "count"};
      rep.metadata["sampling"] = "exhaustive";
      for (int n : exps)
        for (const auto& [r, c] : esl_value_histogram(n)) rep.rows.push_back({double(n), r, double(c)});
      break;
  }
  return rep;
}

// ---- comparison ---------------------------------------------------------------

struct BackendSummary {
  Backend backend = Backend::Bisc;
  double cycles = 0.0;
  double clock_period_ns = 0.0;
  std::int64_t buffer_entry_bits = 0;
  std::optional<double> accuracy;

  double evaluation_time_s() const { return latency_estimate(cycles, clock_period_ns); }
};

// Synthesis results carried as constants: BISC power and area relative to
// the two ESL designs (raw, convert).
struct SynthesisConstants {
  double power_ratio_esl_raw = 7.82;
  double power_ratio_esl_convert = 1.85;
  double area_ratio_esl_raw = 5.7;
  double area_ratio_esl_convert = 2.9;
};

struct ComparisonRow {
  Backend backend;
  double cycles;
  double clock_period_ns;
  double evaluation_time_s;
  double latency_vs_bisc;
  std::int64_t buffer_entry_bits;
  double footprint_vs_bisc;
  std::optional<double> accuracy;
  std::optional<double> accuracy_vs_bisc;
};

struct ComparisonReport {
  std::vector<ComparisonRow> rows;
  SynthesisConstants synthesis;

  const ComparisonRow& row(Backend b) const {
    for (const auto& r : rows)
      if (r.backend == b) return r;
    throw std::out_of_range("backend missing from comparison");
  }

  std::string to_csv() const {
    std::ostringstream out;
    out << "backend,cycles,clock_period_ns,evaluation_time_s,latency_vs_bisc,buffer_entry_bits,footprint_vs_bisc,"
           "accuracy,accuracy_vs_bisc\n";
    out << std::setprecision(10);
    for (const auto& r : rows) {
      out << to_string(r.backend) << ',' << r.cycles << ',' << r.clock_period_ns << ',' << r.evaluation_time_s << ','
          << r.latency_vs_bisc << ',' << r.buffer_entry_bits << ',' << r.footprint_vs_bisc << ',';
      if (r.accuracy) out << *r.accuracy;
      out << ',';
      if (r.accuracy_vs_bisc) out << *r.accuracy_vs_bisc;
      out << '\n';
    }
    return out.str();
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    for (const auto& r : rows) {
      nlohmann::json o = {{"backend", to_string(r.backend)},
                          {"cycles", r.cycles},
                          {"clock_period_ns", r.clock_period_ns},
                          {"evaluation_time_s", r.evaluation_time_s},
                          {"latency_vs_bisc", r.latency_vs_bisc},
                          {"buffer_entry_bits", r.buffer_entry_bits},
                          {"footprint_vs_bisc", r.footprint_vs_bisc}};
      o["accuracy"] = r.accuracy ? nlohmann::json(*r.accuracy) : nlohmann::json(nullptr);
      o["accuracy_vs_bisc"] = r.accuracy_vs_bisc ? nlohmann::json(*r.accuracy_vs_bisc) : nlohmann::json(nullptr);
      j["backends"].push_back(o);
    }
    j["synthesis_constants"] = {{"power_bisc_advantage_vs_esl_raw", synthesis.power_ratio_esl_raw},
                                {"power_bisc_advantage_vs_esl_convert", synthesis.power_ratio_esl_convert},
                                {"area_bisc_advantage_vs_esl_raw", synthesis.area_ratio_esl_raw},
                                {"area_bisc_advantage_vs_esl_convert", synthesis.area_ratio_esl_convert},
                                {"note", "documented constants, not derived"}};
    return j;
  }
};

// Ratios are taken against the BISC summary, which must be present.
inline ComparisonReport comparison_report(std::span<const BackendSummary> summaries) {
  const BackendSummary* base = nullptr;
  for (const auto& s : summaries)
    if (s.backend == Backend::Bisc) base = &s;
  if (!base) throw std::invalid_argument("comparison needs a bisc summary");
  for (auto b : {Backend::EslRaw, Backend::EslConvert})
    if (std::none_of(summaries.begin(), summaries.end(), [&](const auto& s) { return s.backend == b; }))
      throw std::invalid_argument(std::string("comparison is missing backend ") + to_string(b));
  ComparisonReport rep;
  const double t0 = base->evaluation_time_s();
  for (const auto& s : summaries) {
    ComparisonRow r{s.backend,
                    s.cycles,
                    s.clock_period_ns,
                    s.evaluation_time_s(),
                    t0 > 0 ? s.evaluation_time_s() / t0 : 0.0,
                    s.buffer_entry_bits,
                    base->buffer_entry_bits ? double(s.buffer_entry_bits) / double(base->buffer_entry_bits) : 0.0,
                    s.accuracy,
                    std::nullopt};
    if (s.accuracy && base->accuracy && *base->accuracy > 0) r.accuracy_vs_bisc = *s.accuracy / *base->accuracy;
    rep.rows.push_back(r);
  }
  return rep;
}

// LeNet-5 totals of the synthesized designs: measured BISC cycles and
// #MAC x 512 for both ESL designs; buffer entries for 2^9-bit streams.
inline std::vector<BackendSummary> reference_summaries() {
  const ClockPeriods clk;
  const FixedFormat fmt{2, 6};
  const double esl_cycles = 406800.0 * 512.0;
  return {{Backend::Bisc, 7.01e6, clk.bisc, buffer_entry_bits(Backend::Bisc, 9, fmt), std::nullopt},
          {Backend::EslRaw, esl_cycles, clk.esl_raw, buffer_entry_bits(Backend::EslRaw, 9, fmt), std::nullopt},
          {Backend::EslConvert, esl_cycles, clk.esl_convert, buffer_entry_bits(Backend::EslConvert, 9, fmt),
           std::nullopt}};
}

}  // namespace scbench

// One PASS/FAIL/SKIP line per acceptance criterion; nonzero exit on any FAIL.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <random>

#include "scbench/scbench.hpp"
#include "support/oracles.hpp"

using namespace scbench;

namespace {

enum class Verdict { Pass, Fail, Skip };

struct Outcome {
  Verdict verdict;
  std::string detail;
};

Outcome check(bool ok, std::string detail) { return {ok ? Verdict::Pass : Verdict::Fail, std::move(detail)}; }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

StochasticStream rotate(const StochasticStream& s, std::size_t d) {
  StochasticStream r(s.exponent(), s.format());
  for (std::size_t t = 0; t < s.length(); ++t) r.set(t, s.bit((t + d) % s.length()));
  return r;
}

Outcome c1_round_trip() {
  for (int n : {4, 6, 8}) {
    const int len = 1 << n;
    for (auto f : {Format::Unipolar, Format::Bipolar})
      for (int k = 0; k <= len; ++k) {
        const double v = f == Format::Unipolar ? double(k) / len : 2.0 * k / len - 1.0;
        for (std::uint64_t seed : {1u, 2u, 3u}) {
          const double got = decode(sng_encode(v, f, n, full_period_source(seed)));
          if (got != v) return check(false, fmt("N=%d v=%g decoded %g", n, v, got));
        }
      }
  }
  return check(true, "every representable value at N=4,6,8, both formats, 3 seeds");
}

Outcome c2_multiplier() {
  const int len = 16;
  double worst = 0;
  for (int ka = 0; ka <= len; ++ka)
    for (int kb = 0; kb <= len; ++kb) {
      const double a = 2.0 * ka / len - 1, b = 2.0 * kb / len - 1;
      const auto sa = sng_encode(a, Format::Bipolar, 4, full_period_source(11));
      const auto sb = sng_encode(b, Format::Bipolar, 4, full_period_source(12));
      double sum = 0;
      for (int d = 0; d < len; ++d) sum += decode(sc_mul(sa, rotate(sb, std::size_t(d))));
      worst = std::max(worst, std::fabs(sum / len - a * b));
    }
  std::vector<double> est, truth;
  for (int i = 0; i < 17; ++i)
    for (int j = 0; j < 17; ++j) {
      const double a = -1 + i / 8.0, b = -1 + j / 8.0;
      for (std::uint64_t t = 0; t < 10; ++t) {
        const auto seed = derive_seed(2, {std::uint64_t(i), std::uint64_t(j), t});
        const auto sa = sng_encode(a, Format::Bipolar, 10, lfsr_source(derive_seed(seed, {0})));
        const auto sb = sng_encode(b, Format::Bipolar, 10, lfsr_source(derive_seed(seed, {1})));
        est.push_back(decode(sc_mul(sa, sb)));
        truth.push_back(a * b);
      }
    }
  const double e = rmse(est, truth);
  return check(worst < 1e-12 && e < 0.05,
               fmt("N=4 exhaustive max |E-ab| = %.2e; N=10 17x17 grid RMSE = %.4f (< 0.05)", worst, e));
}

Outcome c3_bisc() {
  const FixedFormat f{0, 4};
  double worst = 0;
  for (int x = 0; x < 16; ++x)
    for (int w = 0; w < 16; ++w) {
      const auto r = bisc_mac(FixedPoint{x, f}, FixedPoint{w, f}, BiscImpl::InputCounted, 0);
      worst = std::max(worst, std::fabs(r.acc / 16.0 - (x / 16.0) * (w / 16.0)));
    }
  std::map<int, int> counts;
  for (int s : selector_sequence(4)) ++counts[s];
  const bool sel = counts[3] == 8 && counts[2] == 4 && counts[1] == 2 && counts[0] == 1;
  return check(worst <= 2.0 / 16 && sel,
               fmt("max error %.4f (<= 0.125); selector counts %d/%d/%d/%d", worst, counts[3], counts[2], counts[1],
                   counts[0]));
}

Outcome c4_esl_adder() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.9, 0.9);
  std::map<EslAddVariant, std::pair<std::vector<double>, std::vector<double>>> res;
  for (int t = 0; t < 1000; ++t) {
    const double a = u(rng), b = u(rng);
    const auto src = lfsr_source(derive_seed(4, {std::uint64_t(t)}));
    const auto ea = esl_encode(a, 13, src.derive(0)), eb = esl_encode(b, 13, src.derive(1));
    for (auto v : {EslAddVariant::HalfConst, EslAddVariant::MuxZero}) {
      res[v].first.push_back(esl_decode_saturated(esl_add2(ea, eb, v, src.derive(2)), 2.0));
      res[v].second.push_back(a + b);
    }
  }
  const double h = rmse(res[EslAddVariant::HalfConst].first, res[EslAddVariant::HalfConst].second);
  const double m = rmse(res[EslAddVariant::MuxZero].first, res[EslAddVariant::MuxZero].second);
  return check(h < 0.1 && m < 0.1, fmt("RMSE half-constant %.4f, mux-zero %.4f (< 0.1)", h, m));
}

Outcome c5_array_adder() {
  auto s = SweepSpec::defaults_for(Experiment::ArrayAdder);
  s.fan_ins = {8, 16, 32};
  s.trials = 1000;
  const auto rep = run_sweep(s, 4);
  std::map<int, std::map<int, double>> by;  // fan-in -> strategy -> rmse
  for (const auto& r : rep.rows) by[int(r[1])][int(r[0])] = r[4];
  bool ok = true;
  std::string d;
  for (auto& [f, m] : by) {
    ok = ok && m[0] < m[1] && m[0] < m[2];
    d += fmt("f=%d tree %.3f seq %.3f flat %.3f; ", f, m[0], m[1], m[2]);
  }
  return check(ok, d);
}

Outcome c6_latency() {
  const auto rep = comparison_report(reference_summaries());
  const double r = rep.row(Backend::EslRaw).latency_vs_bisc, c = rep.row(Backend::EslConvert).latency_vs_bisc;
  return check(std::fabs(r / 47.6 - 1) < 0.01 && std::fabs(c / 50.6 - 1) < 0.01,
               fmt("esl-raw %.2fx, esl-convert %.2fx (47.6 / 50.6 within 1%%)", r, c));
}

Outcome c7_footprint() {
  const auto rep = comparison_report(reference_summaries());
  const double r = rep.row(Backend::EslRaw).footprint_vs_bisc;
  return check(int(r) == 113 && std::fabs(r - 1024.0 / 9) < 1e-9, fmt("esl-raw / binary entry = %.2f", r));
}

Outcome c8_dataflow() {
  std::mt19937_64 rng(8);
  auto pick = [&](int lo, int hi) { return lo + int(rng() % unsigned(hi - lo + 1)); };
  int checked = 0;
  for (auto b : {Backend::Bisc, Backend::EslRaw, Backend::EslConvert})
    for (int i = 0; i < 100; ++i) {
      PuConfig cfg;
      cfg.backend = b;
      cfg.kernel_w = pick(1, 3), cfg.kernel_h = pick(1, 3);
      cfg.input_w = pick(cfg.kernel_w, 6), cfg.input_h = pick(cfg.kernel_h, 6);
      cfg.in_channels = pick(1, 3), cfg.out_channels = pick(1, 3);
      cfg.sn_exponent = 5;
      const auto f = cfg.format();
      std::uniform_int_distribution<std::int64_t> code(f.min_raw(), f.max_raw());
      Tensor<FixedPoint> w({std::size_t(cfg.out_channels), std::size_t(cfg.in_channels), std::size_t(cfg.kernel_h),
                            std::size_t(cfg.kernel_w)});
      Tensor<FixedPoint> x({std::size_t(cfg.in_channels), std::size_t(cfg.input_h), std::size_t(cfg.input_w)});
      for (auto& v : w.data()) v = FixedPoint{code(rng), f};
      for (auto& v : x.data()) v = FixedPoint{code(rng), f};
      const std::uint64_t seed = rng();
      const auto run = run_conv_layer(cfg, w, x, seed);
      Tensor<FixedPoint> want;
      switch (b) {
        case Backend::Bisc: want = oracle::direct_conv(cfg, BiscPe(cfg), w, x, seed); break;
        case Backend::EslRaw: want = oracle::direct_conv(cfg, EslRawPe(cfg), w, x, seed); break;
        case Backend::EslConvert: want = oracle::direct_conv(cfg, EslConvertPe(cfg), w, x, seed); break;
      }
      if (!(run.output == want)) return check(false, fmt("%s layer %d differs", to_string(b), i));
      ++checked;
    }
  return check(true, fmt("%d random layers bit-exact (100 per backend)", checked));
}

Outcome c9_lenet() {
  const char* wpath = std::getenv("SCBENCH_WEIGHTS");
  const char* mdir = std::getenv("SCBENCH_MNIST_DIR");
  if (!wpath || !mdir) return {Verdict::Skip, "set SCBENCH_WEIGHTS and SCBENCH_MNIST_DIR to run; criterion 10 stands in"};
  namespace fs = std::filesystem;
  const auto model = import_weights(std::string(wpath));
  const auto data =
      load_mnist((fs::path(mdir) / "t10k-images-idx3-ubyte").string(), (fs::path(mdir) / "t10k-labels-idx1-ubyte").string(), 1000);
  const int jobs = int(std::max(1u, std::thread::hardware_concurrency()));
  auto acc = [&](NnBackend k, std::size_t limit) {
    BackendConfig cfg;
    cfg.kind = k;
    return evaluate_accuracy(model, data, cfg, 9, jobs, limit).accuracy();
  };
  const double fl = acc(NnBackend::Float, 0), fx = acc(NnBackend::Fixed, 0), bi = acc(NnBackend::Bisc, 0);
  const double er = acc(NnBackend::EslRaw, 100), ec = acc(NnBackend::EslConvert, 100);
  const bool ok = std::fabs(fl - 0.958) < 1e-9 && fx >= 0.948 && std::fabs(bi - 0.93) <= 0.02 && er <= 0.30 && ec <= er;
  return check(ok, fmt("float %.3f, fixed %.3f, bisc %.3f, esl-raw %.3f, esl-convert %.3f (ESL on 100 images)", fl, fx,
                       bi, er, ec));
}

// Five random models, each rescaled on its own calibration images; agreement
// is pooled over all 1000 predictions and reported per model as well.
Outcome c10_fallback() {
  const int jobs = int(std::max(1u, std::thread::hardware_concurrency()));
  std::size_t fx_fl = 0, bi_fx = 0, total = 0;
  std::vector<double> e_bi, e_er, e_ec, t_bi, t_er, t_ec;
  std::string per_model;
  for (std::uint64_t seed = 10; seed < 15; ++seed) {
    const auto model = fixtures::calibrated_model(seed, fixtures::synthetic_images(50, seed + 1000));
    const auto data = fixtures::synthetic_images(200, seed);
    auto run = [&](NnBackend k, std::size_t limit) {
      BackendConfig cfg;
      cfg.kind = k;
      return evaluate_accuracy(model, data, cfg, seed, jobs, limit);
    };
    const auto fl = run(NnBackend::Float, 0), fx = run(NnBackend::Fixed, 0), bi = run(NnBackend::Bisc, 0);
    std::size_t a = 0, b = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      a += fx.predictions[i] == fl.predictions[i];
      b += bi.predictions[i] == fx.predictions[i];
    }
    fx_fl += a, bi_fx += b, total += data.size();
    per_model += fmt(" %.2f/%.2f", a / 200.0, b / 200.0);
    // Output error against float on the first 40 inputs of every model.
    const std::size_t esl_images = 40;
    const auto er = run(NnBackend::EslRaw, esl_images), ec = run(NnBackend::EslConvert, esl_images);
    for (std::size_t i = 0; i < esl_images; ++i) {
      const auto& ref = fl.scores[i];
      auto add = [&](std::vector<double>& e, std::vector<double>& t, const std::vector<double>& s) {
        e.insert(e.end(), s.begin(), s.end());
        t.insert(t.end(), ref.begin(), ref.end());
      };
      add(e_bi, t_bi, bi.scores[i]);
      add(e_er, t_er, er.scores[i]);
      add(e_ec, t_ec, ec.scores[i]);
    }
  }
  const double a1 = double(fx_fl) / double(total), a2 = double(bi_fx) / double(total);
  const double rb = rmse(e_bi, t_bi), rr = rmse(e_er, t_er), rc = rmse(e_ec, t_ec);
  return check(a1 >= 0.95 && a2 >= 0.90 && rr > rb && rc > rb,
               fmt("pooled fixed~float %.3f (>= 0.95), bisc~fixed %.3f (>= 0.90); per model%s; output RMSE bisc "
                   "%.4f, esl-raw %.4f, esl-convert %.4f",
                   a1, a2, per_model.c_str(), rb, rr, rc));
}

Outcome c11_constants() {
  const auto j = comparison_report(reference_summaries()).to_json();
  const auto& s = j.at("synthesis_constants");
  const bool ok = s.at("power_bisc_advantage_vs_esl_raw") == 7.82 && s.at("power_bisc_advantage_vs_esl_convert") == 1.85 &&
                  s.at("area_bisc_advantage_vs_esl_raw") == 5.7 && s.at("area_bisc_advantage_vs_esl_convert") == 2.9;
  return check(ok, "power 7.82x/1.85x, area 5.7x/2.9x carried as documented constants only");
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"round-trip exactness", c1_round_trip},     {"gate multiplier", c2_multiplier},
      {"bisc mac brute force", c3_bisc},           {"esl adder unbiasedness", c4_esl_adder},
      {"array-adder ranking", c5_array_adder},     {"latency ratios", c6_latency},
      {"footprint ratio", c7_footprint},           {"dataflow equivalence", c8_dataflow},
      {"lenet end-to-end accuracy", c9_lenet},     {"weight-free fallback", c10_fallback},
      {"synthesis constants", c11_constants}};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {Verdict::Fail, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const char* tag = o.verdict == Verdict::Pass ? "PASS" : o.verdict == Verdict::Fail ? "FAIL" : "SKIP";
    failed += o.verdict == Verdict::Fail;
    std::printf("[%s] %2zu %-26s %s (%.2fs)\n", tag, i + 1, criteria[i].first, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d criteria failed\n", failed);
  return failed ? 1 : 0;
}

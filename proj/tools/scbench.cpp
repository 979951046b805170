#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "scbench/scbench.hpp"

namespace fs = std::filesystem;
using namespace scbench;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kConfigError = 2, kDataError = 3, kComputeError = 4 };

// Settings shared by all subcommands: config file first, flags on top.
struct Settings {
  std::string config_path;
  std::uint64_t seed = 1;
  int jobs = 1;
  std::string backend = "float";
  int sn_exponent = 9;
  int int_bits = 2;
  int frac_bits = 6;
  std::string out_dir = "scbench-out";
  std::string weights;
  std::string mnist_dir;
  std::string images;
  std::string labels;
  std::size_t limit = 1000;
  std::string source = "lfsr";
};

const std::vector<std::string>& run_keys() {
  static const std::vector<std::string> keys = {"seed",    "jobs",      "backend", "sn_exponent", "int_bits",
                                                "frac_bits", "out_dir", "weights", "mnist_dir",  "images",
                                                "labels",  "limit",     "source"};
  return keys;
}

std::uint64_t parse_seed(const std::string& s, const std::string& what) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError(what + " is not an unsigned integer: '" + s + "'");
  return v;
}

RandomSource make_source(const std::string& name, std::uint64_t seed) {
  if (name == "lfsr") return lfsr_source(seed);
  if (name == "full-period") return full_period_source(seed);
  throw ConfigError("source must be lfsr or full-period, got '" + name + "'");
}

// Collects written files and emits the manifest last.
class Outputs {
 public:
  Outputs(std::string dir, std::string command, std::vector<std::string> argv, const Settings& s)
      : dir_(std::move(dir)), manifest_{{"command", std::move(command)}, {"argv", std::move(argv)},
                                        {"config", s.config_path.empty() ? json(nullptr) : json(s.config_path)},
                                        {"seed", s.seed},
                                        {"jobs", s.jobs},
                                        {"out_dir", dir_},
                                        {"artifacts", json::object()}} {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw DataError("cannot create output directory " + dir_ + ": " + ec.message());
  }

  void write(const std::string& name, const std::string& text) {
    const std::vector<std::uint8_t> bytes(text.begin(), text.end());
    write(name, bytes);
  }
  void write(const std::string& name, const std::vector<std::uint8_t>& bytes) {
    const std::string path = (fs::path(dir_) / name).string();
    write_file(path, bytes);
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
    manifest_["artifacts"][name] = {{"fnv1a64", hex}, {"bytes", bytes.size()}};
    std::cout << "wrote " << path << '\n';
  }
  json& manifest() { return manifest_; }
  void finish() {
    const std::string text = manifest_.dump(2) + "\n";
    write_file((fs::path(dir_) / "manifest.json").string(), std::vector<std::uint8_t>(text.begin(), text.end()));
  }

 private:
  std::string dir_;
  json manifest_;
};

std::string mnist_file(const std::string& dir, std::initializer_list<const char*> names) {
  for (const char* n : names) {
    const auto p = fs::path(dir) / n;
    if (fs::exists(p)) return p.string();
  }
  throw DataError("no MNIST file " + std::string(*names.begin()) + " in " + dir);
}

Dataset load_test_set(const Settings& s) {
  std::string img = s.images, lbl = s.labels;
  if (img.empty() || lbl.empty()) {
    if (s.mnist_dir.empty()) throw ConfigError("need --mnist-dir or both --images and --labels");
    if (img.empty()) img = mnist_file(s.mnist_dir, {"t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"});
    if (lbl.empty()) lbl = mnist_file(s.mnist_dir, {"t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"});
  }
  return load_mnist(img, lbl, s.limit);
}

ModelWeights load_model(const Settings& s) {
  if (s.weights.empty()) throw ConfigError("need --weights");
  return import_weights(s.weights);
}

BackendConfig backend_config(const Settings& s, NnBackend kind) {
  BackendConfig cfg;
  cfg.kind = kind;
  cfg.format = {s.int_bits, s.frac_bits};
  validate(cfg.format);
  if (s.sn_exponent < 1 || s.sn_exponent > 20) throw ConfigError("sn_exponent must be in [1, 20]");
  cfg.sn_exponent = s.sn_exponent;
  cfg.source = make_source(s.source, 0).kind;
  return cfg;
}

std::string cycles_csv(const CycleReport& r, std::size_t images) {
  std::ostringstream out;
  out << std::setprecision(12) << "layer,macs,cycles,pu_cycles,cycles_per_image\n";
  const double n = images ? double(images) : 1.0;
  for (const auto& l : r.layers)
    out << l.name << ',' << l.macs << ',' << l.cycles << ',' << l.pu_cycles << ',' << double(l.cycles) / n << '\n';
  out << "total," << r.macs() << ',' << r.total_cycles() << ',' << r.pu_cycles() << ','
      << double(r.total_cycles()) / n << '\n';
  return out.str();
}

int cmd_encode_demo(double value, const std::string& format, const Settings& s) {
  Format f;
  if (format == "unipolar")
    f = Format::Unipolar;
  else if (format == "bipolar")
    f = Format::Bipolar;
  else
    throw ConfigError("format must be unipolar or bipolar");
  const double lo = f == Format::Unipolar ? 0.0 : -1.0;
  if (!(value >= lo && value <= 1.0))
    throw ConfigError("value " + std::to_string(value) + " is outside the " + format + " range");
  if (s.sn_exponent < 1 || s.sn_exponent > 16) throw ConfigError("--sn-exp must be in [1, 16] for the demo");
  const auto stream = sng_encode(value, f, s.sn_exponent, make_source(s.source, s.seed));
  std::string bits;
  for (std::size_t t = 0; t < stream.length(); ++t) bits += stream.bit(t) ? '1' : '0';
  std::cout << "stream: " << bits << "\nlength: " << stream.length() << "\npopcount: " << stream.popcount()
            << "\ndecoded: " << decode(stream) << '\n';
  return kOk;
}

int cmd_lenet(const Settings& s, Outputs& out) {
  const auto kind = parse_nn_backend(s.backend);
  const auto cfg = backend_config(s, kind);
  const auto model = load_model(s);
  const auto data = load_test_set(s);
  const auto res = evaluate_accuracy(model, data, cfg, s.seed, s.jobs);
  json j = {{"backend", to_string(kind)},
            {"accuracy", res.accuracy()},
            {"correct", res.correct},
            {"total", res.total},
            {"format", {{"int_bits", s.int_bits}, {"frac_bits", s.frac_bits}}},
            {"seed", s.seed},
            {"predictions", res.predictions}};
  if (is_stochastic(kind)) {
    j["sn_exponent"] = s.sn_exponent;
    j["cycles_total"] = res.cycles.total_cycles();
    j["cycles_per_image"] = double(res.cycles.total_cycles()) / double(res.total);
    j["clock_period_ns"] = res.cycles.clock_period_ns;
    j["evaluation_time_per_image_s"] = res.cycles.evaluation_time_s() / double(res.total);
  }
  const std::string stem = std::string("lenet-") + to_string(kind);
  out.write(stem + ".json", j.dump(2) + "\n");
  if (is_stochastic(kind)) out.write(stem + "-cycles.csv", cycles_csv(res.cycles, res.total));
  std::cout << to_string(kind) << " accuracy " << res.accuracy() << " (" << res.correct << '/' << res.total << ")\n";
  return kOk;
}

int cmd_sweep(const std::string& spec_path, const Settings& s, bool seed_given, Outputs& out) {
  std::ifstream in(spec_path);
  if (!in) throw ConfigError("cannot open sweep spec " + spec_path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(spec_path + ": " + e.what());
  }
  auto spec = sweep_spec_from_json(j);
  if (seed_given || !j.contains("seed")) spec.seed = s.seed;
  const auto rep = run_sweep(spec, s.jobs);
  out.manifest()["sweep_spec"] = spec_path;
  out.write(std::string(to_string(spec.experiment)) + ".csv", rep.to_csv());
  out.write(std::string(to_string(spec.experiment)) + ".json", rep.to_json().dump(2) + "\n");
  return kOk;
}

int cmd_compare(const Settings& s, bool reference, Outputs& out) {
  std::vector<BackendSummary> rows;
  if (reference || s.weights.empty()) {
    std::cout << "using reference LeNet-5 cycle totals\n";
    rows = reference_summaries();
  } else {
    const auto model = load_model(s);
    const auto data = load_test_set(s);
    for (auto kind : {NnBackend::Bisc, NnBackend::EslRaw, NnBackend::EslConvert}) {
      const auto cfg = backend_config(s, kind);
      const auto res = evaluate_accuracy(model, data, cfg, s.seed, s.jobs);
      const Backend b = accelerator_backend(kind);
      rows.push_back({b, double(res.cycles.total_cycles()) / double(res.total), cfg.clocks.of(b),
                      buffer_entry_bits(b, cfg.sn_exponent, cfg.format), res.accuracy()});
      std::cout << to_string(kind) << " accuracy " << res.accuracy() << '\n';
    }
  }
  const auto rep = comparison_report(rows);
  out.write("comparison.csv", rep.to_csv());
  out.write("comparison.json", rep.to_json().dump(2) + "\n");
  for (const auto& r : rep.rows)
    std::cout << to_string(r.backend) << ": latency x" << r.latency_vs_bisc << ", buffer x" << r.footprint_vs_bisc
              << '\n';
  return kOk;
}

int cmd_import(const std::string& src, const std::string& dst_name, Outputs& out) {
  const auto model = import_weights(src);
  const auto bytes = export_container(model);
  for (const auto& l : model.layers) {
    std::cout << to_string(l.spec.kind);
    if (!l.weights.shape().empty()) {
      std::cout << " [";
      for (std::size_t i = 0; i < l.weights.rank(); ++i) std::cout << (i ? "x" : "") << l.weights.dim(i);
      std::cout << ']';
    }
    std::cout << '\n';
  }
  std::cout << "output shape " << check_model(model).c << '\n';
  out.write(dst_name, bytes);
  return kOk;
}

// Runs one conv layer with random operands through the PU dataflow model.
int cmd_simulate(const KeyValueConfig& kv, const Settings& s, Outputs& out) {
  PuConfig pu;
  pu.backend = Backend::Bisc;
  pu.int_bits = s.int_bits;
  pu.frac_bits = s.frac_bits;
  pu.sn_exponent = s.sn_exponent;
  if (s.backend != "float") pu.backend = parse_backend(s.backend);
  pu = pu_config_from(kv, pu);
  validate(pu);
  std::mt19937_64 rng(derive_seed(s.seed, {0x51A}));
  const double hi = std::ldexp(1.0, pu.int_bits);
  std::uniform_real_distribution<double> u(-hi, hi);
  Tensor<double> w({std::size_t(pu.out_channels), std::size_t(pu.in_channels), std::size_t(pu.kernel_h),
                    std::size_t(pu.kernel_w)});
  Tensor<double> x({std::size_t(pu.in_channels), std::size_t(pu.input_h), std::size_t(pu.input_w)});
  for (double& v : w.data()) v = u(rng);
  for (double& v : x.data()) v = u(rng);
  const auto run = run_conv_layer(pu, w, x, s.seed);
  out.write("pu-cycles.csv", cycles_csv(run.report, 1));
  json j = {{"backend", to_string(pu.backend)},
            {"cycles", run.report.total_cycles()},
            {"pu_cycles", run.report.pu_cycles()},
            {"evaluation_time_s", run.report.evaluation_time_s()},
            {"buffer",
             {{"entry_bits", run.buffer.entry_bits},
              {"writes", run.buffer.writes},
              {"reads", run.buffer.reads},
              {"peak_entries", run.buffer.peak_entries},
              {"capacity_bits", run.buffer.capacity_bits()},
              {"traffic_bits", run.buffer.traffic_bits()}}},
            {"reuse_distance", {run.min_reuse_distance, run.max_reuse_distance}}};
  out.write("pu-report.json", j.dump(2) + "\n");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic-computing accelerator benchmark"};
  app.require_subcommand(1);
  Settings s;
  if (const char* env = std::getenv("SCBENCH_SEED")) {
    try {
      s.seed = parse_seed(env, "SCBENCH_SEED");
    } catch (const ConfigError& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kConfigError;
    }
  }
  Settings flags = s;
  std::string config_path;
  app.add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", flags.seed, "master seed (default $SCBENCH_SEED or 1)");
  auto* jobs_opt = app.add_option("--jobs", flags.jobs, "worker threads")->check(CLI::PositiveNumber);
  auto* backend_opt = app.add_option("--backend", flags.backend, "float, fixed, bisc, esl-raw, esl-convert");
  auto* sn_opt = app.add_option("--sn-exp", flags.sn_exponent, "stream length exponent");
  auto* out_opt = app.add_option("--out-dir", flags.out_dir, "output directory");
  auto* ib_opt = app.add_option("--int-bits", flags.int_bits, "fixed-point integer bits");
  auto* fb_opt = app.add_option("--frac-bits", flags.frac_bits, "fixed-point fraction bits");
  auto* src_opt = app.add_option("--source", flags.source, "random source: lfsr or full-period");
  app.fallthrough();

  auto* demo = app.add_subcommand("encode-demo", "encode one value and print the stream");
  double demo_value = 0.0;
  std::string demo_format = "unipolar";
  demo->add_option("value", demo_value, "value to encode")->required();
  demo->add_option("--format", demo_format, "unipolar or bipolar");

  auto add_data_opts = [&](CLI::App* c, std::vector<CLI::Option*>& opts) {
    opts.push_back(c->add_option("--weights", flags.weights, "weight file: container, LeNet dump or text dump"));
    opts.push_back(c->add_option("--mnist-dir", flags.mnist_dir, "directory with the t10k IDX files"));
    opts.push_back(c->add_option("--images", flags.images, "IDX image file"));
    opts.push_back(c->add_option("--labels", flags.labels, "IDX label file"));
    opts.push_back(c->add_option("--limit", flags.limit, "number of test images")->check(CLI::PositiveNumber));
  };
  std::vector<CLI::Option*> lenet_opts, compare_opts;
  auto* lenet = app.add_subcommand("lenet", "LeNet-5 accuracy and cycle counts for one backend");
  add_data_opts(lenet, lenet_opts);

  auto* sweep = app.add_subcommand("sweep", "run an error sweep from a JSON spec");
  std::string spec_path;
  sweep->add_option("spec", spec_path, "sweep spec JSON")->required();

  auto* compare = app.add_subcommand("compare", "latency, buffer and accuracy comparison of the SC backends");
  bool reference = false;
  add_data_opts(compare, compare_opts);
  compare->add_flag("--reference", reference, "use the reference LeNet-5 cycle totals");

  auto* imp = app.add_subcommand("import-weights", "convert a weight dump to the container format");
  std::string import_src, import_dst = "weights.scbw";
  imp->add_option("source", import_src, "weight dump")->required();
  imp->add_option("-o,--output", import_dst, "container file name inside --out-dir");

  app.add_subcommand("simulate", "run one conv layer through the PU dataflow model (PU keys from --config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    KeyValueConfig kv;
    if (!config_path.empty()) {
      kv = KeyValueConfig::load(config_path);
      const auto& pu_keys = pu_config_keys();
      for (const auto& [k, v] : kv.values())
        if (std::find(run_keys().begin(), run_keys().end(), k) == run_keys().end() &&
            std::find(pu_keys.begin(), pu_keys.end(), k) == pu_keys.end())
          throw ConfigError(config_path + ": unknown key '" + k + "'");
      s.config_path = config_path;
      if (kv.has("seed")) s.seed = parse_seed(kv.get_string("seed", ""), "config key 'seed'");
      s.jobs = kv.get_int("jobs", s.jobs);
      s.backend = kv.get_string("backend", s.backend);
      s.sn_exponent = kv.get_int("sn_exponent", s.sn_exponent);
      s.int_bits = kv.get_int("int_bits", s.int_bits);
      s.frac_bits = kv.get_int("frac_bits", s.frac_bits);
      s.out_dir = kv.get_string("out_dir", s.out_dir);
      s.weights = kv.get_string("weights", s.weights);
      s.mnist_dir = kv.get_string("mnist_dir", s.mnist_dir);
      s.images = kv.get_string("images", s.images);
      s.labels = kv.get_string("labels", s.labels);
      s.limit = std::size_t(kv.get_int("limit", int(s.limit)));
      s.source = kv.get_string("source", s.source);
    }
    auto take = [](CLI::Option* o, auto& dst, const auto& src) {
      if (o->count()) dst = src;
    };
    take(seed_opt, s.seed, flags.seed);
    take(jobs_opt, s.jobs, flags.jobs);
    take(backend_opt, s.backend, flags.backend);
    take(sn_opt, s.sn_exponent, flags.sn_exponent);
    take(out_opt, s.out_dir, flags.out_dir);
    take(ib_opt, s.int_bits, flags.int_bits);
    take(fb_opt, s.frac_bits, flags.frac_bits);
    take(src_opt, s.source, flags.source);
    for (auto* group : {&lenet_opts, &compare_opts}) {
      take((*group)[0], s.weights, flags.weights);
      take((*group)[1], s.mnist_dir, flags.mnist_dir);
      take((*group)[2], s.images, flags.images);
      take((*group)[3], s.labels, flags.labels);
      take((*group)[4], s.limit, flags.limit);
    }
    if (s.jobs < 1) throw ConfigError("jobs must be positive");
    if (s.limit == 0) throw ConfigError("limit must be positive");
    make_source(s.source, 0);

    if (demo->parsed()) return cmd_encode_demo(demo_value, demo_format, s);
    const std::string name = app.get_subcommands().front()->get_name();
    Outputs out(s.out_dir, name, args, s);
    int rc = kOk;
    if (lenet->parsed()) rc = cmd_lenet(s, out);
    if (sweep->parsed()) rc = cmd_sweep(spec_path, s, seed_opt->count() > 0 || kv.has("seed"), out);
    if (compare->parsed()) rc = cmd_compare(s, reference, out);
    if (imp->parsed()) rc = cmd_import(import_src, import_dst, out);
    if (name == "simulate") rc = cmd_simulate(kv, s, out);
    out.finish();
    return rc;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kComputeError;
  }
}

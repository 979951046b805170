#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "scbench/error.hpp"
#include "scbench/nn.hpp"

namespace scbench {

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw DataError("short write to " + path);
}

inline std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

// ---- IDX ------------------------------------------------------------------

struct IdxFile {
  std::uint8_t type = 0;  // 0x08 u8, 0x09 i8, 0x0B i16, 0x0C i32, 0x0D f32, 0x0E f64
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;

  std::size_t count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

inline std::size_t idx_element_size(std::uint8_t type) {
  switch (type) {
    case 0x08:
    case 0x09: return 1;
    case 0x0B: return 2;
    case 0x0C:
    case 0x0D: return 4;
    case 0x0E: return 8;
    default: return 0;
  }
}

inline IdxFile parse_idx(const std::vector<std::uint8_t>& bytes, const std::string& name = "idx") {
  if (bytes.size() < 4) throw DataError(name + ": too short for an IDX header");
  if (bytes[0] != 0 || bytes[1] != 0) throw DataError(name + ": bad IDX magic");
  IdxFile f;
  f.type = bytes[2];
  const std::size_t elem = idx_element_size(f.type);
  if (elem == 0) throw DataError(name + ": unknown IDX element type");
  const std::size_t rank = bytes[3];
  if (rank == 0) throw DataError(name + ": IDX rank must be positive");
  const std::size_t header = 4 + 4 * rank;
  if (bytes.size() < header) throw DataError(name + ": truncated IDX header");
  for (std::size_t i = 0; i < rank; ++i) {
    const std::uint8_t* p = bytes.data() + 4 + 4 * i;
    f.dims.push_back(std::uint32_t(p[0]) << 24 | std::uint32_t(p[1]) << 16 | std::uint32_t(p[2]) << 8 | p[3]);
  }
  const std::size_t expected = f.count() * elem;
  if (bytes.size() - header != expected)
    throw DataError(name + ": payload length " + std::to_string(bytes.size() - header) + " does not match dims (" +
                    std::to_string(expected) + ")");
  f.payload.assign(bytes.begin() + std::ptrdiff_t(header), bytes.end());
  return f;
}

inline IdxFile load_idx(const std::string& path) { return parse_idx(read_file(path), path); }

// Images scaled by 1/256 into [0, 1).
inline Dataset make_dataset(const IdxFile& images, const IdxFile& labels, std::size_t limit) {
  if (images.type != 0x08 || images.dims.size() != 3) throw DataError("image file must be a u8 IDX of rank 3");
  if (labels.type != 0x08 || labels.dims.size() != 1) throw DataError("label file must be a u8 IDX of rank 1");
  if (images.dims[0] != labels.dims[0]) throw DataError("image and label counts differ");
  const std::size_t n = std::min<std::size_t>(limit, images.dims[0]);
  if (n == 0) throw DataError("dataset is empty");
  Dataset d;
  d.rows = int(images.dims[1]);
  d.cols = int(images.dims[2]);
  const std::size_t plane = std::size_t(d.rows) * d.cols;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = labels.payload[i];
    if (label > 9) throw DataError("label " + std::to_string(label) + " outside 0..9 at index " + std::to_string(i));
    std::vector<double> img(plane);
    for (std::size_t p = 0; p < plane; ++p) img[p] = images.payload[i * plane + p] / 256.0;
    d.images.push_back(std::move(img));
    d.labels.push_back(label);
  }
  return d;
}

inline Dataset load_mnist(const std::string& images_path, const std::string& labels_path, std::size_t limit = 1000) {
  if (limit == 0) throw DataError("dataset limit is zero");
  return make_dataset(load_idx(images_path), load_idx(labels_path), limit);
}

// ---- weight container -------------------------------------------------------
//
// Little-endian throughout:
//   "SCBW" u32 version
//   u32 channels height width pad norm
//   u32 layer_count, then per layer u32 kind in out kernel stride pool activation
//   f32 weights then f32 bias for each conv and fc layer, in table order
//   u64 FNV-1a of every preceding byte

inline constexpr std::uint32_t kContainerVersion = 1;

namespace detail {

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(std::uint8_t(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(std::uint8_t(v >> (8 * i)));
  }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

  std::vector<std::uint8_t> bytes;
};

class ByteReader {
 public:
  ByteReader(const std::uint8_t* p, std::size_t n, std::string name) : p_(p), n_(n), name_(std::move(name)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(p_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(p_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f32() { return std::bit_cast<float>(u32()); }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(p_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return n_ - pos_; }

 private:
  void need(std::size_t k) const {
    if (pos_ + k > n_) throw DataError(name_ + ": unexpected end of data");
  }
  const std::uint8_t* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
  std::string name_;
};

inline bool has_parameters(LayerKind k) { return k == LayerKind::Conv || k == LayerKind::FullyConnected; }

}  // namespace detail

inline std::vector<std::uint8_t> export_container(const ModelWeights& m) {
  check_model(m);
  detail::ByteWriter w;
  for (char c : {'S', 'C', 'B', 'W'}) w.bytes.push_back(std::uint8_t(c));
  w.u32(kContainerVersion);
  w.u32(std::uint32_t(m.input.channels));
  w.u32(std::uint32_t(m.input.height));
  w.u32(std::uint32_t(m.input.width));
  w.u32(std::uint32_t(m.input.pad));
  w.u32(std::uint32_t(m.input.norm));
  w.u32(std::uint32_t(m.layers.size()));
  for (const auto& l : m.layers) {
    const auto& s = l.spec;
    for (int v : {int(s.kind), s.in_channels, s.out_channels, s.kernel, s.stride, int(s.pool), int(s.activation)})
      w.u32(std::uint32_t(v));
  }
  for (const auto& l : m.layers) {
    if (!detail::has_parameters(l.spec.kind)) continue;
    for (double v : l.weights.data()) w.f32(v);
    for (double v : l.bias) w.f32(v);
  }
  w.u64(fnv1a64(w.bytes.data(), w.bytes.size()));
  return std::move(w.bytes);
}

inline bool is_container(const std::vector<std::uint8_t>& b) {
  return b.size() >= 4 && b[0] == 'S' && b[1] == 'C' && b[2] == 'B' && b[3] == 'W';
}

inline std::uint64_t container_checksum(const std::vector<std::uint8_t>& b) {
  if (b.size() < 12) throw DataError("container too short");
  detail::ByteReader r(b.data() + b.size() - 8, 8, "container");
  return r.u64();
}

inline ModelWeights parse_container(const std::vector<std::uint8_t>& b, const std::string& name = "container") {
  if (!is_container(b)) throw DataError(name + ": not a weight container");
  if (b.size() < 16) throw DataError(name + ": truncated container");
  const std::size_t body = b.size() - 8;
  detail::ByteReader tail(b.data() + body, 8, name);
  if (tail.u64() != fnv1a64(b.data(), body)) throw DataError(name + ": checksum mismatch");
  detail::ByteReader r(b.data() + 4, body - 4, name);
  if (r.u32() != kContainerVersion) throw DataError(name + ": unsupported container version");
  ModelWeights m;
  m.input.channels = int(r.u32());
  m.input.height = int(r.u32());
  m.input.width = int(r.u32());
  m.input.pad = int(r.u32());
  const std::uint32_t norm = r.u32();
  if (norm > 1) throw DataError(name + ": bad input normalization tag");
  m.input.norm = InputNorm(norm);
  const std::uint32_t count = r.u32();
  if (count > 4096) throw DataError(name + ": implausible layer count");
  for (std::uint32_t i = 0; i < count; ++i) {
    LayerSpec s;
    const std::uint32_t kind = r.u32();
    if (kind > 3) throw DataError(name + ": bad layer kind");
    s.kind = LayerKind(kind);
    s.in_channels = int(r.u32());
    s.out_channels = int(r.u32());
    s.kernel = int(r.u32());
    s.stride = int(r.u32());
    const std::uint32_t pool = r.u32(), act = r.u32();
    if (pool > 1 || act > 1) throw DataError(name + ": bad layer flags");
    s.pool = PoolKind(pool);
    s.activation = ActivationKind(act);
    m.layers.push_back(Layer{s, {}, {}});
  }
  for (auto& l : m.layers) {
    const auto& s = l.spec;
    if (s.kind == LayerKind::Conv)
      l.weights = Tensor<double>(
          {std::size_t(s.out_channels), std::size_t(s.in_channels), std::size_t(s.kernel), std::size_t(s.kernel)});
    else if (s.kind == LayerKind::FullyConnected)
      l.weights = Tensor<double>({std::size_t(s.out_channels), std::size_t(s.in_channels)});
    else
      continue;
    if (l.weights.size() * 4 > r.remaining()) throw DataError(name + ": truncated weight payload");
    for (double& v : l.weights.data()) v = r.f32();
    l.bias.resize(std::size_t(s.out_channels));
    for (double& v : l.bias) v = r.f32();
  }
  if (r.remaining() != 0) throw DataError(name + ": trailing bytes after the weight payload");
  check_model(m);
  return m;
}

// ---- importers ----------------------------------------------------------------

// Builds the layer table from an ordered list of parameter tensors. Every
// layer is followed by ReLU (the last one only with `final_activation`), and
// a pooling stage separates consecutive convs.
struct ImportOptions {
  InputSpec input{};
  PoolKind pool = PoolKind::Max;
  int pool_kernel = 2;
  bool final_activation = true;
};

inline ModelWeights assemble_model(std::vector<Layer> params, const ImportOptions& opt) {
  if (params.empty()) throw DataError("no parameter tensors found");
  ModelWeights m;
  m.input = opt.input;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const LayerKind kind = params[i].spec.kind;
    const bool last = i + 1 == params.size();
    m.layers.push_back(std::move(params[i]));
    if (!last || opt.final_activation) m.layers.push_back(Layer{LayerSpec::relu(), {}, {}});
    if (kind == LayerKind::Conv && !last && params[i + 1].spec.kind == LayerKind::Conv)
      m.layers.push_back(Layer{LayerSpec::pool_layer(opt.pool_kernel, opt.pool), {}, {}});
  }
  check_model(m);
  return m;
}

// Raw dump of the public C LeNet-5: doubles in declaration order, weights
// stored [in][out][kh][kw] (fc [in][out]), then the biases.
inline constexpr std::size_t kLenetDumpBytes = 415216;

inline ModelWeights import_lenet_dump(const std::vector<std::uint8_t>& b) {
  if (b.size() != kLenetDumpBytes) throw DataError("LeNet dump must be exactly 415216 bytes");
  detail::ByteReader r(b.data(), b.size(), "lenet dump");
  struct ConvShape {
    int in, out, k;
  };
  const ConvShape convs[] = {{1, 6, 5}, {6, 16, 5}, {16, 120, 5}};
  std::vector<Layer> params;
  for (const auto& cs : convs) {
    Layer l{LayerSpec::conv(cs.in, cs.out, cs.k),
            Tensor<double>({std::size_t(cs.out), std::size_t(cs.in), std::size_t(cs.k), std::size_t(cs.k)}),
            {}};
    for (int i = 0; i < cs.in; ++i)
      for (int o = 0; o < cs.out; ++o)
        for (int y = 0; y < cs.k; ++y)
          for (int x = 0; x < cs.k; ++x) l.weights(o, i, y, x) = r.f64();
    params.push_back(std::move(l));
  }
  Layer fc{LayerSpec::fc(120, 10), Tensor<double>({10, 120}), {}};
  for (int i = 0; i < 120; ++i)
    for (int o = 0; o < 10; ++o) fc.weights.data()[std::size_t(o) * 120 + i] = r.f64();
  params.push_back(std::move(fc));
  for (auto& l : params) {
    l.bias.resize(std::size_t(l.spec.out_channels));
    for (double& v : l.bias) v = r.f64();
  }
  ImportOptions opt;
  opt.input = InputSpec{1, 28, 28, 2, InputNorm::Standardize};
  opt.pool = PoolKind::Max;
  return assemble_model(std::move(params), opt);
}

// Text dump: `#` comments, optional directives `input C H W`, `pad P`,
// `norm none|standardize`, `pool max|avg K`, `final-activation relu|none`,
// then `tensor NAME d0 [d1 ...]` headers each followed by its values.
// Rank-4 tensors are conv weights [out][in][k][k], rank-2 fc weights
// [out][in], rank-1 the bias of the preceding weight tensor.
inline ModelWeights import_text_dump(const std::string& text) {
  std::istringstream in(text);
  ImportOptions opt;
  std::vector<Layer> params;
  std::string line;
  std::vector<double>* target = nullptr;
  std::size_t want = 0;
  auto finish = [&] {
    if (target && target->size() != want) throw DataError("tensor has fewer values than its header declares");
    target = nullptr;
  };
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) continue;
    const std::string where = "text dump line " + std::to_string(line_no) + ": ";
    auto expect_int = [&] {
      int v;
      if (!(ls >> v)) throw DataError(where + "expected an integer");
      return v;
    };
    if (word == "input") {
      finish();
      opt.input.channels = expect_int();
      opt.input.height = expect_int();
      opt.input.width = expect_int();
    } else if (word == "pad") {
      opt.input.pad = expect_int();
    } else if (word == "norm") {
      std::string v;
      ls >> v;
      if (v == "none")
        opt.input.norm = InputNorm::None;
      else if (v == "standardize")
        opt.input.norm = InputNorm::Standardize;
      else
        throw DataError(where + "norm must be none or standardize");
    } else if (word == "pool") {
      std::string v;
      ls >> v;
      if (v != "max" && v != "avg") throw DataError(where + "pool must be max or avg");
      opt.pool = v == "max" ? PoolKind::Max : PoolKind::Average;
      opt.pool_kernel = expect_int();
    } else if (word == "final-activation") {
      std::string v;
      ls >> v;
      if (v != "relu" && v != "none") throw DataError(where + "final-activation must be relu or none");
      opt.final_activation = v == "relu";
    } else if (word == "tensor") {
      finish();
      std::string name;
      ls >> name;
      std::vector<std::size_t> dims;
      for (int d; ls >> d;) {
        if (d <= 0) throw DataError(where + "tensor dimensions must be positive");
        dims.push_back(std::size_t(d));
      }
      want = Tensor<double>::count(dims);
      if (dims.size() == 4) {
        if (dims[2] != dims[3]) throw DataError(where + "conv kernels must be square");
        params.push_back(Layer{LayerSpec::conv(int(dims[1]), int(dims[0]), int(dims[2])), Tensor<double>(dims), {}});
        params.back().weights.data().clear();
        target = &params.back().weights.data();
      } else if (dims.size() == 2) {
        params.push_back(Layer{LayerSpec::fc(int(dims[1]), int(dims[0])), Tensor<double>(dims), {}});
        params.back().weights.data().clear();
        target = &params.back().weights.data();
      } else if (dims.size() == 1) {
        if (params.empty() || !params.back().bias.empty()) throw DataError(where + "bias without a weight tensor");
        if (int(dims[0]) != params.back().spec.out_channels)
          throw DataError(where + "bias length does not match the preceding weights");
        target = &params.back().bias;
      } else {
        throw DataError(where + "tensor rank must be 1, 2 or 4");
      }
    } else {
      if (!target) throw DataError(where + "values outside a tensor");
      std::istringstream vs(line);
      for (double v; vs >> v;) {
        if (target->size() == want) throw DataError(where + "tensor has more values than its header declares");
        target->push_back(v);
      }
      if (!vs.eof()) throw DataError(where + "unparseable value");
    }
  }
  finish();
  for (const auto& l : params)
    if (l.bias.empty()) throw DataError("weight tensor without a bias");
  return assemble_model(std::move(params), opt);
}

// Accepts a container, the LeNet raw dump, or a text dump.
inline ModelWeights import_weights(const std::vector<std::uint8_t>& bytes, const std::string& name = "weights") {
  if (bytes.empty()) throw DataError(name + ": empty file");
  if (is_container(bytes)) return parse_container(bytes, name);
  if (bytes.size() == kLenetDumpBytes) return import_lenet_dump(bytes);
  return import_text_dump(std::string(bytes.begin(), bytes.end()));
}

inline ModelWeights import_weights(const std::string& path) { return import_weights(read_file(path), path); }

// Round-trips the parameters through the container's 32-bit storage.
inline ModelWeights as_stored(const ModelWeights& m) { return parse_container(export_container(m)); }

}  // namespace scbench

#include <gtest/gtest.h>

#include <cstdio>
#include <cstring>
#include <iomanip>
#include <sstream>
#include <filesystem>
#include <random>

#include "scbench/ingestion.hpp"
#include "support/oracles.hpp"

using namespace scbench;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> idx_bytes(std::uint8_t type, std::vector<std::uint32_t> dims, std::vector<std::uint8_t> payload) {
  std::vector<std::uint8_t> b = {0, 0, type, std::uint8_t(dims.size())};
  for (auto d : dims)
    for (int s = 24; s >= 0; s -= 8) b.push_back(std::uint8_t(d >> s));
  b.insert(b.end(), payload.begin(), payload.end());
  return b;
}

fs::path temp_path(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "scbench_ingestion_test";
  fs::create_directories(dir);
  return dir / name;
}

// Forward pass over the raw C arrays of the LeNet dump, indexed the way the
// original program indexes them.
int lenet_reference_predict(const std::vector<double>& p, const std::vector<double>& image28) {
  std::size_t o = 0;
  auto take = [&](std::size_t n) {
    std::vector<double> v(p.begin() + std::ptrdiff_t(o), p.begin() + std::ptrdiff_t(o + n));
    o += n;
    return v;
  };
  const auto w1 = take(1 * 6 * 25), w2 = take(6 * 16 * 25), w3 = take(16 * 120 * 25), w4 = take(120 * 10);
  const auto b1 = take(6), b2 = take(16), b3 = take(120), b4 = take(10);
  double mean = 0, sq = 0;
  for (double v : image28) mean += v, sq += v * v;
  mean /= 784;
  const double sd = std::sqrt(sq / 784 - mean * mean);
  std::vector<double> in(32 * 32, 0.0);
  for (int i = 0; i < 28; ++i)
    for (int j = 0; j < 28; ++j) in[(i + 2) * 32 + j + 2] = (image28[i * 28 + j] - mean) / sd;
  auto conv = [](const std::vector<double>& x, int C, int H, const std::vector<double>& w, int OC,
                 const std::vector<double>& b) {
    const int OH = H - 4;
    std::vector<double> y(std::size_t(OC) * OH * OH, 0.0);
    for (int c = 0; c < C; ++c)
      for (int oc = 0; oc < OC; ++oc)
        for (int i = 0; i < OH; ++i)
          for (int j = 0; j < OH; ++j)
            for (int r = 0; r < 5; ++r)
              for (int k = 0; k < 5; ++k)
                y[(oc * OH + i) * OH + j] += x[(c * H + i + r) * H + j + k] * w[((c * OC + oc) * 5 + r) * 5 + k];
    for (int oc = 0; oc < OC; ++oc)
      for (int i = 0; i < OH * OH; ++i) y[oc * OH * OH + i] = std::max(0.0, y[oc * OH * OH + i] + b[oc]);
    return y;
  };
  auto pool = [](const std::vector<double>& x, int C, int H) {
    std::vector<double> y(std::size_t(C) * (H / 2) * (H / 2));
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < H / 2; ++i)
        for (int j = 0; j < H / 2; ++j) {
          double m = x[(c * H + 2 * i) * H + 2 * j];
          for (int r = 0; r < 2; ++r)
            for (int k = 0; k < 2; ++k) m = std::max(m, x[(c * H + 2 * i + r) * H + 2 * j + k]);
          y[(c * (H / 2) + i) * (H / 2) + j] = m;
        }
    return y;
  };
  auto a = pool(conv(in, 1, 32, w1, 6, b1), 6, 28);
  a = pool(conv(a, 6, 14, w2, 16, b2), 16, 10);
  a = conv(a, 16, 5, w3, 120, b3);
  std::vector<double> out(10, 0.0);
  for (int x = 0; x < 120; ++x)
    for (int y = 0; y < 10; ++y) out[y] += a[x] * w4[x * 10 + y];
  int best = 0;
  for (int y = 0; y < 10; ++y) {
    out[y] = std::max(0.0, out[y] + b4[y]);
    if (out[y] > out[best]) best = y;
  }
  return best;
}

}  // namespace

TEST(Idx, ParsesHeaderAndPayload) {
  const auto f = parse_idx(idx_bytes(0x08, {2, 3}, {1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(f.dims, (std::vector<std::uint32_t>{2, 3}));
  EXPECT_EQ(f.payload.size(), 6u);
  EXPECT_THROW(parse_idx(idx_bytes(0x08, {2, 3}, {1, 2, 3})), DataError);
  EXPECT_THROW(parse_idx({1, 0, 8, 1, 0, 0, 0, 0}), DataError);
  EXPECT_THROW(parse_idx(idx_bytes(0x07, {1}, {1})), DataError);
  EXPECT_EQ(parse_idx(idx_bytes(0x0D, {2}, std::vector<std::uint8_t>(8))).payload.size(), 8u);
}

TEST(LoadMnist, BuildsNormalizedDataset) {
  std::vector<std::uint8_t> px(3 * 4);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = std::uint8_t(i * 23);
  px[5] = 255;
  const auto ip = temp_path("img.idx"), lp = temp_path("lbl.idx");
  write_file(ip.string(), idx_bytes(0x08, {3, 2, 2}, px));
  write_file(lp.string(), idx_bytes(0x08, {3}, {7, 0, 9}));
  const auto d = load_mnist(ip.string(), lp.string(), 2);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.labels, (std::vector<int>{7, 0}));
  for (const auto& img : d.images)
    for (double v : img) {
      EXPECT_GE(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  EXPECT_DOUBLE_EQ(d.images[1][1], 255 / 256.0);
  EXPECT_EQ(load_mnist(ip.string(), lp.string(), 1000).size(), 3u);
  EXPECT_THROW(load_mnist(ip.string(), lp.string(), 0), DataError);
  write_file(lp.string(), idx_bytes(0x08, {3}, {7, 10, 9}));
  EXPECT_THROW(load_mnist(ip.string(), lp.string(), 3), DataError);
  write_file(lp.string(), idx_bytes(0x08, {2}, {7, 1}));
  EXPECT_THROW(load_mnist(ip.string(), lp.string(), 3), DataError);
  auto truncated = idx_bytes(0x08, {3, 2, 2}, px);
  truncated.pop_back();
  write_file(ip.string(), truncated);
  EXPECT_THROW(load_mnist(ip.string(), lp.string(), 3), DataError);
  EXPECT_THROW(load_mnist("/nonexistent/images", lp.string(), 3), DataError);
}

TEST(Container, RoundTripIsByteIdentical) {
  const auto m = fixtures::synthetic_model(21);
  const auto bytes = export_container(m);
  const auto back = parse_container(bytes);
  EXPECT_EQ(export_container(back), bytes);
  EXPECT_EQ(container_checksum(export_container(import_weights(bytes))), container_checksum(bytes));
  EXPECT_EQ(back.layers.size(), m.layers.size());
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    EXPECT_EQ(back.layers[i].spec, m.layers[i].spec);
    for (std::size_t k = 0; k < m.layers[i].weights.size(); ++k)
      EXPECT_EQ(back.layers[i].weights.data()[k], double(float(m.layers[i].weights.data()[k])));
  }
}

TEST(Container, DetectsCorruption) {
  auto bytes = export_container(fixtures::synthetic_model(22));
  bytes[40] ^= 1;
  EXPECT_THROW(parse_container(bytes), DataError);
  EXPECT_THROW(import_weights(std::vector<std::uint8_t>{}), DataError);
  auto cut = export_container(fixtures::synthetic_model(22));
  cut.resize(cut.size() / 2);
  EXPECT_THROW(parse_container(cut), DataError);
}

TEST(LenetDump, ImportsAndMatchesReferencePrediction) {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> d(0.0, 0.2);
  std::vector<double> params(kLenetDumpBytes / 8);
  for (double& v : params) v = d(rng);
  std::vector<std::uint8_t> bytes(kLenetDumpBytes);
  std::memcpy(bytes.data(), params.data(), bytes.size());
  const auto m = import_weights(bytes);
  std::vector<LayerKind> kinds;
  for (const auto& l : m.layers)
    if (l.spec.kind == LayerKind::Conv || l.spec.kind == LayerKind::FullyConnected) kinds.push_back(l.spec.kind);
  EXPECT_EQ(kinds, (std::vector<LayerKind>{LayerKind::Conv, LayerKind::Conv, LayerKind::Conv, LayerKind::FullyConnected}));
  EXPECT_EQ(check_model(m), (Shape3{10, 1, 1}));
  std::size_t macs = 0;
  {
    CycleReport r;
    forward(m, preprocess(m.input, std::vector<double>(784, 0.5)), BackendConfig{}, 0, &r);
    macs = std::size_t(r.macs());
  }
  EXPECT_EQ(macs, 406800u);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 10; ++t) {
    std::vector<double> img(784);
    for (double& v : img) v = u(rng) < 0.2 ? u(rng) : 0.0;
    EXPECT_EQ(argmax(forward(m, preprocess(m.input, img), BackendConfig{}, 0)), lenet_reference_predict(params, img));
  }
  EXPECT_THROW(import_lenet_dump(std::vector<std::uint8_t>(100)), DataError);
}

TEST(TextDump, InfersLayerTable) {
  const auto m = fixtures::synthetic_model(24);
  std::ostringstream text;
  text << "# synthetic\ninput 1 16 16\npool max 2\nfinal-activation none\n";
  for (const auto& l : m.layers) {
    if (l.spec.kind != LayerKind::Conv && l.spec.kind != LayerKind::FullyConnected) continue;
    text << "tensor w";
    for (auto d : l.weights.shape()) text << ' ' << d;
    text << '\n' << std::setprecision(17);
    for (double v : l.weights.data()) text << v << ' ';
    text << "\ntensor b " << l.bias.size() << '\n';
    for (double v : l.bias) text << v << ' ';
    text << '\n';
  }
  const auto back = import_text_dump(text.str());
  EXPECT_EQ(back, m);
  EXPECT_THROW(import_text_dump("tensor w 4 2 3 3\n1 2 3\n"), DataError);
  EXPECT_THROW(import_text_dump("tensor w 4 1 3 3\n" + std::string(36 * 2, ' ') + "\ntensor b 5\n"), DataError);
  EXPECT_THROW(import_text_dump("tensor w 2 1 3 3\n0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0\ntensor b 2\n0 0\n"
                                "tensor w 3 5 3 3\n"),
               DataError);
}

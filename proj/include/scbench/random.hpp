#pragma once

#include <array>
#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>

namespace scbench {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Deterministic child seed; every stochastic component is keyed through this.
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = splitmix64(seed ^ 0x5CB3D1E5A7F00D11ull);
  for (std::uint64_t t : tags) h = splitmix64(h ^ splitmix64(t + 0x632BE59BD9B4E019ull));
  return h;
}

// Galois toggle masks of maximal-length polynomials, indexed by register width.
// Bit k-1 is set for every x^k term (the constant term is implicit).
inline constexpr std::uint64_t maximal_taps(int width) {
  constexpr auto mask = [](std::initializer_list<int> exps) {
    std::uint64_t m = 0;
    for (int e : exps) m |= std::uint64_t{1} << (e - 1);
    return m;
  };
  switch (width) {
    case 1: return mask({1});
    case 2: return mask({2, 1});
    case 3: return mask({3, 2});
    case 4: return mask({4, 3});
    case 5: return mask({5, 3});
    case 6: return mask({6, 5});
    case 7: return mask({7, 6});
    case 8: return mask({8, 6, 5, 4});
    case 9: return mask({9, 5});
    case 10: return mask({10, 7});
    case 11: return mask({11, 9});
    case 12: return mask({12, 6, 4, 1});
    case 13: return mask({13, 4, 3, 1});
    case 14: return mask({14, 5, 3, 1});
    case 15: return mask({15, 14});
    case 16: return mask({16, 15, 13, 4});
    case 17: return mask({17, 14});
    case 18: return mask({18, 11});
    case 19: return mask({19, 6, 2, 1});
    case 20: return mask({20, 17});
    case 21: return mask({21, 19});
    case 22: return mask({22, 21});
    case 23: return mask({23, 18});
    case 24: return mask({24, 23, 22, 17});
    case 25: return mask({25, 22});
    case 26: return mask({26, 6, 2, 1});
    case 27: return mask({27, 5, 2, 1});
    case 28: return mask({28, 25});
    case 29: return mask({29, 27});
    case 30: return mask({30, 6, 4, 1});
    case 31: return mask({31, 28});
    case 32: return mask({32, 22, 2, 1});
    default: throw std::invalid_argument("no maximal polynomial tabulated for this LFSR width");
  }
}

// Right-shifting Galois LFSR. The emitted word is the register state.
class Lfsr {
 public:
  Lfsr(int width, std::uint64_t taps, std::uint64_t state) : width_(width), taps_(taps), state_(state) {
    if (width < 1 || width > 32) throw std::invalid_argument("LFSR width must be in [1, 32]");
    state_ &= mask();
    if (state_ == 0) throw std::invalid_argument("LFSR state must be nonzero");
  }
  Lfsr(int width, std::uint64_t state) : Lfsr(width, maximal_taps(width), state) {}

  int width() const { return width_; }
  std::uint64_t taps() const { return taps_; }
  std::uint64_t state() const { return state_; }

  // Returns the current word and advances.
  std::uint64_t next() {
    const std::uint64_t out = state_;
    const std::uint64_t lsb = state_ & 1u;
    state_ >>= 1;
    if (lsb) state_ ^= taps_;
    return out;
  }

 private:
  std::uint64_t mask() const { return width_ == 64 ? ~0ull : ((std::uint64_t{1} << width_) - 1); }

  int width_;
  std::uint64_t taps_;
  std::uint64_t state_;
};

enum class SourceKind { LfsrBased, FullPeriodPermutation };

// Seeded description of a pseudo-random word source. Cheap to copy; streams
// are produced by WordSource.
struct RandomSource {
  SourceKind kind = SourceKind::LfsrBased;
  std::uint64_t seed = 1;
  // LfsrBased only: register width used when wider than the word width
  // (the word is then the top bits of the register).
  int lfsr_width = 0;
  // XOR-scramble emitted words with a seed-derived mask ("shuffled" outputs).
  bool shuffle = false;

  RandomSource derive(std::uint64_t tag) const {
    RandomSource child = *this;
    child.seed = derive_seed(seed, {tag});
    return child;
  }
  RandomSource derive(std::uint64_t a, std::uint64_t b) const {
    RandomSource child = *this;
    child.seed = derive_seed(seed, {a, b});
    return child;
  }
};

inline RandomSource lfsr_source(std::uint64_t seed, int lfsr_width = 0) {
  return RandomSource{SourceKind::LfsrBased, seed, lfsr_width, false};
}
inline RandomSource full_period_source(std::uint64_t seed) {
  return RandomSource{SourceKind::FullPeriodPermutation, seed, 0, false};
}

// Streams generated inside an operator (select lines, constants) read the
// top bits of a wide register. Equal-width LFSRs share one m-sequence, and
// by its shift-and-add property a third phase can reproduce the XNOR of two
// others; a different register width breaks that alignment with operands.
inline constexpr int kInternalLfsrWidth = 24;

inline RandomSource internal_source(RandomSource src) {
  if (src.kind == SourceKind::LfsrBased) src.lfsr_width = std::max(src.lfsr_width, kInternalLfsrWidth);
  return src;
}

// Stream of `bits`-wide words. FullPeriodPermutation emits every value of
// [0, 2^bits) exactly once per period: the LFSR's 2^bits-1 nonzero states
// followed by the all-zero word.
class WordSource {
 public:
  WordSource(const RandomSource& src, int bits) : bits_(bits), kind_(src.kind) {
    if (bits < 1 || bits > 32) throw std::invalid_argument("word width must be in [1, 32]");
    int width = bits;
    if (kind_ == SourceKind::LfsrBased && src.lfsr_width > bits) width = src.lfsr_width;
    if (width > 32) throw std::invalid_argument("LFSR width must be at most 32");
    shift_ = width - bits;
    const std::uint64_t reg_mask = (std::uint64_t{1} << width) - 1;
    std::uint64_t state = splitmix64(src.seed) & reg_mask;
    if (state == 0) state = 1;
    lfsr_ = Lfsr(width, state);
    period_ = (std::uint64_t{1} << width) - 1;
    if (src.shuffle) scramble_ = splitmix64(src.seed ^ 0xA5A5A5A5A5A5A5A5ull) & ((std::uint64_t{1} << bits) - 1);
  }

  int bits() const { return bits_; }

  std::uint32_t next() {
    std::uint64_t w;
    if (kind_ == SourceKind::FullPeriodPermutation && phase_ == period_) {
      w = 0;
      phase_ = 0;
    } else {
      w = lfsr_.next() >> shift_;
      ++phase_;
    }
    return static_cast<std::uint32_t>(w ^ scramble_);
  }

 private:
  int bits_;
  SourceKind kind_;
  int shift_ = 0;
  Lfsr lfsr_{1, 1};
  std::uint64_t period_ = 1;
  std::uint64_t phase_ = 0;
  std::uint64_t scramble_ = 0;
};

}  // namespace scbench

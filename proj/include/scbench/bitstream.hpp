#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "scbench/numeric.hpp"
#include "scbench/random.hpp"

namespace scbench {

enum class Format { Unipolar, Bipolar };

inline constexpr int kMaxStreamExponent = 16;

// Packed bit sequence of length 2^exponent; bit t lives in word t/64.
class StochasticStream {
 public:
  StochasticStream() = default;
  StochasticStream(int exponent, Format format) : exponent_(exponent), format_(format) {
    if (exponent < 1 || exponent > kMaxStreamExponent)
      throw std::invalid_argument("stream exponent must be in [1, 16]");
    words_.assign((length() + 63) / 64, 0);
  }

  static StochasticStream constant(int exponent, Format format, bool bit) {
    StochasticStream s(exponent, format);
    if (bit) {
      std::fill(s.words_.begin(), s.words_.end(), ~0ull);
      s.trim();
    }
    return s;
  }

  int exponent() const { return exponent_; }
  std::size_t length() const { return std::size_t{1} << exponent_; }
  Format format() const { return format_; }
  bool empty() const { return words_.empty(); }

  bool bit(std::size_t t) const { return (words_[t >> 6] >> (t & 63)) & 1u; }
  void set(std::size_t t, bool v) {
    const std::uint64_t m = std::uint64_t{1} << (t & 63);
    if (v)
      words_[t >> 6] |= m;
    else
      words_[t >> 6] &= ~m;
  }

  std::size_t popcount() const {
    std::size_t n = 0;
    for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
    return n;
  }

  std::span<const std::uint64_t> words() const { return words_; }
  std::span<std::uint64_t> words() { return words_; }

  // Clears bits past length() in the last word (relevant for exponent < 6).
  void trim() {
    if (length() < 64 && !words_.empty()) words_[0] &= (std::uint64_t{1} << length()) - 1;
  }

  friend bool operator==(const StochasticStream&, const StochasticStream&) = default;

 private:
  int exponent_ = 0;
  Format format_ = Format::Unipolar;
  std::vector<std::uint64_t> words_;
};

inline double decode(const StochasticStream& s) {
  const double p = static_cast<double>(s.popcount()) / static_cast<double>(s.length());
  return s.format() == Format::Unipolar ? p : 2.0 * p - 1.0;
}

// Comparator threshold: unipolar v*2^N, bipolar (v+1)*2^(N-1); rounded to
// nearest and clamped to [0, 2^N]. A threshold of 2^N is the all-ones stream.
inline std::uint64_t sng_threshold(double v, Format format, int exponent) {
  const double lo = format == Format::Unipolar ? 0.0 : -1.0;
  if (!(v >= lo && v <= 1.0))
    throw std::invalid_argument("value " + std::to_string(v) + " outside the stream range; pre-scale first");
  const double scaled = format == Format::Unipolar ? std::ldexp(v, exponent) : std::ldexp(v + 1.0, exponent - 1);
  const double full = std::ldexp(1.0, exponent);
  return static_cast<std::uint64_t>(std::clamp(std::round(scaled), 0.0, full));
}

inline StochasticStream sng_from_threshold(std::uint64_t threshold, Format format, int exponent,
                                           const RandomSource& src) {
  StochasticStream s(exponent, format);
  WordSource words(src, exponent);
  auto out = s.words();
  const std::size_t n = s.length();
  for (std::size_t t = 0; t < n; ++t) {
    if (words.next() < threshold) out[t >> 6] |= std::uint64_t{1} << (t & 63);
  }
  return s;
}

// B2P conversion: bit t is 1 iff random_t < threshold(v).
inline StochasticStream sng_encode(double v, Format format, int exponent, const RandomSource& src) {
  return sng_from_threshold(sng_threshold(v, format, exponent), format, exponent, src);
}

inline StochasticStream sng_encode(const FixedPoint& v, Format format, int exponent, const RandomSource& src) {
  return sng_encode(v.value(), format, exponent, src);
}

inline void require_compatible(const StochasticStream& a, const StochasticStream& b) {
  if (a.length() != b.length()) throw std::invalid_argument("stream length mismatch");
  if (a.format() != b.format()) throw std::invalid_argument("stream format mismatch");
}

enum class MulMode { Auto, InvertedBipolar };

// AND for unipolar, XNOR for bipolar, XOR for the inverted-bipolar mode.
inline StochasticStream sc_mul(const StochasticStream& a, const StochasticStream& b, MulMode mode = MulMode::Auto) {
  require_compatible(a, b);
  StochasticStream out(a.exponent(), a.format());
  auto o = out.words();
  auto wa = a.words();
  auto wb = b.words();
  for (std::size_t i = 0; i < o.size(); ++i) {
    if (mode == MulMode::InvertedBipolar)
      o[i] = wa[i] ^ wb[i];
    else if (a.format() == Format::Unipolar)
      o[i] = wa[i] & wb[i];
    else
      o[i] = ~(wa[i] ^ wb[i]);
  }
  out.trim();
  return out;
}

// Bipolar XNOR regardless of the carried tag; used by the ESL arithmetic.
inline StochasticStream xnor(const StochasticStream& a, const StochasticStream& b) {
  if (a.length() != b.length()) throw std::invalid_argument("stream length mismatch");
  StochasticStream out(a.exponent(), Format::Bipolar);
  auto o = out.words();
  auto wa = a.words();
  auto wb = b.words();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = ~(wa[i] ^ wb[i]);
  out.trim();
  return out;
}

namespace detail {

inline int ceil_log2(std::size_t n) {
  int b = 0;
  while ((std::size_t{1} << b) < n) ++b;
  return b;
}

// Uniform index in [0, fan_in) per cycle. Power-of-two fan-ins use the
// source words directly; others scale a wider word.
class SelectSource {
 public:
  SelectSource(const RandomSource& src, std::size_t fan_in)
      : fan_in_(fan_in),
        exact_(std::has_single_bit(fan_in)),
        bits_(std::max(1, ceil_log2(fan_in) + (std::has_single_bit(fan_in) ? 0 : 8))),
        words_(internal_source(src), bits_) {}

  std::size_t next() {
    const std::uint64_t w = words_.next();
    if (exact_) return static_cast<std::size_t>(w & (fan_in_ - 1));
    return static_cast<std::size_t>((w * fan_in_) >> bits_);
  }

 private:
  std::size_t fan_in_;
  bool exact_;
  int bits_;
  WordSource words_;
};

}  // namespace detail

// Scaled addition: each output bit copies the bit of a uniformly selected
// input, so E[decode] = mean of the inputs.
inline StochasticStream mux_add(std::span<const StochasticStream> inputs, const RandomSource& select) {
  if (inputs.empty()) throw std::invalid_argument("mux_add needs at least one input");
  for (const auto& s : inputs) require_compatible(inputs.front(), s);
  StochasticStream out(inputs.front().exponent(), inputs.front().format());
  if (inputs.size() == 1) return inputs.front();
  detail::SelectSource sel(select, inputs.size());
  const std::size_t n = out.length();
  for (std::size_t t = 0; t < n; ++t) {
    if (inputs[sel.next()].bit(t)) out.set(t, true);
  }
  return out;
}

inline StochasticStream mux_add(std::initializer_list<StochasticStream> inputs, const RandomSource& select) {
  return mux_add(std::span<const StochasticStream>(inputs.begin(), inputs.size()), select);
}

// Bitwise OR. For independent unipolar streams E[decode] = x + y - xy.
inline StochasticStream or_add(const StochasticStream& a, const StochasticStream& b) {
  require_compatible(a, b);
  if (a.format() != Format::Unipolar) throw std::invalid_argument("or_add expects unipolar streams");
  StochasticStream out(a.exponent(), Format::Unipolar);
  auto o = out.words();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a.words()[i] | b.words()[i];
  return out;
}

// Accumulative parallel counter: per-cycle count of ones across the inputs.
inline std::vector<int> apc_add(std::span<const StochasticStream> inputs) {
  if (inputs.empty()) return {};
  for (const auto& s : inputs)
    if (s.length() != inputs.front().length()) throw std::invalid_argument("stream length mismatch");
  std::vector<int> counts(inputs.front().length(), 0);
  for (const auto& s : inputs)
    for (std::size_t t = 0; t < counts.size(); ++t) counts[t] += s.bit(t) ? 1 : 0;
  return counts;
}

// K-state saturating up/down FSM; output is 1 while the state is in the
// upper half. Approximates tanh(K*x/2) on bipolar input.
class StanhFsm {
 public:
  explicit StanhFsm(int states) : states_(states), state_(states / 2) {
    if (states < 2 || states % 2 != 0) throw std::invalid_argument("Stanh needs an even state count >= 2");
  }

  bool step(bool in) {
    const bool out = state_ >= states_ / 2;
    if (in)
      state_ = std::min(state_ + 1, states_ - 1);
    else
      state_ = std::max(state_ - 1, 0);
    return out;
  }

  int state() const { return state_; }
  int states() const { return states_; }

 private:
  int states_;
  int state_;
};

inline StochasticStream stanh(int states, const StochasticStream& s) {
  if (s.format() != Format::Bipolar) throw std::invalid_argument("stanh expects a bipolar stream");
  StanhFsm fsm(states);
  StochasticStream out(s.exponent(), Format::Bipolar);
  for (std::size_t t = 0; t < s.length(); ++t) out.set(t, fsm.step(s.bit(t)));
  return out;
}

}  // namespace scbench

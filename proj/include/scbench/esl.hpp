#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "scbench/bitstream.hpp"
#include "scbench/numeric.hpp"
#include "scbench/random.hpp"

namespace scbench {

// Extended stochastic logic number: value = decode(x) / decode(y), both bipolar.
struct EslNumber {
  StochasticStream x;
  StochasticStream y;

  int exponent() const { return x.exponent(); }
  std::size_t length() const { return x.length(); }
};

inline bool fits_esl(double v, int exponent) {
  return std::isfinite(v) && std::fabs(v) <= std::ldexp(1.0, exponent);
}

// In-range values (|v| < 1) go to X with Y = 1. Larger magnitudes saturate X
// to +/-1 and carry 1/|v| in Y, which keeps both streams dense.
inline EslNumber esl_encode(double v, int exponent, const RandomSource& src) {
  if (!fits_esl(v, exponent)) throw std::invalid_argument("value too large for the ESL denominator precision");
  if (std::fabs(v) < 1.0) {
    return {sng_encode(v, Format::Bipolar, exponent, src.derive(0)),
            StochasticStream::constant(exponent, Format::Bipolar, true)};
  }
  const std::uint64_t y_threshold = sng_threshold(1.0 / std::fabs(v), Format::Bipolar, exponent);
  if (y_threshold <= (std::uint64_t{1} << (exponent - 1)))
    throw std::invalid_argument("1/|v| rounds to zero at this stream length");
  return {StochasticStream::constant(exponent, Format::Bipolar, v > 0),
          sng_from_threshold(y_threshold, Format::Bipolar, exponent, src.derive(1))};
}

inline EslNumber esl_constant(double v, int exponent, const RandomSource& src) { return esl_encode(v, exponent, src); }

inline double esl_decode_ideal(const EslNumber& e) {
  const double den = decode(e.y);
  if (den == 0.0) throw std::domain_error("ESL denominator decodes to zero");
  return decode(e.x) / den;
}

// Ratio clamped to [-limit, limit]; a zero denominator saturates by the sign
// of the numerator. Used where a finite estimate is always required.
inline double esl_decode_saturated(const EslNumber& e, double limit) {
  const double num = decode(e.x);
  const double den = decode(e.y);
  if (den == 0.0) return num > 0 ? limit : (num < 0 ? -limit : 0.0);
  const double r = num / den;
  return std::fmax(-limit, std::fmin(limit, r));
}

inline void require_same_length(const EslNumber& a, const EslNumber& b) {
  if (a.length() != b.length()) throw std::invalid_argument("ESL length mismatch");
}

inline EslNumber esl_mul(const EslNumber& a, const EslNumber& b) {
  require_same_length(a, b);
  return {xnor(a.x, b.x), xnor(a.y, b.y)};
}

enum class EslAddVariant { HalfConst, MuxZero };

// Two-operand ESL addition. Numerator MUX(Xa*Yb, Xb*Ya) carries a factor 1/2
// that is matched in the denominator either by a constant-1/2 stream or by
// MUXing the denominator with a zero stream.
inline EslNumber esl_add2(const EslNumber& a, const EslNumber& b, EslAddVariant variant, const RandomSource& src) {
  require_same_length(a, b);
  const int n = a.exponent();
  StochasticStream num_terms[] = {xnor(a.x, b.y), xnor(b.x, a.y)};
  StochasticStream num = mux_add(num_terms, src.derive(0));
  StochasticStream den_prod = xnor(a.y, b.y);
  if (variant == EslAddVariant::HalfConst) {
    auto half = sng_encode(0.5, Format::Bipolar, n, internal_source(src.derive(1)));
    return {std::move(num), xnor(half, den_prod)};
  }
  StochasticStream den_terms[] = {std::move(den_prod), sng_encode(0.0, Format::Bipolar, n, internal_source(src.derive(2)))};
  return {std::move(num), mux_add(den_terms, src.derive(3))};
}

enum class ArrayAddStrategy { Tree, Sequential, Flat };

inline const char* to_string(ArrayAddStrategy s) {
  switch (s) {
    case ArrayAddStrategy::Tree: return "tree";
    case ArrayAddStrategy::Sequential: return "sequential";
    case ArrayAddStrategy::Flat: return "flat";
  }
  return "?";
}

namespace detail {

inline EslNumber esl_flat_add(std::span<const EslNumber> terms, const RandomSource& src) {
  const std::size_t f = terms.size();
  const int n = terms.front().exponent();
  std::vector<StochasticStream> products;
  products.reserve(f);
  for (std::size_t i = 0; i < f; ++i) {
    StochasticStream p = terms[i].x;
    for (std::size_t j = 0; j < f; ++j)
      if (j != i) p = xnor(p, terms[j].y);
    products.push_back(std::move(p));
  }
  StochasticStream num = mux_add(products, src.derive(0));
  // The f-input MUX scales the numerator by 1/f; a 1/f constant restores it.
  StochasticStream den = sng_encode(1.0 / static_cast<double>(f), Format::Bipolar, n, internal_source(src.derive(1)));
  for (const auto& t : terms) den = xnor(den, t.y);
  return {std::move(num), std::move(den)};
}

}  // namespace detail

inline EslNumber esl_array_add(std::span<const EslNumber> terms, ArrayAddStrategy strategy, const RandomSource& src,
                               EslAddVariant variant = EslAddVariant::HalfConst) {
  if (terms.size() < 2) throw std::invalid_argument("array addition needs at least two terms");
  for (const auto& t : terms) require_same_length(terms.front(), t);

  switch (strategy) {
    case ArrayAddStrategy::Sequential: {
      EslNumber acc = terms[0];
      for (std::size_t i = 1; i < terms.size(); ++i) acc = esl_add2(acc, terms[i], variant, src.derive(i));
      return acc;
    }
    case ArrayAddStrategy::Tree: {
      std::vector<EslNumber> level(terms.begin(), terms.end());
      std::uint64_t node = 0;
      while (level.size() > 1) {
        std::vector<EslNumber> next;
        next.reserve((level.size() + 1) / 2);
        for (std::size_t i = 0; i + 1 < level.size(); i += 2)
          next.push_back(esl_add2(level[i], level[i + 1], variant, src.derive(++node)));
        if (level.size() % 2) next.push_back(std::move(level.back()));
        level = std::move(next);
      }
      return std::move(level.front());
    }
    case ArrayAddStrategy::Flat:
      return detail::esl_flat_add(terms, src);
  }
  throw std::invalid_argument("unknown array-add strategy");
}

// Bit-serial P2B estimator solving X = Y * P. The guess drives an SNG in
// bipolar form P / 2^int_bits; X is scaled by the same factor through a
// 1-of-2^int_bits MUX against a zero stream. Mismatches move P by the
// current step, which starts at half the representable range and halves on
// each change of direction (never below one raw unit).
inline FixedPoint esl_to_binary(const EslNumber& e, const FixedFormat& out, const RandomSource& src) {
  validate(out);
  if (out.int_bits > 15) throw std::invalid_argument("P2B output supports at most 15 integer bits");
  const int width = out.width();
  const std::int64_t offset = std::int64_t{1} << (out.int_bits + out.frac_bits);
  WordSource guess_words(internal_source(src.derive(0)), width);
  WordSource select_words(internal_source(src.derive(1)), 16);
  WordSource zero_words(internal_source(src.derive(2)), 16);
  const std::uint32_t select_threshold = static_cast<std::uint32_t>(std::uint64_t{1} << (16 - out.int_bits));

  std::int64_t p = 0;
  std::int64_t step = offset;
  int last_dir = 0;
  const std::size_t n = e.length();
  for (std::size_t t = 0; t < n; ++t) {
    const bool p_bit = static_cast<std::int64_t>(guess_words.next()) < p + offset;
    const bool m_bit = p_bit == e.y.bit(t);
    bool x_bit = e.x.bit(t);
    if (out.int_bits > 0) {
      const bool pick_x = select_words.next() < select_threshold;
      const bool zero_bit = zero_words.next() < (1u << 15);
      x_bit = pick_x ? x_bit : zero_bit;
    }
    const int dir = static_cast<int>(x_bit) - static_cast<int>(m_bit);
    if (dir == 0) continue;
    if (last_dir != 0 && dir != last_dir) step = std::max<std::int64_t>(1, step / 2);
    last_dir = dir;
    p = saturate_raw(p + dir * step, out);
  }
  return FixedPoint{p, out};
}

}  // namespace scbench

#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdlib>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "scbench/numeric.hpp"

namespace scbench {

// Selector entry meaning "emit a constant 0" (the last cycle of a period).
inline constexpr int kForcedZero = -1;

// Bit index chosen at cycle c (1-based) of an N-bit deterministic stream:
// N-1-tz(c) for c < 2^N, forced zero at c = 2^N. Bit N-i therefore appears
// first at cycle 2^(i-1) and then every 2^i cycles.
inline std::vector<int> selector_sequence(int exponent) {
  if (exponent < 1 || exponent > 20) throw std::invalid_argument("selector exponent must be in [1, 20]");
  const std::uint32_t period = std::uint32_t{1} << exponent;
  std::vector<int> seq(period);
  for (std::uint32_t c = 1; c < period; ++c) seq[c - 1] = exponent - 1 - std::countr_zero(c);
  seq[period - 1] = kForcedZero;
  return seq;
}

// Constant-memory selector FSM; one table shared by every PE of a PU.
class SelectorFsm {
 public:
  explicit SelectorFsm(int exponent)
      : exponent_(exponent), table_(std::make_shared<const std::vector<int>>(selector_sequence(exponent))) {}

  int exponent() const { return exponent_; }
  std::span<const int> table() const { return *table_; }
  std::size_t cycle() const { return cycle_; }

  void reset() { cycle_ = 0; }
  int next() {
    const int sel = (*table_)[cycle_];
    cycle_ = (cycle_ + 1) % table_->size();
    return sel;
  }

 private:
  int exponent_;
  std::shared_ptr<const std::vector<int>> table_;
  std::size_t cycle_ = 0;
};

enum class BiscImpl { WeightCounted, InputCounted };

struct MacResult {
  std::int64_t acc = 0;
  std::int64_t cycles = 0;
};

// Down counter + up/down accumulator. The down counter holds the magnitude
// of the counted operand; every cycle the selector picks one bit of the
// streamed operand and the accumulator moves by sign * bit.
class BiscMacUnit {
 public:
  BiscMacUnit(std::span<const int> selector, std::int64_t acc = 0) : selector_(selector), acc_(acc) {}

  std::int64_t acc() const { return acc_; }
  void load(std::int64_t acc) { acc_ = acc; }

  // Runs one multiplication; returns the cycles spent.
  std::int64_t multiply(std::uint64_t counted_magnitude, std::uint64_t streamed_magnitude, int sign) {
    if (counted_magnitude > selector_.size())
      throw std::invalid_argument("counted operand exceeds the selector period");
    std::uint64_t down_counter = counted_magnitude;
    std::size_t c = 0;
    while (down_counter > 0) {
      const int sel = selector_[c++];
      const bool bit = sel != kForcedZero && ((streamed_magnitude >> sel) & 1u);
      acc_ += bit ? sign : 0;
      --down_counter;
    }
    return static_cast<std::int64_t>(counted_magnitude);
  }

 private:
  std::span<const int> selector_;
  std::int64_t acc_;
};

// Operand exponent: integer and fraction bits folded into one magnitude.
inline int bisc_exponent(const FixedFormat& fmt) { return fmt.int_bits + fmt.frac_bits; }

// Value of one accumulator count for operands in `fmt`: 2^(N - 2*frac).
inline double bisc_count_value(const FixedFormat& fmt) {
  return std::ldexp(1.0, bisc_exponent(fmt) - 2 * fmt.frac_bits);
}

namespace detail {

inline const std::vector<int>& cached_selector(int exponent) {
  static thread_local std::vector<std::vector<int>> cache(21);
  auto& slot = cache.at(static_cast<std::size_t>(exponent));
  if (slot.empty()) slot = selector_sequence(exponent);
  return slot;
}

}  // namespace detail

// Sign-magnitude SC-MAC. The streamed magnitude is limited to N bits; the
// counted magnitude may reach 2^N (it then covers the forced-zero cycle).
inline MacResult bisc_mac(const FixedPoint& x, const FixedPoint& w, BiscImpl impl, std::int64_t acc_in,
                          std::span<const int> selector) {
  if (!(x.format == w.format)) throw std::invalid_argument("BISC operands must share a format");
  const int n = bisc_exponent(x.format);
  const std::uint64_t stream_cap = (std::uint64_t{1} << n) - 1;
  const auto mag = [](std::int64_t r) { return static_cast<std::uint64_t>(r < 0 ? -r : r); };
  const int sign = ((x.raw < 0) != (w.raw < 0)) ? -1 : 1;
  const FixedPoint& counted = impl == BiscImpl::InputCounted ? x : w;
  const FixedPoint& streamed = impl == BiscImpl::InputCounted ? w : x;
  BiscMacUnit unit(selector, acc_in);
  const std::int64_t cycles = unit.multiply(mag(counted.raw), std::min(mag(streamed.raw), stream_cap), sign);
  return {unit.acc(), cycles};
}

inline MacResult bisc_mac(const FixedPoint& x, const FixedPoint& w, BiscImpl impl, std::int64_t acc_in = 0) {
  return bisc_mac(x, w, impl, acc_in, detail::cached_selector(bisc_exponent(x.format)));
}

// Cycles per PU iteration: the slowest weight when weights drive the down
// counters, the shared input otherwise.
inline std::int64_t pu_iteration_cycles(std::span<const FixedPoint> weights, const FixedPoint& input, BiscImpl impl) {
  if (impl == BiscImpl::InputCounted) return std::abs(input.raw);
  std::int64_t worst = 0;
  for (const auto& w : weights) worst = std::max<std::int64_t>(worst, std::abs(w.raw));
  return worst;
}

}  // namespace scbench

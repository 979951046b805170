#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace scbench {

// Sign + int_bits + frac_bits two's-complement layout.
struct FixedFormat {
  int int_bits = 2;
  int frac_bits = 6;

  constexpr int width() const { return 1 + int_bits + frac_bits; }
  constexpr std::int64_t min_raw() const { return -(std::int64_t{1} << (int_bits + frac_bits)); }
  constexpr std::int64_t max_raw() const { return (std::int64_t{1} << (int_bits + frac_bits)) - 1; }
  double lsb() const { return std::ldexp(1.0, -frac_bits); }
  double min_value() const { return std::ldexp(static_cast<double>(min_raw()), -frac_bits); }
  double max_value() const { return std::ldexp(static_cast<double>(max_raw()), -frac_bits); }

  friend constexpr bool operator==(const FixedFormat&, const FixedFormat&) = default;
};

inline void validate(const FixedFormat& fmt) {
  if (fmt.int_bits < 0 || fmt.frac_bits < 0 || fmt.width() > 32)
    throw std::invalid_argument("fixed-point format needs non-negative widths and at most 32 bits");
}

struct FixedPoint {
  std::int64_t raw = 0;
  FixedFormat format{};

  double value() const { return std::ldexp(static_cast<double>(raw), -format.frac_bits); }

  friend constexpr bool operator==(const FixedPoint&, const FixedPoint&) = default;
};

inline std::int64_t saturate_raw(std::int64_t raw, const FixedFormat& fmt) {
  if (raw < fmt.min_raw()) return fmt.min_raw();
  if (raw > fmt.max_raw()) return fmt.max_raw();
  return raw;
}

// Round to nearest (ties away from zero), saturating at the format bounds.
inline FixedPoint quantize(double v, const FixedFormat& fmt) {
  validate(fmt);
  if (std::isnan(v)) return FixedPoint{0, fmt};
  const double scaled = std::ldexp(v, fmt.frac_bits);
  if (scaled <= static_cast<double>(fmt.min_raw())) return FixedPoint{fmt.min_raw(), fmt};
  if (scaled >= static_cast<double>(fmt.max_raw())) return FixedPoint{fmt.max_raw(), fmt};
  return FixedPoint{static_cast<std::int64_t>(std::round(scaled)), fmt};
}

inline FixedPoint quantize(double v, int int_bits, int frac_bits) {
  return quantize(v, FixedFormat{int_bits, frac_bits});
}

inline double to_real(const FixedPoint& f) { return f.value(); }

// Value snapped onto the format grid.
inline double quantize_value(double v, const FixedFormat& fmt) { return quantize(v, fmt).value(); }

}  // namespace scbench

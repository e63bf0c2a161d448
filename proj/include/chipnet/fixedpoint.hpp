#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "chipnet/common.hpp"
#include "chipnet/tensor.hpp"

namespace chipnet {

/// How a value halfway between two grid points is resolved.
enum class RoundMode : std::uint8_t {
  kHalfAwayFromZero,  // matches DSP-style rounding; the default everywhere
  kNearestEven,       // for sensitivity experiments
};

/// Signed fixed-point format: N total bits, F of them fractional.
/// Representable values are k / 2^F for raw integers k in [-2^(N-1), 2^(N-1)-1].
struct QFormat {
  int total_bits = 18;
  int fraction_bits = 14;

  void validate() const {
    if (total_bits < 2 || total_bits > 32)
      throw DomainError("QFormat: total_bits must be in [2, 32], got " +
                        std::to_string(total_bits));
    if (fraction_bits < 0 || fraction_bits >= total_bits)
      throw DomainError("QFormat: fraction_bits must be in [0, total_bits), got " +
                        std::to_string(fraction_bits));
  }

  std::int64_t raw_min() const { return -(std::int64_t{1} << (total_bits - 1)); }
  std::int64_t raw_max() const { return (std::int64_t{1} << (total_bits - 1)) - 1; }
  double scale() const { return std::ldexp(1.0, fraction_bits); }
  double min_value() const { return std::ldexp(static_cast<double>(raw_min()), -fraction_bits); }
  double max_value() const { return std::ldexp(static_cast<double>(raw_max()), -fraction_bits); }

  friend bool operator==(const QFormat& a, const QFormat& b) {
    return a.total_bits == b.total_bits && a.fraction_bits == b.fraction_bits;
  }
};

/// Default formats used by the 18-bit pipeline; the split keeps |weight| < 8
/// and |activation| < 128 away from saturation.
inline QFormat default_weight_format() { return QFormat{18, 14}; }
inline QFormat default_activation_format() { return QFormat{18, 10}; }

/// Derives a format at a different width preserving the integer-bit budget
/// of the defaults (4 integer bits for weights, 8 for activations).
inline QFormat weight_format_for_bits(int n) {
  return QFormat{n, n - 4 >= 0 ? n - 4 : 0};
}
inline QFormat activation_format_for_bits(int n) {
  return QFormat{n, n - 8 >= 0 ? n - 8 : 0};
}

namespace detail {

inline double round_half_away(double x) { return std::round(x); }

inline double round_nearest_even(double x) {
  // Assumes the default FE_TONEAREST environment.
  return std::nearbyint(x);
}

inline double apply_round(double x, RoundMode mode) {
  return mode == RoundMode::kHalfAwayFromZero ? round_half_away(x) : round_nearest_even(x);
}

inline int ceil_log2(std::size_t n) {
  if (n <= 1) return 0;
  return std::bit_width(n - 1);
}

}  // namespace detail

/// Scaled-round-saturate to the raw integer grid of `q`.
inline std::int32_t quantize_raw(double x, const QFormat& q,
                                 RoundMode mode = RoundMode::kHalfAwayFromZero) {
  q.validate();
  if (!std::isfinite(x)) throw DomainError("quantize: non-finite input");
  const double scaled = detail::apply_round(std::ldexp(x, q.fraction_bits), mode);
  if (scaled >= static_cast<double>(q.raw_max())) return static_cast<std::int32_t>(q.raw_max());
  if (scaled <= static_cast<double>(q.raw_min())) return static_cast<std::int32_t>(q.raw_min());
  return static_cast<std::int32_t>(scaled);
}

/// clamp(round(x * 2^F), -2^(N-1), 2^(N-1)-1) / 2^F.
inline double quantize_value(double x, const QFormat& q,
                             RoundMode mode = RoundMode::kHalfAwayFromZero) {
  return std::ldexp(static_cast<double>(quantize_raw(x, q, mode)), -q.fraction_bits);
}

inline double dequantize_raw(std::int32_t raw, const QFormat& q) {
  return std::ldexp(static_cast<double>(raw), -q.fraction_bits);
}

/// A tensor of raw scaled integers sharing one QFormat.
struct FixedTensor {
  QFormat qformat;
  std::vector<int> shape;
  std::vector<std::int32_t> raw;

  std::size_t element_count() const {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
  }
};

inline FixedTensor quantize_tensor(const std::vector<double>& values, std::vector<int> shape,
                                   const QFormat& q,
                                   RoundMode mode = RoundMode::kHalfAwayFromZero) {
  q.validate();
  FixedTensor t;
  t.qformat = q;
  t.shape = std::move(shape);
  if (t.element_count() != values.size())
    throw ShapeError("quantize_tensor: shape does not match value count");
  t.raw.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) t.raw[i] = quantize_raw(values[i], q, mode);
  return t;
}

inline FixedTensor quantize_tensor(const Tensor3<float>& values, const QFormat& q,
                                   RoundMode mode = RoundMode::kHalfAwayFromZero) {
  q.validate();
  FixedTensor t;
  t.qformat = q;
  t.shape = {values.rows, values.cols, values.channels};
  t.raw.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    t.raw[i] = quantize_raw(static_cast<double>(values.v[i]), q, mode);
  return t;
}

inline std::vector<double> dequantize(const FixedTensor& t) {
  std::vector<double> out(t.raw.size());
  for (std::size_t i = 0; i < t.raw.size(); ++i) out[i] = dequantize_raw(t.raw[i], t.qformat);
  return out;
}

/// Full-width integer accumulator with a known fractional scaling.
/// Sums of raw products carry the combined fraction bits of their operands
/// and are never rounded or saturated until requantize.
struct Accumulator {
  __int128 value = 0;
  int fraction_bits = 0;
};

/// Bits needed to hold `max_terms` products of an a-format and b-format raw
/// value without overflow.
inline int accumulator_bits_required(const QFormat& a, const QFormat& b, std::size_t max_terms) {
  return a.total_bits + b.total_bits + detail::ceil_log2(max_terms);
}

/// Declares, up front, the widest sum a datapath accumulator must hold.
/// Construction fails if the host-side 128-bit accumulator cannot.
struct AccumulatorSpec {
  QFormat window_format;
  QFormat kernel_format;
  std::size_t max_terms = 0;
  int bits_required = 0;

  AccumulatorSpec(const QFormat& window, const QFormat& kernel, std::size_t terms)
      : window_format(window), kernel_format(kernel), max_terms(terms) {
    window.validate();
    kernel.validate();
    if (terms == 0) throw ConfigError("AccumulatorSpec: zero terms");
    bits_required = accumulator_bits_required(window, kernel, terms);
    if (bits_required > 127)
      throw ConfigError("AccumulatorSpec: " + std::to_string(bits_required) +
                        " accumulator bits exceed the 127 available");
  }
};

/// Exact integer multiply-accumulate of two equally shaped fixed tensors.
/// The result carries window.F + kernel.F fraction bits.
inline Accumulator fixed_mul_acc(const FixedTensor& window, const FixedTensor& kernel) {
  if (window.shape != kernel.shape) throw ShapeError("fixed_mul_acc: shape mismatch");
  AccumulatorSpec spec(window.qformat, kernel.qformat,
                       window.raw.empty() ? 1 : window.raw.size());
  (void)spec;
  Accumulator acc;
  acc.fraction_bits = window.qformat.fraction_bits + kernel.qformat.fraction_bits;
  for (std::size_t i = 0; i < window.raw.size(); ++i)
    acc.value += static_cast<__int128>(window.raw[i]) * static_cast<__int128>(kernel.raw[i]);
  return acc;
}

namespace detail {

inline __int128 round_shift(__int128 v, int shift, RoundMode mode) {
  if (shift <= 0) return v << -shift;
  if (mode == RoundMode::kHalfAwayFromZero) {
    const __int128 half = __int128{1} << (shift - 1);
    if (v >= 0) return (v + half) >> shift;
    return -((-v + half) >> shift);
  }
  // Half-to-even: arithmetic shift floors, then fix up on the remainder.
  __int128 q = v >> shift;
  const __int128 rem = v - (q << shift);
  const __int128 half = __int128{1} << (shift - 1);
  if (rem > half || (rem == half && (q & 1))) ++q;
  return q;
}

inline std::int32_t saturate_to(__int128 v, const QFormat& q) {
  if (v > static_cast<__int128>(q.raw_max())) return static_cast<std::int32_t>(q.raw_max());
  if (v < static_cast<__int128>(q.raw_min())) return static_cast<std::int32_t>(q.raw_min());
  return static_cast<std::int32_t>(v);
}

}  // namespace detail

/// Normalizes a full-width accumulator back onto the grid of `q`:
/// rounds away the excess fraction bits, then saturates.
inline std::int32_t requantize_raw(const Accumulator& acc, const QFormat& q,
                                   RoundMode mode = RoundMode::kHalfAwayFromZero) {
  q.validate();
  const int shift = acc.fraction_bits - q.fraction_bits;
  return detail::saturate_to(detail::round_shift(acc.value, shift, mode), q);
}

inline double requantize(const Accumulator& acc, const QFormat& q,
                         RoundMode mode = RoundMode::kHalfAwayFromZero) {
  return dequantize_raw(requantize_raw(acc, q, mode), q);
}

}  // namespace chipnet

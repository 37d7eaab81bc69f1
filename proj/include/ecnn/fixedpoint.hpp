// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ecnn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dynamic fixed-point format. A signed Qn of width w holds k * 2^-n for
// k in [-2^(w-1), 2^(w-1)-1]; an unsigned UQn holds k in [0, 2^w-1].
struct QFormat {
  bool is_signed = true;
  int frac_bits = 0;
  int width = 8;

  constexpr int32_t min_code() const { return is_signed ? -(int32_t{1} << (width - 1)) : 0; }
  constexpr int32_t max_code() const {
    return is_signed ? (int32_t{1} << (width - 1)) - 1 : (int32_t{1} << width) - 1;
  }
  double step() const;
  double min_value() const;
  double max_value() const;
  constexpr bool valid() const { return width >= 2 && width <= 16 && frac_bits >= -32 && frac_bits <= 32; }

  // "Q3", "UQ7", "Q5/w7". The width suffix is omitted for 8-bit formats.
  std::string to_string() const;
  static QFormat parse(std::string_view text);

  friend constexpr bool operator==(const QFormat&, const QFormat&) = default;
};

constexpr QFormat Q(int n, int width = 8) { return QFormat{true, n, width}; }
constexpr QFormat UQ(int n, int width = 8) { return QFormat{false, n, width}; }

struct QValue {
  int32_t code = 0;
  QFormat fmt;
  double real() const;
  friend constexpr bool operator==(const QValue&, const QValue&) = default;
};

// Full-precision partial sum. `scale` is the implied fractional position,
// i.e. the sum of the fractional positions of the multiplied operands.
struct Accumulator {
  int32_t value = 0;
  int scale = 0;
};

// Range searched when picking a fractional position.
inline constexpr int kMinFracBits = -8;
inline constexpr int kMaxFracBits = 15;

// One leaf-module filter: 32 input channels, 3x3 taps.
inline constexpr int64_t kLeafMacs = 32 * 9;
// Worst-case |sum| for four leaf-modules of unsigned 8-bit features times
// signed 8-bit weights, plus the 1x1 stage; must fit the 32-bit accumulator.
inline constexpr int64_t kWorstCaseLeafSum = 4 * (kLeafMacs * 255 * 128 + 32 * 255 * 128);
static_assert(kWorstCaseLeafSum < (int64_t{1} << 31), "accumulator too narrow");

enum class Norm { L1, L2 };

// Clip and round (half away from zero) into `fmt`.
int32_t quantize_code(double x, QFormat fmt);
QValue quantize(double x, QFormat fmt);

// Saturate an integer code into the range of `fmt`.
int32_t saturate(int64_t code, QFormat fmt);

// v * 2^-shift, rounding half away from zero. Negative shifts are exact
// left shifts.
int64_t shift_round(int64_t v, int shift);

// Sum of |x - Q(x)|^l over the collection.
double quantization_error(std::span<const double> values, QFormat fmt, Norm norm);

// argmin over n in [kMinFracBits, kMaxFracBits] of the quantization error.
// Exact ties resolve to the larger n. Throws on an empty collection.
QFormat select_precision(std::span<const double> values, Norm norm, bool is_signed, int width = 8);

Accumulator accumulate_mac(Accumulator acc, QValue a, QValue w);

// Quantize (acc + bias) into out_fmt. The bias is aligned by an exact left
// shift; a bias with more fractional bits than the accumulator is rejected.
QValue requantize(Accumulator acc, QValue bias, QFormat out_fmt);

// Integer form used by the datapath models: value has fractional position
// `scale`, result rounds and saturates exactly like quantize().
int32_t requantize_code(int64_t value, int scale, QFormat out_fmt);

// Align `code` (fractional position from_n) to fractional position to_n by
// left shift. Throws when that would need a right shift.
int64_t align_exact(int64_t code, int from_n, int to_n);

}  // namespace ecnn

// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecnn/fixedpoint.hpp"

#include <charconv>
#include <cmath>
#include <limits>

namespace ecnn {

double QFormat::step() const { return std::ldexp(1.0, -frac_bits); }
double QFormat::min_value() const { return min_code() * step(); }
double QFormat::max_value() const { return max_code() * step(); }

std::string QFormat::to_string() const {
  std::string s = is_signed ? "Q" : "UQ";
  s += std::to_string(frac_bits);
  if (width != 8) s += "/w" + std::to_string(width);
  return s;
}

QFormat QFormat::parse(std::string_view text) {
  const std::string orig(text);
  QFormat f;
  if (text.starts_with("UQ")) {
    f.is_signed = false;
    text.remove_prefix(2);
  } else if (text.starts_with("Q")) {
    text.remove_prefix(1);
  } else {
    throw Error("malformed Q-format '" + orig + "'");
  }
  auto parse_int = [&](std::string_view part, int& out) {
    if (part.empty()) return false;
    auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
    return ec == std::errc{} && p == part.data() + part.size();
  };
  std::string_view frac = text, width;
  if (auto slash = text.find('/'); slash != std::string_view::npos) {
    frac = text.substr(0, slash);
    auto rest = text.substr(slash + 1);
    if (!rest.starts_with("w")) throw Error("malformed Q-format '" + orig + "'");
    width = rest.substr(1);
  }
  if (!parse_int(frac, f.frac_bits)) throw Error("malformed Q-format '" + orig + "'");
  if (!width.empty() && !parse_int(width, f.width)) throw Error("malformed Q-format '" + orig + "'");
  if (!f.valid()) throw Error("Q-format out of range '" + orig + "'");
  return f;
}

double QValue::real() const { return code * fmt.step(); }

int32_t saturate(int64_t code, QFormat fmt) {
  if (code < fmt.min_code()) return fmt.min_code();
  if (code > fmt.max_code()) return fmt.max_code();
  return static_cast<int32_t>(code);
}

int32_t quantize_code(double x, QFormat fmt) {
  if (std::isnan(x)) return 0;
  const double scaled = std::ldexp(x, fmt.frac_bits);
  if (scaled <= fmt.min_code()) return fmt.min_code();
  if (scaled >= fmt.max_code()) return fmt.max_code();
  return saturate(static_cast<int64_t>(std::round(scaled)), fmt);
}

QValue quantize(double x, QFormat fmt) { return QValue{quantize_code(x, fmt), fmt}; }

int64_t shift_round(int64_t v, int shift) {
  if (shift <= 0) {
    if (shift < -62) throw Error("shift_round: left shift too large");
    return v * (int64_t{1} << -shift);
  }
  if (shift >= 63) return 0;
  const uint64_t mag = v < 0 ? static_cast<uint64_t>(-(v + 1)) + 1 : static_cast<uint64_t>(v);
  const uint64_t r = (mag + (uint64_t{1} << (shift - 1))) >> shift;
  return v < 0 ? -static_cast<int64_t>(r) : static_cast<int64_t>(r);
}

double quantization_error(std::span<const double> values, QFormat fmt, Norm norm) {
  double total = 0.0;
  for (double x : values) {
    const double e = std::abs(x - quantize(x, fmt).real());
    total += norm == Norm::L1 ? e : e * e;
  }
  return total;
}

QFormat select_precision(std::span<const double> values, Norm norm, bool is_signed, int width) {
  if (values.empty()) throw Error("select_precision: no statistics collected");
  QFormat best{is_signed, kMinFracBits, width};
  double best_err = std::numeric_limits<double>::infinity();
  for (int n = kMinFracBits; n <= kMaxFracBits; ++n) {
    const QFormat f{is_signed, n, width};
    const double err = quantization_error(values, f, norm);
    if (err <= best_err) {
      best_err = err;
      best = f;
    }
  }
  return best;
}

Accumulator accumulate_mac(Accumulator acc, QValue a, QValue w) {
  if (acc.scale != a.fmt.frac_bits + w.fmt.frac_bits)
    throw Error("accumulate_mac: accumulator scale does not match operand formats");
  const int64_t sum = int64_t{acc.value} + int64_t{a.code} * w.code;
  if (sum > std::numeric_limits<int32_t>::max() || sum < std::numeric_limits<int32_t>::min())
    throw Error("accumulate_mac: accumulator overflow");
  acc.value = static_cast<int32_t>(sum);
  return acc;
}

int64_t align_exact(int64_t code, int from_n, int to_n) {
  if (from_n > to_n) throw Error("alignment would drop fractional bits");
  return shift_round(code, from_n - to_n);
}

int32_t requantize_code(int64_t value, int scale, QFormat out_fmt) {
  return saturate(shift_round(value, scale - out_fmt.frac_bits), out_fmt);
}

QValue requantize(Accumulator acc, QValue bias, QFormat out_fmt) {
  if (bias.fmt.frac_bits > acc.scale)
    throw Error("requantize: bias " + bias.fmt.to_string() + " needs a right shift to scale " +
                std::to_string(acc.scale));
  const int64_t total = int64_t{acc.value} + align_exact(bias.code, bias.fmt.frac_bits, acc.scale);
  return QValue{requantize_code(total, acc.scale, out_fmt), out_fmt};
}

}  // namespace ecnn

// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "ecnn/fixedpoint.hpp"

using namespace ecnn;

namespace {

// Independent rounding: nearest, halves away from zero, then clip.
int64_t ref_code(double x, QFormat f) {
  const double s = std::ldexp(x, f.frac_bits);
  const double r = s >= 0 ? std::floor(s + 0.5) : -std::floor(-s + 0.5);
  return std::clamp<int64_t>(static_cast<int64_t>(r), f.min_code(), f.max_code());
}

double ref_error(const std::vector<double>& v, QFormat f, Norm norm) {
  double e = 0;
  for (double x : v) {
    const double d = std::abs(x - std::ldexp(static_cast<double>(ref_code(x, f)), -f.frac_bits));
    e += norm == Norm::L1 ? d : d * d;
  }
  return e;
}

int ref_select(const std::vector<double>& v, Norm norm, bool is_signed, int width) {
  int best = kMinFracBits;
  double best_e = INFINITY;
  for (int n = kMinFracBits; n <= kMaxFracBits; ++n) {
    const double e = ref_error(v, QFormat{is_signed, n, width}, norm);
    if (e <= best_e) {
      best_e = e;
      best = n;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("quantize rounds and saturates") {
  CHECK(quantize(1.3, Q(3)).code == 10);
  CHECK(quantize(1.3, Q(3)).real() == doctest::Approx(1.25));
  CHECK(quantize(100, Q(3)).code == 127);
  CHECK(quantize(100, Q(3)).real() == doctest::Approx(15.875));
  CHECK(quantize(0.5, UQ(7)).code == 64);
  CHECK(quantize(-0.3, UQ(7)).code == 0);
  CHECK(quantize(-100, Q(3)).code == -128);
  CHECK(quantize_code(0.0625, Q(3)) == 1);    // 0.5 ulp rounds away from zero
  CHECK(quantize_code(-0.0625, Q(3)) == -1);
  CHECK(quantize_code(1.0, Q(6, 7)) == 63);  // 7-bit signed max
}

TEST_CASE("format text") {
  CHECK(Q(3).to_string() == "Q3");
  CHECK(UQ(7).to_string() == "UQ7");
  CHECK(Q(5, 7).to_string() == "Q5/w7");
  CHECK(QFormat::parse("UQ-2") == UQ(-2));
  CHECK(QFormat::parse("Q5/w7") == Q(5, 7));
  CHECK_THROWS_AS(QFormat::parse("Z3"), Error);
  CHECK_THROWS_AS(QFormat::parse("Q3/x"), Error);
}

TEST_CASE("format ranges are monotone in n") {
  for (int n = kMinFracBits; n < kMaxFracBits; ++n) {
    CHECK(Q(n).max_value() > Q(n + 1).max_value());
    CHECK(Q(n).min_value() < Q(n + 1).min_value());
    CHECK(UQ(n).max_value() > UQ(n + 1).max_value());
  }
}

TEST_CASE("quantize properties") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-20, 20);
  std::uniform_int_distribution<int> nd(-4, 10);
  for (int it = 0; it < 5000; ++it) {
    const QFormat f{it % 3 != 0, nd(rng), it % 5 == 0 ? 7 : 8};
    const double x = u(rng), y = u(rng);
    const QValue qx = quantize(x, f);
    CHECK(qx.code == ref_code(x, f));
    CHECK(quantize(qx.real(), f) == qx);
    if (x <= y) CHECK(qx.code <= quantize(y, f).code);
    if (x >= f.min_value() && x <= f.max_value()) CHECK(std::abs(x - qx.real()) <= std::ldexp(1.0, -f.frac_bits - 1));
  }
}

TEST_CASE("select_precision examples") {
  CHECK(select_precision(std::vector<double>{1.0}, Norm::L2, true) == Q(6));
  // 0.4 -> 102/256 still fits at n = 8 (error 5.49e-6 < 1.46e-5 at n = 7);
  // n = 9 clips 0.4 to 127/512.
  CHECK(select_precision(std::vector<double>{0.4, -0.3, 0.1}, Norm::L2, true) == Q(8));
  CHECK_THROWS_AS(select_precision(std::vector<double>{}, Norm::L2, true), Error);
  // All-zero data: every n is exact, ties go to the largest n.
  CHECK(select_precision(std::vector<double>{0.0, 0.0}, Norm::L1, true).frac_bits == kMaxFracBits);
}

TEST_CASE("select_precision on heavy tails: L1 never picks a smaller n than L2") {
  std::mt19937_64 rng(2024);
  std::exponential_distribution<double> e(1.0 / 0.05);
  std::vector<double> v;
  for (int i = 0; i < 512; ++i) v.push_back((i % 2 ? 1 : -1) * e(rng));
  const int n1 = select_precision(v, Norm::L1, true).frac_bits;
  const int n2 = select_precision(v, Norm::L2, true).frac_bits;
  CHECK(n1 == ref_select(v, Norm::L1, true, 8));
  CHECK(n2 == ref_select(v, Norm::L2, true, 8));
  CHECK(n1 >= n2);
}

TEST_CASE("select_precision matches brute force") {
  std::mt19937_64 rng(5);
  for (int it = 0; it < 200; ++it) {
    const double scale = std::ldexp(1.0, static_cast<int>(rng() % 12) - 6);
    std::normal_distribution<double> d(0.0, scale);
    std::vector<double> v(1 + rng() % 64);
    for (double& x : v) x = d(rng);
    const bool s = it % 2 == 0;
    if (!s)
      for (double& x : v) x = std::abs(x);
    const Norm norm = it % 3 == 0 ? Norm::L1 : Norm::L2;
    const int width = it % 4 == 0 ? 7 : 8;
    CHECK(select_precision(v, norm, s, width).frac_bits == ref_select(v, norm, s, width));
  }
}

TEST_CASE("accumulate_mac") {
  Accumulator acc{0, 8};
  acc = accumulate_mac(acc, QValue{10, Q(3)}, QValue{-4, Q(5)});
  CHECK(acc.value == -40);
  CHECK(acc.scale == 8);
  const Accumulator same = accumulate_mac(acc, QValue{0, Q(3)}, QValue{77, Q(5)});
  CHECK(same.value == acc.value);
  CHECK_THROWS_AS(accumulate_mac(acc, QValue{1, Q(2)}, QValue{1, Q(5)}), Error);

  Accumulator worst{0, 7};
  for (int i = 0; i < 288; ++i) worst = accumulate_mac(worst, QValue{127, Q(0)}, QValue{-128, Q(7)});
  CHECK(worst.value == -288 * 127 * 128);
  CHECK(std::abs(int64_t{worst.value}) < (int64_t{1} << 31));
}

TEST_CASE("requantize") {
  CHECK(requantize(Accumulator{80, 6}, QValue{0, Q(0)}, Q(3)).real() == doctest::Approx(1.25));
  CHECK(requantize(Accumulator{1 << 20, 6}, QValue{0, Q(0)}, Q(3)).real() == doctest::Approx(15.875));
  CHECK(requantize(Accumulator{-1, 6}, QValue{0, Q(0)}, UQ(7)).code == 0);
  // bias 3 at Q2 aligns to 48 at scale 6: (80 + 48) / 64 = 2.0
  CHECK(requantize(Accumulator{80, 6}, QValue{3, Q(2)}, Q(3)).real() == doctest::Approx(2.0));
  CHECK_THROWS_AS(requantize(Accumulator{80, 6}, QValue{3, Q(7)}, Q(3)), Error);
  CHECK(align_exact(5, 2, 6) == 80);
  CHECK_THROWS_AS(align_exact(5, 6, 2), Error);
}

TEST_CASE("requantize_code equals rational rounding") {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int64_t> vd(-(int64_t{1} << 24), int64_t{1} << 24);
  for (int it = 0; it < 20000; ++it) {
    const int64_t v = vd(rng);
    const int scale = static_cast<int>(rng() % 20);
    const QFormat f{it % 2 == 0, static_cast<int>(rng() % 12) - 2, 8};
    // exact: v / 2^scale at f.frac_bits, computed with integer arithmetic
    const int shift = scale - f.frac_bits;
    int64_t expect;
    if (shift <= 0) {
      expect = v * (int64_t{1} << -shift);
    } else {
      const int64_t mag = std::abs(v), half = int64_t{1} << (shift - 1);
      expect = (mag + half) >> shift;
      if (v < 0) expect = -expect;
    }
    expect = std::clamp<int64_t>(expect, f.min_code(), f.max_code());
    CHECK(requantize_code(v, scale, f) == expect);
  }
}

TEST_CASE("quantization_error") {
  const std::vector<double> v{0.3, -0.7};
  CHECK(quantization_error(v, Q(1), Norm::L1) == doctest::Approx(0.2 + 0.2));
  CHECK(quantization_error(v, Q(1), Norm::L2) == doctest::Approx(0.04 + 0.04));
}

// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ecnn/fixedpoint.hpp"

namespace ecnn {

// Interleaved (HWC) feature map.
template <typename T>
struct Tensor {
  int w = 0, h = 0, c = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int w_, int h_, int c_, T fill = T{})
      : w(w_), h(h_), c(c_), data(static_cast<std::size_t>(w_) * h_ * c_, fill) {}

  std::size_t index(int x, int y, int ch) const {
    return (static_cast<std::size_t>(y) * w + x) * c + ch;
  }
  T& at(int x, int y, int ch) { return data[index(x, y, ch)]; }
  const T& at(int x, int y, int ch) const { return data[index(x, y, ch)]; }
  T* pixel(int x, int y) { return data.data() + index(x, y, 0); }
  const T* pixel(int x, int y) const { return data.data() + index(x, y, 0); }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

using CodeTensor = Tensor<int16_t>;
using FloatTensor = Tensor<float>;

// Quantized feature map: integer codes plus their shared Q-format.
struct Feature {
  CodeTensor codes;
  QFormat fmt;
  friend bool operator==(const Feature&, const Feature&) = default;
};

// Replicate-clamped read.
template <typename T>
const T& clamped(const Tensor<T>& t, int64_t x, int64_t y, int ch) {
  const int cx = x < 0 ? 0 : (x >= t.w ? t.w - 1 : static_cast<int>(x));
  const int cy = y < 0 ? 0 : (y >= t.h ? t.h - 1 : static_cast<int>(y));
  return t.at(cx, cy, ch);
}

}  // namespace ecnn

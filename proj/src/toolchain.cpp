// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecnn/toolchain.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace ecnn {

FloatTensor to_float(const Feature& f) {
  FloatTensor t(f.codes.w, f.codes.h, f.codes.c);
  const double step = f.fmt.step();
  for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = static_cast<float>(f.codes.data[i] * step);
  return t;
}

Feature to_feature(const FloatTensor& t, QFormat fmt) {
  Feature f;
  f.fmt = fmt;
  f.codes = CodeTensor(t.w, t.h, t.c);
  for (std::size_t i = 0; i < t.data.size(); ++i) f.codes.data[i] = static_cast<int16_t>(quantize_code(t.data[i], fmt));
  return f;
}

std::vector<FloatTensor> synthetic_frames(int count, int w, int h, int c, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.02);
  std::vector<FloatTensor> out;
  for (int k = 0; k < count; ++k) {
    FloatTensor t(w, h, c);
    for (int ch = 0; ch < c; ++ch) {
      const double gx = u(rng) - 0.5, gy = u(rng) - 0.5;
      const double fx = 2 * std::numbers::pi * (1 + 6 * u(rng)) / w, fy = 2 * std::numbers::pi * (1 + 6 * u(rng)) / h;
      const double phase = 2 * std::numbers::pi * u(rng), amp = 0.1 + 0.2 * u(rng), base = 0.3 + 0.4 * u(rng);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          double v = base + gx * x / w + gy * y / h + amp * std::sin(fx * x + fy * y + phase) + noise(rng);
          v = std::clamp(std::round(v * 256.0), 0.0, 255.0) / 256.0;
          t.at(x, y, ch) = static_cast<float>(v);
        }
    }
    out.push_back(std::move(t));
  }
  return out;
}

SizeOracle compiled_size_oracle(const ModelIR& m, const ModelWeights& w, QFormat input_fmt,
                                const MachineConfig& machine) {
  return [m, w, input_fmt, machine](const std::vector<LayerFormats>& f) {
    const QuantizedModel q = quantize_model(m, w, f, input_fmt);
    return encoded_memory_bytes(compile(q, machine).layout);
  };
}

Build build(const ModelIR& m, const ModelWeights& w, const std::vector<FloatTensor>& samples,
            const ToolchainOptions& opt) {
  const uint64_t budget = opt.budget_bytes ? opt.budget_bytes : static_cast<uint64_t>(opt.machine.param_mem_bytes);
  const ModelStats stats = collect_stats(m, w, samples);
  Build b;
  b.plan = assign_formats(m, stats, opt.norm, opt.input_fmt, compiled_size_oracle(m, w, opt.input_fmt, opt.machine),
                          budget);
  b.model = quantize_model(m, w, b.plan.formats, opt.input_fmt);
  b.compiled = compile(b.model, opt.machine);
  b.encoded = encode_params(b.compiled.layout, budget);
  link_params(b.compiled.program, b.compiled.layout, b.encoded.segment_addr);
  return b;
}

}  // namespace ecnn

// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>

#include "ecnn/image_io.hpp"
#include "ecnn/oracle.hpp"
#include "ecnn/simulator.hpp"
#include "helpers.hpp"

using namespace ecnn;
using ecnn::testing::count_differences;
using ecnn::testing::random_frame;
using ecnn::testing::simple_formats;

namespace {

struct Bound {
  QuantizedModel q;
  CompileResult compiled;
  EncodeResult encoded;
  Machine machine() const { return Machine(compiled.program, encoded.container); }
};

Bound bind(QuantizedModel q, int x_i) {
  Bound b;
  b.q = std::move(q);
  MachineConfig mc;
  mc.x_i = x_i;
  b.compiled = compile(b.q, mc);
  b.encoded = encode_params(b.compiled.layout);
  link_params(b.compiled.program, b.compiled.layout, b.encoded.segment_addr);
  return b;
}

Bound bind_random(const ModelIR& m, uint64_t seed, int x_i) {
  return bind(quantize_model(m, random_weights(m, seed), simple_formats(m)), x_i);
}

Feature run_frame(const Bound& b, const Feature& frame, int x_i, int threads = 0, const std::vector<int>& order = {}) {
  const BlockPlan plan = plan_blocks(b.q.model, frame.codes.w, frame.codes.h, x_i);
  return run_image(b.machine(), frame, plan, b.q.model.output_channels(), threads, order);
}

ModelIR single(LayerSpec l) {
  ModelIR m;
  m.name = "single";
  m.layers.push_back(l);
  validate_model(m);
  return m;
}

// v * 2^-shift, half away from zero, by integer division.
int64_t round_shift(int64_t v, int shift) {
  if (shift <= 0) return v * (int64_t{1} << -shift);
  const int64_t d = int64_t{1} << shift;
  const int64_t q = (std::abs(v) * 2 + d) / (2 * d);
  return v < 0 ? -q : q;
}

int64_t clip(int64_t v, QFormat f) { return std::clamp<int64_t>(v, f.min_code(), f.max_code()); }

}  // namespace

TEST_CASE("a delta kernel passes the input through") {
  const ModelIR m = single({LayerKind::Conv3x3, 3, 3, 1, 0});
  ModelWeights w = zero_weights(m);
  for (int c = 0; c < 3; ++c) w.layers[0].w[(static_cast<std::size_t>(c) * 3 + c) * 9 + 4] = 1.0f;
  std::vector<LayerFormats> f(1);
  f[0].w = Q(6);
  f[0].b = Q(6);
  f[0].out = UQ(8);
  const Bound b = bind(quantize_model(m, w, f), 32);
  const Feature frame = random_frame(40, 30, 3, 4);
  const Feature out = run_frame(b, frame, 32);
  CHECK(out == frame);
  CHECK(oracle_frame(b.q, frame) == frame);
}

TEST_CASE("a 1x1 identity requantizes the input") {
  const ModelIR m = single({LayerKind::Conv1x1, 3, 3, 1, 0});
  ModelWeights w = zero_weights(m);
  for (int c = 0; c < 3; ++c) w.layers[0].w[static_cast<std::size_t>(c) * 3 + c] = 1.0f;
  std::vector<LayerFormats> f(1);
  f[0].w = Q(6);
  f[0].b = Q(6);
  f[0].out = UQ(7);
  const Bound b = bind(quantize_model(m, w, f), 32);
  const Feature frame = random_frame(20, 20, 3, 5);
  const Feature out = run_frame(b, frame, 32);
  REQUIRE(out.codes.data.size() == frame.codes.data.size());
  CHECK(out.fmt == UQ(7));
  for (std::size_t i = 0; i < out.codes.data.size(); ++i)
    REQUIRE(out.codes.data[i] == quantize_code(frame.codes.data[i] / 256.0, UQ(7)));
}

TEST_CASE("ER instruction against an integer reference") {
  const ModelIR m = single({LayerKind::ERModule, 32, 32, 2, 0, Activation::ReLU});
  const Bound b = bind_random(m, 11, 16);
  REQUIRE(b.compiled.program.instrs.size() == 1);
  const QuantLayer& L = b.q.layers[0];
  const QFormat in = b.q.input_fmt, qw = L.fmt.w, qb = L.fmt.b, qs = *L.fmt.mid, qo = L.fmt.out;
  const Feature x = random_frame(16, 16, 32, 12);
  const BlockResult r = b.machine().run_block(x);
  REQUIRE(r.out.codes.w > 0);
  const int S3 = qw.frac_bits + in.frac_bits, S1 = qw.frac_bits + qs.frac_bits;
  const int S = std::max(S1, in.frac_bits);
  for (int oy = 0; oy < r.out.codes.h; ++oy)
    for (int ox = 0; ox < r.out.codes.w; ++ox) {
      const int X = static_cast<int>(r.origin_x) + ox, Y = static_cast<int>(r.origin_y) + oy;
      REQUIRE(X >= 1);
      REQUIRE(Y >= 1);
      REQUIRE(X < 15);
      REQUIRE(Y < 15);
      std::vector<int64_t> mid(64);
      for (int j = 0; j < 64; ++j) {
        int64_t acc = round_shift(L.b[j], qb.frac_bits - S3);
        for (int i = 0; i < 32; ++i)
          for (int t = 0; t < 9; ++t)
            acc += int64_t{L.w[(static_cast<std::size_t>(j) * 32 + i) * 9 + t]} * x.codes.at(X + t % 3 - 1, Y + t / 3 - 1, i);
        mid[j] = clip(round_shift(acc, S3 - qs.frac_bits), qs);
      }
      for (int o = 0; o < 32; ++o) {
        int64_t acc = round_shift(L.b2[o], qb.frac_bits - S1);
        for (int j = 0; j < 64; ++j) acc += int64_t{L.w2[static_cast<std::size_t>(o) * 64 + j]} * mid[j];
        const int64_t total = round_shift(acc, S1 - S) + round_shift(x.codes.at(X, Y, o), in.frac_bits - S);
        REQUIRE(r.out.codes.at(ox, oy, o) == clip(round_shift(total, S - qo.frac_bits), qo));
      }
    }
}

TEST_CASE("UPX2 on a constant block stays constant") {
  ModelIR m;
  m.name = "up";
  m.layers.push_back({LayerKind::Conv3x3, 32, 128, 1, 0});
  m.layers.push_back({LayerKind::PixelShuffleUp2, 128, 32, 1, 1});
  validate_model(m);
  ModelWeights w = random_weights(m, 3);
  LayerWeights& c = w.layers[0];
  for (int g = 1; g < 4; ++g) {
    std::copy_n(c.w.begin(), 32 * 32 * 9, c.w.begin() + g * 32 * 32 * 9);
    std::copy_n(c.b.begin(), 32, c.b.begin() + g * 32);
  }
  const Bound b = bind(quantize_model(m, w, simple_formats(m)), 32);
  Feature x;
  x.fmt = UQ(8);
  x.codes = CodeTensor(32, 32, 32, 100);
  const BlockResult r = b.machine().run_block(x);
  CHECK(r.level == 1);
  CHECK(r.out.codes.w % 2 == 0);
  CHECK(r.out.codes.w >= 2 * 28);
  for (int y = 0; y < r.out.codes.h; ++y)
    for (int xx = 0; xx < r.out.codes.w; ++xx)
      for (int ch = 0; ch < 32; ++ch) REQUIRE(r.out.codes.at(xx, y, ch) == r.out.codes.at(0, 0, ch));
}

TEST_CASE("block flow is bit-exact against the whole-frame oracle") {
  struct Run {
    ModelIR m;
    int w, h, x_i;
  };
  const std::vector<Run> runs = {
      {build_ernet(Family::Dn, 3, 1, 0), 70, 50, 32},
      {build_ernet(Family::Dn, 3, 2, 2), 40, 40, 64},
      {build_ernet(Family::Dn12ch, 2, 1, 1), 64, 48, 32},
      {build_ernet(Family::SR2, 2, 1, 1), 30, 22, 32},
      {build_ernet(Family::SR4, 2, 2, 0), 24, 18, 32},
      {build_ernet(Family::Dn, 3, 1, 0), 20, 12, 64},  // one block larger than the frame
  };
  for (const Run& run : runs) {
    INFO(run.m.name << " " << run.w << "x" << run.h << " x_i=" << run.x_i);
    const Bound b = bind_random(run.m, 21, run.x_i);
    const Feature frame = random_frame(run.w, run.h, run.m.input_channels(), 22);
    const Feature out = run_frame(b, frame, run.x_i);
    const Feature ref = oracle_frame(b.q, frame);
    CHECK(out.codes.w == run.w << run.m.output_scale_level());
    CHECK(out.codes.h == run.h << run.m.output_scale_level());
    CHECK(count_differences(out, ref) == 0);
  }
}

TEST_CASE("block order and thread count do not change the frame") {
  const ModelIR m = build_ernet(Family::SR2, 2, 1, 0);
  const Bound b = bind_random(m, 8, 32);
  const Feature frame = random_frame(50, 40, 3, 9);
  const BlockPlan plan = plan_blocks(m, 50, 40, 32);
  std::vector<int> order(static_cast<std::size_t>(plan.block_count()));
  std::iota(order.begin(), order.end(), 0);
  std::reverse(order.begin(), order.end());
  std::swap(order.front(), order[order.size() / 2]);
  const Feature a = run_frame(b, frame, 32, 1);
  CHECK(run_frame(b, frame, 32, 4, order) == a);
  CHECK(run_frame(b, frame, 32, 3) == a);
}

TEST_CASE("zero weights give zero output") {
  ModelIR m;
  m.name = "zeros";
  m.layers.push_back({LayerKind::Conv3x3, 3, 32, 1, 0, Activation::ReLU});
  m.layers.push_back({LayerKind::ERModule, 32, 32, 1, 0, Activation::ReLU});
  m.layers.push_back({LayerKind::Conv3x3, 32, 3, 1, 0});
  validate_model(m);
  const Bound b = bind(quantize_model(m, zero_weights(m), simple_formats(m)), 32);
  const Feature out = run_frame(b, random_frame(36, 36, 3, 1), 32);
  for (auto v : out.codes.data) REQUIRE(v == 0);
}

TEST_CASE("oracle op count matches the hardware accounting") {
  for (const ModelIR& m : {build_ernet(Family::Dn, 3, 1, 0), build_ernet(Family::SR2, 2, 1, 1)}) {
    const Bound b = bind_random(m, 2, 64);
    OpCounter ops;
    oracle_frame(b.q, random_frame(32, 32, 3, 3), &ops);
    CHECK(ops.kop_per_pixel() == doctest::Approx(intrinsic_complexity(m, CountMode::Hardware).intrinsic_kop_per_pixel).epsilon(1e-9));
  }
}

TEST_CASE("image files round-trip") {
  const auto dir = std::filesystem::temp_directory_path() / "ecnnkit_test_io";
  std::filesystem::create_directories(dir);
  for (int c : {1, 3}) {
    const Feature f = random_frame(13, 7, c, 30 + c);
    const auto p = (dir / (c == 1 ? "a.pgm" : "a.ppm")).string();
    write_pnm(p, f);
    CHECK(read_pnm(p) == f);
  }
  const Feature s = random_frame(5, 4, 32, 40, Q(3, 12));
  const auto d = (dir / "f.ecfd").string();
  write_feature_dump(d, s);
  CHECK(read_feature_dump(d) == s);
  CHECK_THROWS_AS(read_pnm((dir / "missing.pgm").string()), Error);
  std::filesystem::remove_all(dir);
}

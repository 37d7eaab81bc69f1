// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>

#include "ecnn/blockflow.hpp"

using namespace ecnn;

namespace {

ModelIR pointwise_model() {
  ModelIR m;
  m.name = "pointwise";
  m.layers.push_back({LayerKind::Conv1x1, 32, 32, 1, 0});
  validate_model(m);
  return m;
}

}  // namespace

TEST_CASE("nbr_plain") {
  CHECK(nbr_plain(40, 100) == doctest::Approx(26.0));
  CHECK(nbr_plain(0, 128) == 2.0);
  CHECK(nbr_plain(6, 128) == doctest::Approx(2.2176).epsilon(1e-4));
  CHECK_THROWS_AS(nbr_plain(64, 128), Error);
  for (int D = 1; D < 60; ++D) {
    CHECK(nbr_plain(D, 128) > nbr_plain(D - 1, 128));
    CHECK(nbr_plain(D, 128) < nbr_plain(D, 127));
  }
}

TEST_CASE("ncr_plain") {
  CHECK(ncr_plain(0, 128) == doctest::Approx(1.0));
  CHECK(ncr_plain(40, 100) == doctest::Approx(31.0 / 3.0));
  CHECK(1.0 - 1.0 / ncr_plain(40, 100) == doctest::Approx(0.903).epsilon(1e-3));
  CHECK(ncr_plain(15, 128) == doctest::Approx(1.337).epsilon(1e-3));
  CHECK_THROWS_AS(ncr_plain(64, 128), Error);
}

TEST_CASE("ncr_discrete against a direct sum for plain stacks") {
  for (int D : {1, 2, 6, 15, 30}) {
    const int x_i = 128, x_o = x_i - 2 * D;
    double num = 0;
    for (int d = 1; d <= D; ++d) num += static_cast<double>(x_i - 2 * d) * (x_i - 2 * d);
    const double expect = num / (static_cast<double>(D) * x_o * x_o);
    CHECK(ncr_discrete(build_plain(D), x_i) == doctest::Approx(expect));
    CHECK(ncr_discrete(build_plain(D), x_i) >= 1.0);
  }
  CHECK(ncr_discrete(build_plain(6), 128) == doctest::Approx(ncr_plain(6, 128)).epsilon(0.05));
  CHECK(ncr_discrete(pointwise_model(), 128) == doctest::Approx(1.0));
  CHECK_THROWS_AS(ncr_discrete(build_plain(64), 128), Error);
}

TEST_CASE("frame_bandwidth") {
  const double hd = frame_bandwidth(1080, 1920, 64, 20, 30, 16);
  CHECK(hd == doctest::Approx(302.58e9).epsilon(1e-4));
  CHECK(frame_bandwidth(2160, 3840, 64, 20, 30, 16) == doctest::Approx(4 * hd));
  CHECK(frame_bandwidth(1080, 1920, 64, 1, 30, 16) == 0.0);
}

TEST_CASE("plan_blocks for DnERNet at UHD") {
  const ModelIR m = build_ernet(Family::Dn, 3, 1, 0);
  const BlockPlan p = plan_blocks(m, 3840, 2160, 128);
  CHECK(p.x_o() == 116);
  CHECK(p.cols == 34);
  CHECK(p.rows == 19);
  CHECK(p.block_count() == 646);
  CHECK(p.extents.size() == m.layers.size());
  CHECK(p.extents.back().first == 116);
  CHECK_THROWS_AS(plan_blocks(m, 64, 64, 129), Error);
  CHECK_THROWS_AS(plan_blocks(build_plain(64), 64, 64, 128), Error);
}

TEST_CASE("pointwise model is one block and NBR 2") {
  const ModelIR m = pointwise_model();
  CHECK(plan_blocks(m, 128, 128, 128).block_count() == 1);
  const BlockPlan p = plan_blocks(m, 512, 256, 128);
  CHECK(block_bandwidth(m, p, 30, 3, 3).nbr == doctest::Approx(2.0));
}

TEST_CASE("SR4 output stratum bookkeeping") {
  const ModelIR m = build_ernet(Family::SR4, 3, 1, 0);
  const BlockGeometry g = block_geometry(m, 64);
  // Five 3x3 layers before the first upsampler conv, then conv, x2, conv, x2,
  // tail conv: ((6 * 2 + 1) * 2) + 1 = 27 output pixels of border per side.
  CHECK(g.out_level == 2);
  CHECK(g.out_valid == Interval{27, 4 * 64 - 27});
  CHECK(g.out_start >= g.out_valid.lo);
  CHECK(g.out_start % g.align == 0);
  CHECK(g.out_start + g.x_o <= g.out_valid.hi);
}

TEST_CASE("output blocks partition the frame exactly") {
  std::mt19937 rng(4);
  const ModelIR models[] = {build_ernet(Family::Dn, 3, 1, 0), build_ernet(Family::SR2, 2, 1, 0),
                            build_ernet(Family::Dn12ch, 2, 1, 0)};
  for (const ModelIR& m : models)
    for (int it = 0; it < 6; ++it) {
      const int w = 8 + static_cast<int>(rng() % 300), h = 8 + static_cast<int>(rng() % 300);
      const BlockPlan p = plan_blocks(m, w, h, 64);
      std::vector<int> hits(static_cast<std::size_t>(p.out_w) * p.out_h, 0);
      for (int r = 0; r < p.rows; ++r)
        for (int c = 0; c < p.cols; ++c) {
          const BlockRect b = p.rect(c, r);
          for (int64_t y = b.out_y; y < b.out_y + b.out_h; ++y)
            for (int64_t x = b.out_x; x < b.out_x + b.out_w; ++x) ++hits[static_cast<std::size_t>(y * p.out_w + x)];
        }
      for (int v : hits) REQUIRE(v == 1);
    }
}

TEST_CASE("block_bandwidth") {
  const ModelIR dn = build_ernet(Family::Dn, 3, 1, 0);
  const BandwidthReport uhd = block_bandwidth(dn, plan_blocks(dn, 3840, 2160, 128), 30, 3, 3);
  CHECK(uhd.gb_per_s == doctest::Approx(1.66).epsilon(0.05));
  CHECK(uhd.nbr == doctest::Approx(2.2).epsilon(0.05));
  CHECK(uhd.nbr >= 2.0);
  const BandwidthReport hd = block_bandwidth(dn, plan_blocks(dn, 1920, 1080, 128), 30, 3, 3);
  CHECK(hd.gb_per_s == doctest::Approx(uhd.gb_per_s / 4).epsilon(0.05));
  for (int D : {4, 11, 15, 25}) {
    const ModelIR p = build_plain(D);
    const BandwidthReport r = block_bandwidth(p, plan_blocks(p, 3840, 2160, 128), 30, 1, 1);
    CHECK(r.nbr == doctest::Approx(nbr_plain(D, 128)).epsilon(0.05));
    CHECK(r.nbr <= nbr_plain(D, 128) + 1e-9);  // clamped edge reads
  }
}

TEST_CASE("stitch") {
  const ModelIR m = build_plain(2);
  const BlockPlan p = plan_blocks(m, 250, 130, 64);
  Tensor<int> frame(p.out_w, p.out_h, 2);
  for (std::size_t i = 0; i < frame.data.size(); ++i) frame.data[i] = static_cast<int>(i * 7 % 1001);
  std::vector<BlockOutput<int>> blocks;
  for (int r = 0; r < p.rows; ++r)
    for (int c = 0; c < p.cols; ++c) {
      const BlockRect b = p.rect(c, r);
      Tensor<int> t(static_cast<int>(b.out_w), static_cast<int>(b.out_h), 2);
      for (int y = 0; y < t.h; ++y)
        for (int x = 0; x < t.w; ++x)
          for (int ch = 0; ch < 2; ++ch)
            t.at(x, y, ch) = frame.at(static_cast<int>(b.out_x) + x, static_cast<int>(b.out_y) + y, ch);
      blocks.push_back({c, r, t});
    }
  CHECK(stitch(blocks, p) == frame);
  auto dup = blocks;
  dup.push_back(blocks.front());
  CHECK_THROWS_AS(stitch(dup, p), Error);
  auto missing = blocks;
  missing.pop_back();
  CHECK_THROWS_AS(stitch(missing, p), Error);
}

TEST_CASE("splitting into sub-models") {
  const ModelIR m = build_plain(12);
  const SplitReport s = split_analysis(m, 6, 1920, 1080, 128, 30, 3);
  CHECK(s.ncr_split <= s.ncr_whole);
  CHECK(s.intermediate_bytes_per_frame == doctest::Approx(2.0 * 32 * 1 * 1920 * 1080));
  CHECK(s.split.gb_per_s > s.whole.gb_per_s);
}

TEST_CASE("analysis csv") {
  AnalysisRow r{"plain-D6", 128, 6, 1.09, 2.22, 1.66, 83.3};
  const std::string row = analysis_csv_row(r);
  CHECK(analysis_csv_header().rfind("model,", 0) == 0);
  CHECK(row.rfind("plain-D6,128,6,", 0) == 0);
  CHECK(conv_depth(build_ernet(Family::Dn, 3, 1, 0)) == 6);
}

// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ecnn/modelir.hpp"
#include "ecnn/tensor.hpp"

namespace ecnn {

inline constexpr int kMaxBlockSide = 128;

// Closed-form ratios for a plain stack of D 3x3 layers on x_i-wide blocks.
double nbr_plain(int D, int x_i);
double ncr_plain(int D, int x_i);

// Frame-based DRAM traffic for intermediate feature maps, bytes/s.
double frame_bandwidth(double H, double W, double C, double D, double fps, double L_bits);

// Block geometry in block-local coordinates. Each layer's valid interval is
// tracked in its own resolution; the output lives at `out_level`.
struct BlockGeometry {
  int x_i = 0;
  int out_level = 0;
  int64_t align = 1;   // output origins are multiples of this (output pixels)
  Interval out_valid;  // raw valid output interval [A, B)
  int64_t out_start = 0;  // A rounded up to `align`
  int x_o = 0;
  std::vector<Interval> layer_intervals;
};

BlockGeometry block_geometry(const ModelIR& m, int x_i);

// Sum of block-flow ops over sum of frame-based ops for the same outputs.
double ncr_discrete(const ModelIR& m, int x_i);

enum class EdgePolicy { Replicate };

struct BlockRect {
  int col = 0, row = 0;
  int64_t out_x = 0, out_y = 0;  // output-frame origin
  int64_t out_w = 0, out_h = 0;  // clipped to the frame
  int64_t in_x = 0, in_y = 0;    // input-frame origin of the x_i read window
};

struct BlockPlan {
  std::string model_name;
  int frame_w = 0, frame_h = 0;  // input frame
  int out_w = 0, out_h = 0;      // output frame
  BlockGeometry geom;
  int cols = 0, rows = 0;
  // Valid (width, height) after each layer for a full block.
  std::vector<std::pair<int, int>> extents;
  EdgePolicy edge = EdgePolicy::Replicate;

  int x_i() const { return geom.x_i; }
  int x_o() const { return geom.x_o; }
  int block_count() const { return cols * rows; }
  BlockRect rect(int col, int row) const;
};

BlockPlan plan_blocks(const ModelIR& m, int frame_w, int frame_h, int x_i);

struct BandwidthReport {
  double input_bytes_per_frame = 0;
  double output_bytes_per_frame = 0;
  double nbr = 0;
  double gb_per_s = 0;
};

// Actual per-block reads (needed input region clipped to the frame) and
// output writes.
BandwidthReport block_bandwidth(const ModelIR& m, const BlockPlan& plan, double fps, double bytes_per_pixel_in,
                                double bytes_per_pixel_out);

// Effect of cutting a model into two sub-models at layer `cut`.
struct SplitReport {
  double ncr_whole = 0;
  double ncr_split = 0;
  double intermediate_bytes_per_frame = 0;  // written once and read once
  BandwidthReport whole;
  BandwidthReport split;  // includes the intermediate traffic
};

SplitReport split_analysis(const ModelIR& m, std::size_t cut, int frame_w, int frame_h, int x_i, double fps,
                           double bytes_per_pixel_io, int feature_bits = 8);

// A cropped block result ready for stitching.
template <typename T>
struct BlockOutput {
  int col = 0, row = 0;
  Tensor<T> data;
};

template <typename T>
Tensor<T> stitch(const std::vector<BlockOutput<T>>& blocks, const BlockPlan& plan) {
  if (blocks.empty()) throw Error("stitch: no blocks");
  const int c = blocks.front().data.c;
  Tensor<T> frame(plan.out_w, plan.out_h, c);
  std::vector<char> seen(static_cast<std::size_t>(plan.block_count()), 0);
  for (const auto& b : blocks) {
    if (b.col < 0 || b.col >= plan.cols || b.row < 0 || b.row >= plan.rows)
      throw Error("stitch: block outside the grid");
    char& s = seen[static_cast<std::size_t>(b.row) * plan.cols + b.col];
    if (s) throw Error("stitch: duplicate block (" + std::to_string(b.col) + "," + std::to_string(b.row) + ")");
    s = 1;
    const BlockRect r = plan.rect(b.col, b.row);
    if (b.data.w != r.out_w || b.data.h != r.out_h || b.data.c != c) throw Error("stitch: block shape mismatch");
    for (int y = 0; y < b.data.h; ++y)
      for (int x = 0; x < b.data.w; ++x)
        for (int ch = 0; ch < c; ++ch)
          frame.at(static_cast<int>(r.out_x) + x, static_cast<int>(r.out_y) + y, ch) = b.data.at(x, y, ch);
  }
  for (std::size_t i = 0; i < seen.size(); ++i)
    if (!seen[i]) throw Error("stitch: missing block " + std::to_string(i));
  return frame;
}

// Tabular report for the analyze command.
struct AnalysisRow {
  std::string model;
  int x_i = 0;
  int depth = 0;
  double ncr = 0;
  double nbr = 0;
  double gb_per_s = 0;
  double kop_per_pixel = 0;
};

std::string analysis_csv_header();
std::string analysis_csv_row(const AnalysisRow& r);

// Number of layers that consume a 3x3 border, counted at any stratum.
int conv_depth(const ModelIR& m);

}  // namespace ecnn

// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "ecnn/blockflow.hpp"
#include "ecnn/fbisa.hpp"
#include "ecnn/kernels.hpp"
#include "ecnn/paramcodec.hpp"
#include "ecnn/tensor.hpp"

namespace ecnn {

// DO contents of one block. Pixel (x, y) of `out` sits at block-local
// position (origin_x + x, origin_y + y) in output-resolution coordinates.
struct BlockResult {
  Feature out;  // 32 channels
  int64_t origin_x = 0, origin_y = 0;
  int level = 0;
};

// A program bound to its decoded parameters. Immutable after construction,
// so run_block may be called from several threads.
class Machine {
 public:
  Machine(Program p, const ParamContainer& params, const KernelSet* kernels = nullptr);

  // `input` is an x_i by x_i block in the program's input format with at
  // most 32 channels.
  BlockResult run_block(const Feature& input) const;

  const Program& program() const { return program_; }
  const GeometryTrace& geometry() const { return geometry_; }
  const KernelSet& kernels() const { return *kernels_; }

 private:
  struct PackedLeaf {
    std::vector<int16_t> w3, w1, bias;
  };
  Program program_;
  GeometryTrace geometry_;
  std::map<uint32_t, std::vector<PackedLeaf>> params_;
  const KernelSet* kernels_;
};

// Worker threads for frame runs: ECNNKIT_THREADS if set, else the hardware
// concurrency.
int worker_count();

// Runs every block of `plan` and stitches the first `out_channels`
// channels. Blocks run on `threads` workers (0 = worker_count()) in the
// order given by `order` (empty = raster order).
Feature run_image(const Machine& m, const Feature& frame, const BlockPlan& plan, int out_channels, int threads = 0,
                  const std::vector<int>& order = {});

// The x_i by x_i input window of a block, edges replicated.
Feature block_input(const Feature& frame, const BlockRect& r, int x_i);

}  // namespace ecnn

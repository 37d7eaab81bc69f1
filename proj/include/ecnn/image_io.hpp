// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "ecnn/banks.hpp"
#include "ecnn/tensor.hpp"

namespace ecnn {

// Binary PGM (P5) and PPM (P6), 8-bit. Pixels load as UQ8 codes.
Feature read_pnm(const std::string& path);
// One or three channels. Non-UQ8 features are converted through their real
// values (x * 256, rounded and clipped).
void write_pnm(const std::string& path, const Feature& f);

// Debug dump: "ECFD", u32 w, h, c, u8 signed, i8 frac_bits, u8 width, then
// int16 codes in HWC order, all little-endian.
void write_feature_dump(const std::string& path, const Feature& f);
Feature read_feature_dump(const std::string& path);

// CSV rows "cycle,unit,bank,op" for a program's buffer accesses.
void write_trace_csv(std::ostream& os, const Program& p, const std::vector<Access>& trace);

}  // namespace ecnn

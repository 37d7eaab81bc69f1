// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ecnn/fixedpoint.hpp"

namespace ecnn {

// Magnitude categories 0..16 cover every int16 code.
inline constexpr int kCategories = 17;
inline constexpr int kMaxCodeLength = 16;

using Histogram = std::array<uint64_t, kCategories>;

// Bit length of |v|; 0 for v == 0.
int category(int v);
// Raw value bits following the category code: v for v > 0, v + 2^cat - 1 for v < 0.
uint32_t value_bits(int v, int cat);
int value_from_bits(uint32_t bits, int cat);

// Canonical prefix code over categories, JPEG style: counts[l] codes of
// length l+1, symbols in code order.
struct HuffTable {
  std::array<uint8_t, kMaxCodeLength> counts{};
  std::vector<uint8_t> symbols;
  std::array<uint8_t, kCategories> length{};  // 0 = absent
  std::array<uint16_t, kCategories> code{};

  std::size_t serialized_size() const { return kMaxCodeLength + symbols.size(); }
  friend bool operator==(const HuffTable& a, const HuffTable& b) {
    return a.counts == b.counts && a.symbols == b.symbols;
  }
};

// Optimal (Huffman) code for a non-empty histogram. A single used category
// gets a 1-bit code.
HuffTable build_table(const Histogram& hist);
// Rebuilds codes from counts and symbols; throws on an inconsistent table.
HuffTable table_from_counts(const std::array<uint8_t, kMaxCodeLength>& counts, const std::vector<uint8_t>& symbols);

// Shannon entropy of the category distribution in bits times the symbol count.
double entropy_bits(const Histogram& hist);
// Huffman-coded category bits for the histogram.
uint64_t coded_bits(const HuffTable& t, const Histogram& hist);
// Sum of the raw value bits.
uint64_t raw_value_bits(const Histogram& hist);

class BitWriter {
 public:
  void put(uint32_t bits, int n);  // most significant bit first
  void put_byte(uint8_t b) { put(b, 8); }
  // Pads the last partial byte with zero bits.
  std::vector<uint8_t> finish();
  std::size_t bit_count() const { return bits_; }

 private:
  std::vector<uint8_t> out_;
  std::size_t bits_ = 0;
};

class BitReader {
 public:
  BitReader(const uint8_t* data, std::size_t size) : data_(data), size_(size) {}
  uint32_t get(int n);
  uint8_t get_byte() { return static_cast<uint8_t>(get(8)); }
  std::size_t bit_pos() const { return pos_; }

 private:
  const uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

void write_table(BitWriter& w, const HuffTable& t);
HuffTable read_table(BitReader& r);

void encode_value(BitWriter& w, const HuffTable& t, int v);
int decode_value(BitReader& r, const HuffTable& t);

}  // namespace ecnn

// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

// Binary program format, all little-endian:
//
//   "FBISA\0"  u16 version
//   u16 x_i  u16 channels  u16 bb_count  u8 input_fmt  u8 reserved
//   u32 param_mem_bytes
//   u32 boundary_count  u32 boundary[boundary_count]
//   u32 instruction_count  16-byte record[instruction_count]
//
// Records are bit fields packed from bit 0 of byte 0 upwards:
//
//   opcode:2 type:1 pool:2 lm-1:2 tiles_x:7 tiles_y:7
//   src:3 out:3 out_is_dstS:1 srcS:3 (7 = none)
//   src.x:7 src.y:7 out.x:9 out.y:9 srcS.x:7 srcS.y:7
//   param:16 qw:7 qb:7 qo:7 qs:7 (0x7f = none)
//
// A Q-format byte holds n+8 in bits 0-4, bit 5 set for 7-bit width and
// bit 6 set for signed.

#include <fstream>
#include <iterator>

#include "ecnn/fbisa.hpp"

namespace ecnn {

namespace {

constexpr uint8_t kNoBuffer = 7;
constexpr uint8_t kNoFormat = 0x7f;

class BitPacker {
 public:
  void put(uint64_t v, int bits, const char* field) {
    if (bits < 64 && v >= (uint64_t{1} << bits))
      throw Error(std::string("program record field '") + field + "' out of range");
    for (int i = 0; i < bits; ++i, ++pos_)
      if ((v >> i) & 1) bytes_[pos_ / 8] |= static_cast<uint8_t>(1u << (pos_ % 8));
  }
  const uint8_t* data() const { return bytes_; }
  int used() const { return pos_; }

 private:
  uint8_t bytes_[16] = {};
  int pos_ = 0;
};

class BitUnpacker {
 public:
  explicit BitUnpacker(const uint8_t* b) : bytes_(b) {}
  uint64_t get(int bits) {
    uint64_t v = 0;
    for (int i = 0; i < bits; ++i, ++pos_)
      if ((bytes_[pos_ / 8] >> (pos_ % 8)) & 1) v |= uint64_t{1} << i;
    return v;
  }

 private:
  const uint8_t* bytes_;
  int pos_ = 0;
};

uint8_t pack_format(QFormat f) {
  if (f.width != 8 && f.width != 7) throw Error("only 7- and 8-bit formats are encodable");
  if (f.frac_bits < -8 || f.frac_bits > 22) throw Error("Q-format " + f.to_string() + " not encodable");
  return static_cast<uint8_t>((f.frac_bits + 8) | (f.width == 7 ? 0x20 : 0) | (f.is_signed ? 0x40 : 0));
}

QFormat unpack_format(uint8_t b) {
  if (b == kNoFormat || b > 0x7f) throw Error("corrupt Q-format field");
  return QFormat{(b & 0x40) != 0, (b & 0x1f) - 8, (b & 0x20) ? 7 : 8};
}

BufferId unpack_buffer(uint64_t v) {
  if (v > static_cast<uint64_t>(BufferId::DO)) throw Error("corrupt buffer id in program record");
  return static_cast<BufferId>(v);
}

class ByteWriter {
 public:
  void u8(uint8_t v) { out.push_back(v); }
  void u16(uint16_t v) {
    u8(static_cast<uint8_t>(v));
    u8(static_cast<uint8_t>(v >> 8));
  }
  void u32(uint32_t v) {
    u16(static_cast<uint16_t>(v));
    u16(static_cast<uint16_t>(v >> 16));
  }
  std::vector<uint8_t> out;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<uint8_t>& b) : b_(b) {}
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw Error("truncated program file");
  }
  uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  uint16_t u16() {
    const uint16_t lo = u8();
    return static_cast<uint16_t>(lo | (u8() << 8));
  }
  uint32_t u32() {
    const uint32_t lo = u16();
    return lo | (uint32_t{u16()} << 16);
  }
  const uint8_t* take(std::size_t n) {
    need(n);
    const uint8_t* p = b_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  const std::vector<uint8_t>& b_;
  std::size_t pos_ = 0;
};

const char kMagic[6] = {'F', 'B', 'I', 'S', 'A', '\0'};

}  // namespace

std::vector<uint8_t> encode_program(const Program& p) {
  ByteWriter w;
  for (char c : kMagic) w.u8(static_cast<uint8_t>(c));
  w.u16(kProgramVersion);
  w.u16(static_cast<uint16_t>(p.config.x_i));
  w.u16(static_cast<uint16_t>(p.config.channels));
  w.u16(static_cast<uint16_t>(p.config.bb_count));
  w.u8(pack_format(p.input_fmt));
  w.u8(0);
  w.u32(static_cast<uint32_t>(p.config.param_mem_bytes));
  w.u32(static_cast<uint32_t>(p.submodel_boundaries.size()));
  for (std::size_t b : p.submodel_boundaries) w.u32(static_cast<uint32_t>(b));
  w.u32(static_cast<uint32_t>(p.instrs.size()));
  for (const Instruction& ins : p.instrs) {
    BitPacker r;
    const BufferRef out = ins.dst ? *ins.dst : ins.dstS ? *ins.dstS : BufferRef{BufferId::DO};
    const BufferRef srcS = ins.srcS ? *ins.srcS : BufferRef{};
    r.put(static_cast<uint64_t>(ins.op), 2, "opcode");
    r.put(static_cast<uint64_t>(ins.type), 1, "type");
    r.put(static_cast<uint64_t>(ins.pool), 2, "pool");
    r.put(static_cast<uint64_t>(ins.lm - 1), 2, "lm");
    r.put(static_cast<uint64_t>(ins.tiles_x), 7, "tiles_x");
    r.put(static_cast<uint64_t>(ins.tiles_y), 7, "tiles_y");
    r.put(static_cast<uint64_t>(ins.src.id), 3, "src");
    r.put(static_cast<uint64_t>(out.id), 3, "dst");
    r.put(ins.dstS ? 1 : 0, 1, "dstS");
    r.put(ins.srcS ? static_cast<uint64_t>(ins.srcS->id) : kNoBuffer, 3, "srcS");
    r.put(static_cast<uint64_t>(ins.src.off_x), 7, "src.x");
    r.put(static_cast<uint64_t>(ins.src.off_y), 7, "src.y");
    r.put(static_cast<uint64_t>(out.off_x), 9, "dst.x");
    r.put(static_cast<uint64_t>(out.off_y), 9, "dst.y");
    r.put(static_cast<uint64_t>(srcS.off_x), 7, "srcS.x");
    r.put(static_cast<uint64_t>(srcS.off_y), 7, "srcS.y");
    r.put(ins.param, 16, "param");
    r.put(pack_format(ins.qw), 7, "qw");
    r.put(pack_format(ins.qb), 7, "qb");
    r.put(pack_format(ins.qo), 7, "qo");
    r.put(ins.qs ? pack_format(*ins.qs) : kNoFormat, 7, "qs");
    w.out.insert(w.out.end(), r.data(), r.data() + 16);
  }
  return w.out;
}

Program decode_program(const std::vector<uint8_t>& bytes) {
  ByteReader r(bytes);
  const uint8_t* magic = r.take(6);
  for (int i = 0; i < 6; ++i)
    if (magic[i] != static_cast<uint8_t>(kMagic[i])) throw Error("not an FBISA program file");
  const uint16_t version = r.u16();
  if (version != kProgramVersion) throw Error("unsupported program version " + std::to_string(version));
  Program p;
  p.config.x_i = r.u16();
  p.config.channels = r.u16();
  p.config.bb_count = r.u16();
  p.input_fmt = unpack_format(r.u8());
  r.u8();
  p.config.param_mem_bytes = r.u32();
  const uint32_t nb = r.u32();
  r.need(static_cast<std::size_t>(nb) * 4);
  for (uint32_t i = 0; i < nb; ++i) p.submodel_boundaries.push_back(r.u32());
  const uint32_t n = r.u32();
  r.need(static_cast<std::size_t>(n) * 16);
  for (uint32_t i = 0; i < n; ++i) {
    BitUnpacker u(r.take(16));
    Instruction ins;
    ins.op = static_cast<Opcode>(u.get(2));
    ins.type = static_cast<InferType>(u.get(1));
    const uint64_t pool = u.get(2);
    if (pool > 2) throw Error("corrupt pool field in program record");
    ins.pool = static_cast<Pool>(pool);
    ins.lm = static_cast<int>(u.get(2)) + 1;
    ins.tiles_x = static_cast<int>(u.get(7));
    ins.tiles_y = static_cast<int>(u.get(7));
    ins.src.id = unpack_buffer(u.get(3));
    const BufferId out = unpack_buffer(u.get(3));
    const bool partial = u.get(1) != 0;
    const uint64_t srcS = u.get(3);
    ins.src.off_x = static_cast<int>(u.get(7));
    ins.src.off_y = static_cast<int>(u.get(7));
    BufferRef o{out, static_cast<int>(u.get(9)), 0};
    o.off_y = static_cast<int>(u.get(9));
    (partial ? ins.dstS : ins.dst) = o;
    BufferRef s{BufferId::BB0, static_cast<int>(u.get(7)), 0};
    s.off_y = static_cast<int>(u.get(7));
    if (srcS != kNoBuffer) {
      s.id = unpack_buffer(srcS);
      ins.srcS = s;
    }
    ins.param = static_cast<uint32_t>(u.get(16));
    ins.qw = unpack_format(static_cast<uint8_t>(u.get(7)));
    ins.qb = unpack_format(static_cast<uint8_t>(u.get(7)));
    ins.qo = unpack_format(static_cast<uint8_t>(u.get(7)));
    const uint8_t qs = static_cast<uint8_t>(u.get(7));
    if (qs != kNoFormat) ins.qs = unpack_format(qs);
    p.instrs.push_back(ins);
  }
  if (!r.done()) throw Error("trailing bytes after program records");
  return p;
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return std::vector<uint8_t>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path);
}

}  // namespace ecnn

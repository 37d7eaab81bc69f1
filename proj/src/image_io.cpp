// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecnn/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "ecnn/fbisa.hpp"

namespace ecnn {

namespace {

int read_header_int(std::istream& in) {
  int c = in.peek();
  while (std::isspace(c) || c == '#') {
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else {
      in.get();
    }
    c = in.peek();
  }
  int v = 0;
  if (!(in >> v)) throw Error("malformed PNM header");
  return v;
}

void put_u32(std::ostream& o, uint32_t v) {
  for (int i = 0; i < 4; ++i) o.put(static_cast<char>(v >> (8 * i)));
}

uint32_t get_u32(std::istream& in) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(in.get())) << (8 * i);
  return v;
}

}  // namespace

Feature read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  if (magic != "P5" && magic != "P6") throw Error(path + ": only binary PGM/PPM images are supported");
  const int w = read_header_int(in), h = read_header_int(in), maxval = read_header_int(in);
  if (w <= 0 || h <= 0 || maxval != 255) throw Error(path + ": expected 8-bit image with positive size");
  in.get();
  const int c = magic == "P5" ? 1 : 3;
  Feature f;
  f.fmt = UQ(8);
  f.codes = CodeTensor(w, h, c);
  std::vector<uint8_t> bytes(f.codes.data.size());
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw Error(path + ": truncated pixel data");
  for (std::size_t i = 0; i < bytes.size(); ++i) f.codes.data[i] = bytes[i];
  return f;
}

void write_pnm(const std::string& path, const Feature& f) {
  const int c = f.codes.c;
  if (c != 1 && c != 3) throw Error("PNM output needs 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << (c == 1 ? "P5" : "P6") << "\n" << f.codes.w << " " << f.codes.h << "\n255\n";
  std::vector<uint8_t> bytes(f.codes.data.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const double v = std::ldexp(static_cast<double>(f.codes.data[i]), 8 - f.fmt.frac_bits);
    bytes[i] = static_cast<uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path);
}

void write_feature_dump(const std::string& path, const Feature& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out.write("ECFD", 4);
  put_u32(out, static_cast<uint32_t>(f.codes.w));
  put_u32(out, static_cast<uint32_t>(f.codes.h));
  put_u32(out, static_cast<uint32_t>(f.codes.c));
  out.put(f.fmt.is_signed ? 1 : 0);
  out.put(static_cast<char>(static_cast<int8_t>(f.fmt.frac_bits)));
  out.put(static_cast<char>(f.fmt.width));
  for (int16_t v : f.codes.data) {
    out.put(static_cast<char>(v & 0xff));
    out.put(static_cast<char>((v >> 8) & 0xff));
  }
  if (!out) throw Error("write failed for " + path);
}

Feature read_feature_dump(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "ECFD") throw Error(path + ": not a feature dump");
  const uint32_t w = get_u32(in), h = get_u32(in), c = get_u32(in);
  Feature f;
  f.fmt.is_signed = in.get() != 0;
  f.fmt.frac_bits = static_cast<int8_t>(in.get());
  f.fmt.width = in.get();
  if (!in || w == 0 || h == 0 || c == 0 || w > 1u << 16 || h > 1u << 16 || c > 4096)
    throw Error(path + ": corrupt feature dump header");
  f.codes = CodeTensor(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c));
  for (int16_t& v : f.codes.data) {
    const int lo = in.get(), hi = in.get();
    v = static_cast<int16_t>(static_cast<uint16_t>(lo | (hi << 8)));
  }
  if (!in) throw Error(path + ": truncated feature dump");
  return f;
}

void write_trace_csv(std::ostream& os, const Program& p, const std::vector<Access>& trace) {
  os << "cycle,unit,bank,op\n";
  for (const Access& a : trace) {
    os << a.cycle << ',' << (a.write ? "write:" : "read:") << to_string(a.buf) << ','
       << bank_of(a.mapping, a.tx, a.ty) << ',' << to_string(p.instrs.at(a.instr).op) << '\n';
  }
}

}  // namespace ecnn

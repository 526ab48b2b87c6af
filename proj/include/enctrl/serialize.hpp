/*
 * Copyright 2026 The enctrl Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Binary framing for ciphertexts, multiplier matrices, parameters and keys.
// All integers little-endian; residues are two's-complement signed 128-bit.
//
//   ciphertext:  "HECT" u16 version, u8 base, u16 d, u32 N, u32 rows,
//                rows*(N+1) x i128 (row-major, signed representatives)
//   gsw matrix:  "HEGM" u16 version, u32 m, u32 n, m*n ciphertext frames
//   params:      "HEPA" u16 version, u8 base, i128 p, i128 L, i128 r, u32 N, u64 seed
//   secret key:  params frame, then "HESK" u16 version, u8 base, u16 d, u32 N,
//                u32 rows (= N), N x i128

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "enctrl/errors.hpp"
#include "enctrl/gsw.hpp"
#include "enctrl/lwe.hpp"

namespace enctrl {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::uint16_t kFormatVersion = 1;

class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put_le(v, 2); }
  void u32(std::uint32_t v) { put_le(v, 4); }
  void u64(std::uint64_t v) { put_le(v, 8); }
  void i128(Int v) {
    auto u = static_cast<unsigned __int128>(v);
    for (int i = 0; i < 16; ++i) {
      out_.push_back(static_cast<std::uint8_t>(u & 0xff));
      u >>= 8;
    }
  }
  void magic(std::string_view m) { out_.insert(out_.end(), m.begin(), m.end()); }
  void bytes(const Bytes& b) { out_.insert(out_.end(), b.begin(), b.end()); }

  Bytes& data() { return out_; }
  Bytes take() { return std::move(out_); }

 private:
  void put_le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  }
  Bytes out_;
};

class ByteReader {
 public:
  explicit ByteReader(const Bytes& in) : in_(in) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get_le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get_le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get_le(4)); }
  std::uint64_t u64() { return get_le(8); }
  Int i128() {
    need(16);
    unsigned __int128 u = 0;
    for (int i = 15; i >= 0; --i) u = (u << 8) | in_[pos_ + i];
    pos_ += 16;
    return static_cast<Int>(u);
  }
  void expect_magic(std::string_view m) {
    need(m.size());
    if (std::memcmp(in_.data() + pos_, m.data(), m.size()) != 0) {
      throw ParseError("bad magic, expected '" + std::string(m) + "'");
    }
    pos_ += m.size();
  }
  bool peek_magic(std::string_view m) const {
    return remaining() >= m.size() && std::memcmp(in_.data() + pos_, m.data(), m.size()) == 0;
  }
  std::size_t remaining() const { return in_.size() - pos_; }
  void expect_end() const {
    if (remaining() != 0) throw ParseError(std::to_string(remaining()) + " trailing bytes");
  }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw ParseError("truncated frame");
  }
  std::uint64_t get_le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = n - 1; i >= 0; --i) v = (v << 8) | in_[pos_ + static_cast<std::size_t>(i)];
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  const Bytes& in_;
  std::size_t pos_ = 0;
};

namespace detail {

inline void expect_version(ByteReader& r) {
  const auto v = r.u16();
  if (v != kFormatVersion) throw ParseError("unsupported format version " + std::to_string(v));
}

inline void write_integer_block(ByteWriter& w, std::string_view magic, const Params& params, std::uint32_t rows,
                                const std::vector<Int>& values) {
  w.magic(magic);
  w.u16(kFormatVersion);
  w.u8(static_cast<std::uint8_t>(params.base));
  w.u16(static_cast<std::uint16_t>(params.digits()));
  w.u32(params.N);
  w.u32(rows);
  for (Int v : values) w.i128(v);
}

struct BlockHeader {
  Int base;
  unsigned d;
  std::uint32_t n_key;
  std::uint32_t rows;
};

inline BlockHeader read_block_header(ByteReader& r, std::string_view magic) {
  r.expect_magic(magic);
  expect_version(r);
  BlockHeader h{r.u8(), r.u16(), r.u32(), r.u32()};
  if (h.base < 2) throw ParseError("invalid base in frame");
  if (h.n_key == 0) throw ParseError("invalid key dimension in frame");
  return h;
}

}  // namespace detail

inline void write_ciphertext(ByteWriter& w, const Ciphertext& c, const Params& params) {
  if (c.body.cols() != params.N + 1) throw ShapeMismatch("ciphertext width does not match params");
  detail::write_integer_block(w, "HECT", params, static_cast<std::uint32_t>(c.rows()), c.body.values());
}

inline Bytes serialize_ciphertext(const Ciphertext& c, const Params& params) {
  ByteWriter w;
  write_ciphertext(w, c, params);
  return w.take();
}

/// Reads one ciphertext frame; rejects residues outside [base^d].
inline Ciphertext read_ciphertext(ByteReader& r) {
  const auto h = detail::read_block_header(r, "HECT");
  const ModRing ring = [&] {
    try {
      return ModRing(h.base, h.d);
    } catch (const InvalidParams& e) {
      throw ParseError(std::string("ciphertext header: ") + e.what());
    }
  }();
  const std::size_t cols = static_cast<std::size_t>(h.n_key) + 1;
  if (r.remaining() / 16 / cols < h.rows) throw ParseError("truncated ciphertext payload");
  ModMatrix body(h.rows, cols);
  for (std::size_t i = 0; i < body.size(); ++i) {
    const Int v = r.i128();
    if (!ring.contains(v)) throw ParseError("residue outside the signed range of the modulus");
    body.data()[i] = v;
  }
  return {std::move(body), std::nullopt};
}

inline Ciphertext deserialize_ciphertext(const Bytes& bytes) {
  ByteReader r(bytes);
  auto c = read_ciphertext(r);
  r.expect_end();
  return c;
}

inline void write_gsw_matrix(ByteWriter& w, const GswMatrix& m, const Params& params) {
  w.magic("HEGM");
  w.u16(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(static_cast<std::uint32_t>(m.cols()));
  for (const auto& e : m.entries()) write_ciphertext(w, Ciphertext{e.body, std::nullopt}, params);
}

inline GswMatrix read_gsw_matrix(ByteReader& r) {
  r.expect_magic("HEGM");
  detail::expect_version(r);
  const std::uint32_t rows = r.u32();
  const std::uint32_t cols = r.u32();
  if (static_cast<std::uint64_t>(rows) * cols > r.remaining()) throw ParseError("GswMatrix shape exceeds payload");
  std::vector<GswCiphertext> entries;
  entries.reserve(static_cast<std::size_t>(rows) * cols);
  std::optional<std::size_t> width;
  for (std::uint64_t k = 0; k < static_cast<std::uint64_t>(rows) * cols; ++k) {
    Ciphertext c = read_ciphertext(r);
    const std::size_t w = c.body.cols();
    if (width && *width != w) throw ParseError("GswMatrix entries disagree on key dimension");
    width = w;
    if (c.rows() % w != 0) throw ParseError("GswMatrix entry is not d(N+1) x (N+1)");
    entries.push_back({std::move(c.body), std::nullopt, std::nullopt});
  }
  return GswMatrix(rows, cols, std::move(entries));
}

inline Bytes serialize_gsw_matrix(const GswMatrix& m, const Params& params) {
  ByteWriter w;
  write_gsw_matrix(w, m, params);
  return w.take();
}

inline GswMatrix deserialize_gsw_matrix(const Bytes& bytes) {
  ByteReader r(bytes);
  auto m = read_gsw_matrix(r);
  r.expect_end();
  return m;
}

inline void write_params(ByteWriter& w, const Params& params) {
  w.magic("HEPA");
  w.u16(kFormatVersion);
  w.u8(static_cast<std::uint8_t>(params.base));
  w.i128(params.p);
  w.i128(params.L);
  w.i128(params.r);
  w.u32(params.N);
  w.u64(params.seed);
}

inline Params read_params(ByteReader& r) {
  r.expect_magic("HEPA");
  detail::expect_version(r);
  Params p;
  p.base = r.u8();
  p.p = r.i128();
  p.L = r.i128();
  p.r = r.i128();
  p.N = r.u32();
  p.seed = r.u64();
  try {
    p.validate();
  } catch (const InvalidParams& e) {
    throw ParseError(std::string("invalid parameters in frame: ") + e.what());
  }
  return p;
}

inline Bytes serialize_params(const Params& params) {
  ByteWriter w;
  write_params(w, params);
  return w.take();
}

inline Params deserialize_params(const Bytes& bytes) {
  ByteReader r(bytes);
  auto p = read_params(r);
  r.expect_end();
  return p;
}

inline Bytes serialize_key_file(const SecretKey& key, const Params& params) {
  ByteWriter w;
  write_params(w, params);
  detail::write_integer_block(w, "HESK", params, static_cast<std::uint32_t>(key.sk.size()), key.sk);
  return w.take();
}

inline std::pair<SecretKey, Params> deserialize_key_file(const Bytes& bytes) {
  ByteReader r(bytes);
  Params params = read_params(r);
  const auto h = detail::read_block_header(r, "HESK");
  if (h.n_key != params.N || h.rows != params.N || h.base != params.base || h.d != params.digits()) {
    throw ParseError("key block does not match its parameter block");
  }
  SecretKey key;
  for (std::uint32_t i = 0; i < h.rows; ++i) {
    const Int v = r.i128();
    if (!in_centered(v, params.q() * params.L)) throw ParseError("key entry outside [q*L]");
    key.sk.push_back(v);
  }
  r.expect_end();
  return {std::move(key), params};
}

inline Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const Bytes& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("cannot write '" + path + "'");
}

}  // namespace enctrl

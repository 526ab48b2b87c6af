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

// Exact signed modular arithmetic over Z_q. Residues live in the signed
// representative set [q] = { i : -q/2 <= i < q/2 }.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "enctrl/errors.hpp"
#include "enctrl/matrix.hpp"

namespace enctrl {

using Int = __int128;

inline constexpr Int kInt128Max = static_cast<Int>(~static_cast<unsigned __int128>(0) >> 1);

// Largest supported modulus. Keeps every residue product below 2^124 so a
// reduced accumulator plus one product never overflows Int.
inline constexpr Int kMaxModulus = static_cast<Int>(1) << 62;

inline constexpr Int floor_mod(Int x, Int m) {
  Int r = x % m;
  return r < 0 ? r + m : r;
}

inline constexpr Int floor_div(Int x, Int m) {
  Int d = x / m;
  if (x % m != 0 && ((x < 0) != (m < 0))) --d;
  return d;
}

/// Signed residue: the unique r with r = x (mod q) and -q/2 <= r < q/2.
inline constexpr Int smod(Int x, Int q) {
  const Int r = floor_mod(x, q);
  return 2 * r >= q ? r - q : r;
}

/// True when -m/2 <= x < m/2, i.e. x is in the signed set [m].
inline constexpr bool in_centered(Int x, Int m) {
  return 2 * x >= -m && 2 * x < m;
}

/// Smallest and largest element of [m].
inline constexpr Int centered_min(Int m) { return -(m / 2); }
inline constexpr Int centered_max(Int m) { return m - m / 2 - 1; }

inline constexpr Int abs_int(Int x) { return x < 0 ? -x : x; }

inline Int checked_pow(Int base, unsigned exp) {
  Int out = 1;
  for (unsigned i = 0; i < exp; ++i) {
    if (__builtin_mul_overflow(out, base, &out)) throw InvalidParams("integer power overflows 127 bits");
  }
  return out;
}

/// Returns d when value == base^d exactly.
inline std::optional<unsigned> exact_log(Int value, Int base) {
  if (base < 2 || value < 1) return std::nullopt;
  unsigned d = 0;
  while (value % base == 0) {
    value /= base;
    ++d;
  }
  if (value != 1) return std::nullopt;
  return d;
}

inline std::string to_string(Int x) {
  if (x == 0) return "0";
  const bool neg = x < 0;
  unsigned __int128 u = neg ? static_cast<unsigned __int128>(-(x + 1)) + 1 : static_cast<unsigned __int128>(x);
  std::string s;
  while (u != 0) {
    s.push_back(static_cast<char>('0' + static_cast<int>(u % 10)));
    u /= 10;
  }
  if (neg) s.push_back('-');
  std::reverse(s.begin(), s.end());
  return s;
}

/// Parses an optionally signed decimal integer. Throws ParseError.
inline Int parse_int(std::string_view text) {
  std::size_t i = 0;
  bool neg = false;
  if (i < text.size() && (text[i] == '+' || text[i] == '-')) {
    neg = text[i] == '-';
    ++i;
  }
  if (i == text.size()) throw ParseError("expected integer, got '" + std::string(text) + "'");
  Int v = 0;
  for (; i < text.size(); ++i) {
    const char c = text[i];
    if (c < '0' || c > '9') throw ParseError("expected integer, got '" + std::string(text) + "'");
    if (__builtin_mul_overflow(v, Int{10}, &v) || __builtin_add_overflow(v, Int{c - '0'}, &v)) {
      throw ParseError("integer literal out of range: " + std::string(text));
    }
  }
  return neg ? -v : v;
}

/// The ring Z_q with q = base^digits, viewed through signed residues.
class ModRing {
 public:
  ModRing(Int base, unsigned digits) : base_(base), digits_(digits) {
    if (base < 2) throw InvalidParams("decomposition base must be >= 2");
    q_ = checked_pow(base, digits);
    if (q_ < 4) throw InvalidParams("modulus must be >= 4, got " + to_string(q_));
    if (q_ > kMaxModulus) throw InvalidParams("modulus " + to_string(q_) + " exceeds 2^62");
  }

  static ModRing from_modulus(Int q, Int base) {
    const auto d = exact_log(q, base);
    if (!d) throw InvalidParams("modulus " + to_string(q) + " is not a power of base " + to_string(base));
    return ModRing(base, *d);
  }

  Int modulus() const { return q_; }
  Int base() const { return base_; }
  unsigned digits() const { return digits_; }

  Int reduce(Int x) const { return smod(x, q_); }
  Int add(Int a, Int b) const { return smod(a + b, q_); }
  Int sub(Int a, Int b) const { return smod(a - b, q_); }
  // Operands must already be residues (or at least below 2^62 in magnitude).
  Int mul(Int a, Int b) const { return smod(a * b, q_); }
  bool contains(Int x) const { return in_centered(x, q_); }

  bool operator==(const ModRing&) const = default;

 private:
  Int base_;
  unsigned digits_;
  Int q_ = 0;
};

using ModMatrix = Matrix<Int>;

inline ModMatrix mat_smod(const ModMatrix& a, const ModRing& ring) {
  return a.map([&](Int v) { return ring.reduce(v); });
}

inline ModMatrix mat_add(const ModMatrix& a, const ModMatrix& b, const ModRing& ring) {
  require_same_shape(a, b, "mat_add");
  ModMatrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = ring.add(ring.reduce(a.data()[i]), ring.reduce(b.data()[i]));
  return out;
}

inline ModMatrix mat_sub(const ModMatrix& a, const ModMatrix& b, const ModRing& ring) {
  require_same_shape(a, b, "mat_sub");
  ModMatrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = ring.sub(ring.reduce(a.data()[i]), ring.reduce(b.data()[i]));
  return out;
}

inline ModMatrix mat_neg(const ModMatrix& a, const ModRing& ring) {
  return a.map([&](Int v) { return ring.reduce(-v); });
}

inline ModMatrix mat_scale(const ModMatrix& a, Int k, const ModRing& ring) {
  const Int kr = ring.reduce(k);
  return a.map([&](Int v) { return ring.mul(ring.reduce(v), kr); });
}

// Each partial product is reduced before accumulation, so the result is exact
// for any inner dimension.
inline ModMatrix mat_mul(const ModMatrix& a, const ModMatrix& b, const ModRing& ring) {
  if (a.cols() != b.rows()) {
    throw ShapeMismatch("mat_mul: " + shape_string(a) + " * " + shape_string(b));
  }
  ModMatrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const Int aik = ring.reduce(a(i, k));
      if (aik == 0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) {
        out(i, j) = ring.reduce(out(i, j) + aik * ring.reduce(b(k, j)));
      }
    }
  }
  return out;
}

}  // namespace enctrl

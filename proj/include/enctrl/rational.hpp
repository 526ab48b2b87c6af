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

// Exact rationals over Int, plus the round-half-away-from-zero convention
// used throughout quantization and decryption.

#include <cmath>
#include <compare>
#include <ostream>
#include <string>
#include <string_view>
#include <type_traits>

#include "enctrl/errors.hpp"
#include "enctrl/zq.hpp"

namespace enctrl {

namespace detail {

inline Int gcd(Int a, Int b) {
  a = abs_int(a);
  b = abs_int(b);
  while (b != 0) {
    const Int t = a % b;
    a = b;
    b = t;
  }
  return a;
}

inline Int mul_checked(Int a, Int b) {
  Int out;
  if (__builtin_mul_overflow(a, b, &out)) throw Error("rational arithmetic overflow");
  return out;
}

inline Int add_checked(Int a, Int b) {
  Int out;
  if (__builtin_add_overflow(a, b, &out)) throw Error("rational arithmetic overflow");
  return out;
}

}  // namespace detail

class Rational {
 public:
  Rational() = default;
  template <typename I>
    requires(std::is_integral_v<I> || std::is_same_v<I, Int>)
  Rational(I n) : num_(static_cast<Int>(n)) {}  // NOLINT: integers convert implicitly
  Rational(Int n, Int d) : num_(n), den_(d) {
    if (d == 0) throw Error("rational with zero denominator");
    normalize();
  }

  /// Accepts "12", "-1.414", "1e-3", "2.5E+2" and "a/b". Exact, no floating point.
  static Rational parse(std::string_view text) {
    const auto trim = [](std::string_view s) {
      while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
      while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
      return s;
    };
    text = trim(text);
    if (const auto slash = text.find('/'); slash != std::string_view::npos) {
      return parse(text.substr(0, slash)) / parse(text.substr(slash + 1));
    }
    std::string_view mantissa = text;
    long exponent = 0;
    if (const auto e = text.find_first_of("eE"); e != std::string_view::npos) {
      mantissa = text.substr(0, e);
      const Int ex = parse_int(text.substr(e + 1));
      if (abs_int(ex) > 60) throw ParseError("exponent out of range in '" + std::string(text) + "'");
      exponent = static_cast<long>(ex);
    }
    std::string digits;
    bool seen_point = false;
    long frac_digits = 0;
    for (std::size_t i = 0; i < mantissa.size(); ++i) {
      const char c = mantissa[i];
      if (c == '.') {
        if (seen_point) throw ParseError("malformed number '" + std::string(text) + "'");
        seen_point = true;
      } else if ((c == '-' || c == '+') && i == 0) {
        digits.push_back(c);
      } else if (c >= '0' && c <= '9') {
        digits.push_back(c);
        if (seen_point) ++frac_digits;
      } else {
        throw ParseError("malformed number '" + std::string(text) + "'");
      }
    }
    if (digits.empty() || digits == "-" || digits == "+") throw ParseError("malformed number '" + std::string(text) + "'");
    const Int n = parse_int(digits);
    const long shift = exponent - frac_digits;
    if (shift >= 0) return Rational(detail::mul_checked(n, checked_pow(10, static_cast<unsigned>(shift))));
    return Rational(n, checked_pow(10, static_cast<unsigned>(-shift)));
  }

  Int num() const { return num_; }
  Int den() const { return den_; }
  bool is_integer() const { return den_ == 1; }

  Int floor() const { return floor_div(num_, den_); }

  double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }

  /// Exact decimal text when the expansion terminates, otherwise "num/den".
  std::string to_string() const {
    Int d = den_;
    unsigned twos = 0, fives = 0;
    while (d % 2 == 0) { d /= 2; ++twos; }
    while (d % 5 == 0) { d /= 5; ++fives; }
    if (d != 1) return enctrl::to_string(num_) + "/" + enctrl::to_string(den_);
    const unsigned k = std::max(twos, fives);
    if (k == 0) return enctrl::to_string(num_);
    const Int scaled = detail::mul_checked(num_, checked_pow(10, k) / den_);
    const bool neg = scaled < 0;
    std::string mag = enctrl::to_string(abs_int(scaled));
    if (mag.size() <= k) mag.insert(0, k + 1 - mag.size(), '0');
    mag.insert(mag.size() - k, ".");
    while (mag.back() == '0') mag.pop_back();
    if (mag.back() == '.') mag.pop_back();
    return neg ? "-" + mag : mag;
  }

  friend Rational operator+(const Rational& a, const Rational& b) {
    const Int g = detail::gcd(a.den_, b.den_);
    const Int lhs = detail::mul_checked(a.num_, b.den_ / g);
    const Int rhs = detail::mul_checked(b.num_, a.den_ / g);
    return Rational(detail::add_checked(lhs, rhs), detail::mul_checked(a.den_ / g, b.den_));
  }
  friend Rational operator-(const Rational& a) { return Rational(-a.num_, a.den_); }
  friend Rational operator-(const Rational& a, const Rational& b) { return a + (-b); }
  friend Rational operator*(const Rational& a, const Rational& b) {
    const Int g1 = detail::gcd(a.num_, b.den_);
    const Int g2 = detail::gcd(b.num_, a.den_);
    const Int n = detail::mul_checked(a.num_ / (g1 == 0 ? 1 : g1), b.num_ / (g2 == 0 ? 1 : g2));
    const Int d = detail::mul_checked(a.den_ / (g2 == 0 ? 1 : g2), b.den_ / (g1 == 0 ? 1 : g1));
    return Rational(n, d);
  }
  friend Rational operator/(const Rational& a, const Rational& b) {
    if (b.num_ == 0) throw Error("rational division by zero");
    return a * Rational(b.den_, b.num_);
  }
  Rational& operator+=(const Rational& o) { return *this = *this + o; }
  Rational& operator-=(const Rational& o) { return *this = *this - o; }
  Rational& operator*=(const Rational& o) { return *this = *this * o; }

  friend bool operator==(const Rational& a, const Rational& b) { return a.num_ == b.num_ && a.den_ == b.den_; }
  friend std::strong_ordering operator<=>(const Rational& a, const Rational& b) {
    const Int lhs = detail::mul_checked(a.num_, b.den_);
    const Int rhs = detail::mul_checked(b.num_, a.den_);
    return lhs <=> rhs;
  }

  friend std::ostream& operator<<(std::ostream& os, const Rational& r) { return os << r.to_string(); }

 private:
  void normalize() {
    if (den_ < 0) {
      num_ = -num_;
      den_ = -den_;
    }
    const Int g = detail::gcd(num_, den_);
    if (g > 1) {
      num_ /= g;
      den_ /= g;
    }
  }

  Int num_ = 0;
  Int den_ = 1;
};

inline Rational abs(const Rational& r) { return r < Rational(0) ? -r : r; }

/// Nearest integer; ties (|frac| = 1/2) go away from zero, so -2.5 -> -3.
inline Int round_half_away(const Rational& x) {
  const Int a = abs_int(x.num());
  const Int b = x.den();
  const Int mag = (2 * a + b) / (2 * b);
  return x.num() < 0 ? -mag : mag;
}

inline Int round_half_away(double x) {
  if (!std::isfinite(x) || std::fabs(x) > 1e36) throw Error("cannot round non-finite or huge value");
  // std::round already breaks ties away from zero.
  return static_cast<Int>(std::round(x));
}

}  // namespace enctrl

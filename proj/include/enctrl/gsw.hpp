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

// GSW-style multiplier encryption and ciphertext products.
//
// A multiplier m2 is encrypted as M2 = m2*R + O, where R = [1, v, ..., v^(d-1)]^T (x) I_{N+1}
// is the gadget matrix and every row of O is a fresh encryption of zero. A
// multiplicand row c is expanded into its radix-v digits D(c) (so D(c)*R = c),
// and the product D(c)*M2 decrypts to m2*m1 with error m2*e1 + D(c)*e_O.

#include <optional>
#include <span>
#include <vector>

#include "enctrl/errors.hpp"
#include "enctrl/lwe.hpp"
#include "enctrl/rational.hpp"
#include "enctrl/zq.hpp"

namespace enctrl {

/// R = [v^0, v^1, ..., v^(d-1)]^T (x) I_{N+1}, shape d(N+1) x (N+1).
inline ModMatrix gadget_matrix(const Params& params) {
  const ModRing ring = params.ring();
  const std::size_t w = params.N + 1;
  const unsigned d = ring.digits();
  ModMatrix g(d * w, w);
  Int power = 1;
  for (unsigned k = 0; k < d; ++k) {
    for (std::size_t i = 0; i < w; ++i) g(k * w + i, i) = ring.reduce(power);
    power *= ring.base();
  }
  return g;
}

/// Radix digits of the non-negative representatives of c, least significant
/// block first: entry k*len(c) + j is digit k of (c_j mod q). Digits lie in [0, v-1].
inline std::vector<Int> decompose(std::span<const Int> c, const ModRing& ring) {
  const std::size_t w = c.size();
  const unsigned d = ring.digits();
  std::vector<Int> out(d * w, 0);
  for (std::size_t j = 0; j < w; ++j) {
    Int x = floor_mod(c[j], ring.modulus());
    for (unsigned k = 0; k < d; ++k) {
      out[k * w + j] = x % ring.base();
      x /= ring.base();
    }
  }
  return out;
}

inline std::vector<Int> decompose(const std::vector<Int>& c, const ModRing& ring) {
  return decompose(std::span<const Int>(c), ring);
}

struct GswCiphertext {
  ModMatrix body;  // d(N+1) x (N+1)

  // Instrumentation only: |m2| and the max error of the zero rows. Never
  // serialized and never read by the arithmetic.
  std::optional<Int> multiplier_magnitude;
  std::optional<Int> noise_budget;

  bool operator==(const GswCiphertext& o) const { return body == o.body; }
};

/// Enc2(m2) = m2*R + Enc(0_{d(N+1)}). `opts` applies to the zero encryption.
inline GswCiphertext encrypt_gsw(Int m2, const SecretKey& key, const Params& params, Rng& rng,
                                 const EncryptOptions& opts = {}) {
  check_plaintext({m2}, params);
  const ModRing ring = params.ring();
  const ModMatrix r = gadget_matrix(params);
  const Ciphertext zeros = encrypt(Plaintext(r.rows(), 0), key, params, rng, opts);
  return {mat_add(mat_scale(r, m2, ring), zeros.body, ring), abs_int(m2), zeros.noise_budget};
}

/// D(c1) * M2 for a single-row multiplicand c1.
inline Ciphertext mul(const GswCiphertext& multiplier, const Ciphertext& multiplicand, const Params& params) {
  const ModRing ring = params.ring();
  const std::size_t w = params.N + 1;
  if (multiplicand.rows() != 1 || multiplicand.body.cols() != w) {
    throw ShapeMismatch("mul: multiplicand must be a single 1x(N+1) row, got " + shape_string(multiplicand.body));
  }
  if (multiplier.body.rows() != ring.digits() * w || multiplier.body.cols() != w) {
    throw ShapeMismatch("mul: multiplier must be d(N+1)x(N+1), got " + shape_string(multiplier.body));
  }
  const auto digits = decompose(multiplicand.body.row(0), ring);
  ModMatrix out = mat_mul(ModMatrix::row_vector(digits), multiplier.body, ring);

  std::optional<Int> budget;
  if (multiplicand.noise_budget && multiplier.multiplier_magnitude && multiplier.noise_budget) {
    budget = *multiplier.multiplier_magnitude * *multiplicand.noise_budget +
             (ring.base() - 1) * *multiplier.noise_budget * static_cast<Int>(digits.size());
  }
  return {std::move(out), budget};
}

/// One GswCiphertext per entry of an integer matrix. Immutable once built.
class GswMatrix {
 public:
  GswMatrix() = default;
  GswMatrix(std::size_t rows, std::size_t cols, std::vector<GswCiphertext> entries)
      : rows_(rows), cols_(cols), entries_(std::move(entries)) {
    if (entries_.size() != rows_ * cols_) throw ShapeMismatch("GswMatrix: entry count does not match shape");
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  const GswCiphertext& at(std::size_t i, std::size_t j) const { return entries_[i * cols_ + j]; }
  const std::vector<GswCiphertext>& entries() const { return entries_; }

  bool operator==(const GswMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<GswCiphertext> entries_;
};

inline GswMatrix encrypt_gsw_matrix(const Matrix<Int>& f, const SecretKey& key, const Params& params, Rng& rng,
                                    const EncryptOptions& opts = {}) {
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!in_centered(f.data()[i], params.p)) {
      throw PlaintextOutOfRange("matrix entry " + to_string(f.data()[i]) + " is outside [p]");
    }
  }
  std::vector<GswCiphertext> entries;
  entries.reserve(f.size());
  for (std::size_t i = 0; i < f.rows(); ++i)
    for (std::size_t j = 0; j < f.cols(); ++j) entries.push_back(encrypt_gsw(f(i, j), key, params, rng, opts));
  return GswMatrix(f.rows(), f.cols(), std::move(entries));
}

/// (F x_C x)_i = sum_j D(x_j) * F_enc[i][j]  (mod q).
inline Ciphertext mat_mul_ct(const GswMatrix& f, const Ciphertext& x, const Params& params) {
  if (f.cols() != x.rows()) {
    throw ShapeMismatch("mat_mul_ct: " + std::to_string(f.rows()) + "x" + std::to_string(f.cols()) +
                        " multiplier against " + std::to_string(x.rows()) + "-row ciphertext");
  }
  const ModRing ring = params.ring();
  const std::size_t w = params.N + 1;
  ModMatrix out(f.rows(), w);
  std::optional<Int> budget = Int{0};
  for (std::size_t i = 0; i < f.rows(); ++i) {
    std::optional<Int> row_budget = Int{0};
    for (std::size_t j = 0; j < f.cols(); ++j) {
      const Ciphertext term = mul(f.at(i, j), x.row(j), params);
      for (std::size_t k = 0; k < w; ++k) out(i, k) = ring.add(out(i, k), term.body(0, k));
      if (row_budget && term.noise_budget) *row_budget += *term.noise_budget;
      else row_budget.reset();
    }
    if (budget && row_budget) budget = std::max(*budget, *row_budget);
    else budget.reset();
  }
  return {std::move(out), budget};
}

/// Analysis bound on ||Delta(F, x) / L||_inf for an m x n multiplier:
///   (v - 1) * n * r * d / (2L)   (9 n r log10(q) / (2L) in base 10).
/// This is the customary estimate; it does not count the N+1 key columns, see
/// delta_bound_worst_case for the rigorous figure.
inline Rational delta_bound(std::size_t n, const Params& params) {
  const Int d = params.digits();
  return Rational((params.base - 1) * static_cast<Int>(n) * params.r * d, 2 * params.L);
}

inline Rational delta_bound(const Matrix<Int>& f, const Params& params) { return delta_bound(f.cols(), params); }

/// Rigorous worst case: every one of the d(N+1) digits at v-1 against an error of floor(r/2).
inline Rational delta_bound_worst_case(std::size_t n, const Params& params) {
  const Int d = params.digits();
  return Rational((params.base - 1) * static_cast<Int>(n) * params.fresh_noise() * d * (params.N + 1), params.L);
}

/// Measured multiplication error Delta(F, x) = (F x_C x)*s - F*(x*s)  (mod q).
/// Instrumentation: needs the key and the plaintext F.
inline std::vector<Int> delta_actual(const Ciphertext& product, const Matrix<Int>& f, const Ciphertext& x,
                                     const SecretKey& key, const Params& params) {
  const auto lhs = phase(product, key, params);
  const auto xs = phase(x, key, params);
  if (lhs.size() != f.rows() || xs.size() != f.cols()) throw ShapeMismatch("delta_actual: shape mismatch");
  std::vector<Int> out(f.rows());
  for (std::size_t i = 0; i < f.rows(); ++i) {
    Int acc = lhs[i];
    for (std::size_t j = 0; j < f.cols(); ++j) acc = smod(acc - f(i, j) * xs[j], params.q());
    out[i] = acc;
  }
  return out;
}

}  // namespace enctrl

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

// Symmetric LWE encryption of integer vectors:
//   Enc(m) = [ b, A ],  b = -A*sk + L*m + e  (mod q),  q = L*p
//   Dec(c) = round( (c*s mod q) / L ) mod p,  s = [1; sk]
// plus homomorphic addition, plaintext scaling and worst-case noise tracking.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "enctrl/errors.hpp"
#include "enctrl/matrix.hpp"
#include "enctrl/rational.hpp"
#include "enctrl/zq.hpp"

namespace enctrl {

using Rng = std::mt19937_64;
using Plaintext = std::vector<Int>;

struct Params {
  Int p = 10000;    // plaintext modulus
  Int L = 10000;    // scaling factor
  Int r = 10;       // errors are drawn from [r]
  unsigned N = 4;   // secret key dimension
  Int base = 10;    // decomposition radix
  std::uint64_t seed = 0;

  Int q() const { return L * p; }
  ModRing ring() const { return ModRing::from_modulus(q(), base); }
  unsigned digits() const { return ring().digits(); }

  /// Largest |e| over the error set [r].
  Int fresh_noise() const { return r / 2; }

  void validate() const {
    if (base < 2 || base > 255) throw InvalidParams("base must be in [2, 255], got " + to_string(base));
    if (!exact_log(p, base) || p < base) throw InvalidParams("p = " + to_string(p) + " is not a positive power of base " + to_string(base));
    if (!exact_log(L, base) || L < base) throw InvalidParams("L = " + to_string(L) + " is not a positive power of base " + to_string(base));
    if (r < 1) throw InvalidParams("r must be >= 1");
    if (r >= L) throw InvalidParams("r = " + to_string(r) + " must be smaller than L = " + to_string(L));
    if (N < 1) throw InvalidParams("N must be >= 1");
    if (p > kMaxModulus / L) throw InvalidParams("q = L*p exceeds 2^62");
    if (q() > (static_cast<Int>(1) << 63) / L) throw InvalidParams("q*L (secret key range) exceeds 2^63");
  }

  bool operator==(const Params&) const = default;
};

struct SecretKey {
  std::vector<Int> sk;  // entries in [q*L]

  /// Extended key s = [1, sk^T]^T.
  std::vector<Int> s() const {
    std::vector<Int> out;
    out.reserve(sk.size() + 1);
    out.push_back(1);
    out.insert(out.end(), sk.begin(), sk.end());
    return out;
  }

  bool operator==(const SecretKey&) const = default;
};

struct Ciphertext {
  ModMatrix body;                  // rows x (N+1), columns [b, A]
  std::optional<Int> noise_budget;  // worst-case bound on the error infinity norm

  std::size_t rows() const { return body.rows(); }

  Ciphertext row(std::size_t i) const {
    return {ModMatrix::row_vector(std::vector<Int>(body.row(i).begin(), body.row(i).end())), noise_budget};
  }

  /// Vertical concatenation; the budget is the max of the parts when all are tracked.
  static Ciphertext stack(const std::vector<Ciphertext>& parts) {
    if (parts.empty()) return {};
    const std::size_t cols = parts.front().body.cols();
    std::size_t rows = 0;
    std::optional<Int> budget = Int{0};
    for (const auto& c : parts) {
      if (c.body.cols() != cols) throw ShapeMismatch("stack: ciphertext widths differ");
      rows += c.rows();
      if (budget && c.noise_budget) budget = std::max(*budget, *c.noise_budget);
      else budget.reset();
    }
    ModMatrix body(rows, cols);
    std::size_t at = 0;
    for (const auto& c : parts)
      for (std::size_t i = 0; i < c.rows(); ++i, ++at)
        for (std::size_t j = 0; j < cols; ++j) body(at, j) = c.body(i, j);
    return {std::move(body), budget};
  }

  // Equality compares the ciphertext itself, not the metadata.
  bool operator==(const Ciphertext& o) const { return body == o.body; }
};

/// Test and instrumentation hooks that bypass the PRNG.
struct EncryptOptions {
  std::optional<ModMatrix> forced_a;       // n x N
  std::optional<std::vector<Int>> forced_e;
  bool zero_error = false;                // e = 0, A still random
};

/// Uniform sample from [m].
inline Int sample_centered(Int m, Rng& rng) {
  std::uniform_int_distribution<std::int64_t> dist(static_cast<std::int64_t>(centered_min(m)),
                                                   static_cast<std::int64_t>(centered_max(m)));
  return dist(rng);
}

inline SecretKey keygen(const Params& params, Rng& rng) {
  params.validate();
  SecretKey key;
  key.sk.resize(params.N);
  for (auto& v : key.sk) v = sample_centered(params.q() * params.L, rng);
  return key;
}

inline SecretKey keygen(const Params& params) {
  Rng rng(params.seed);
  return keygen(params, rng);
}

inline void check_plaintext(const Plaintext& m, const Params& params) {
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!in_centered(m[i], params.p)) {
      throw PlaintextOutOfRange("message entry " + std::to_string(i) + " = " + to_string(m[i]) +
                                " is outside [p] for p = " + to_string(params.p));
    }
  }
}

inline Ciphertext encrypt(const Plaintext& m, const SecretKey& key, const Params& params, Rng& rng,
                          const EncryptOptions& opts = {}) {
  check_plaintext(m, params);
  if (key.sk.size() != params.N) throw ShapeMismatch("secret key length does not match N");
  const ModRing ring = params.ring();
  const std::size_t n = m.size();
  const std::size_t N = params.N;

  ModMatrix a;
  if (opts.forced_a) {
    if (opts.forced_a->rows() != n || opts.forced_a->cols() != N) throw ShapeMismatch("forced A must be n x N");
    a = mat_smod(*opts.forced_a, ring);
  } else {
    a = ModMatrix(n, N);
    for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] = sample_centered(ring.modulus(), rng);
  }

  std::vector<Int> e(n, 0);
  Int budget = 0;
  if (opts.forced_e) {
    if (opts.forced_e->size() != n) throw ShapeMismatch("forced e must have one entry per message");
    e = *opts.forced_e;
    for (Int v : e) budget = std::max(budget, abs_int(v));
  } else if (!opts.zero_error) {
    for (auto& v : e) v = sample_centered(params.r, rng);
    budget = params.fresh_noise();
  }

  ModMatrix body(n, N + 1);
  for (std::size_t i = 0; i < n; ++i) {
    Int acc = ring.reduce(params.L * m[i] + e[i]);
    for (std::size_t j = 0; j < N; ++j) {
      acc = ring.reduce(acc - a(i, j) * ring.reduce(key.sk[j]));
      body(i, j + 1) = a(i, j);
    }
    body(i, 0) = acc;
  }
  return {std::move(body), budget};
}

/// smod(c*s, q): the message scaled by L plus the error, before rounding.
inline std::vector<Int> phase(const Ciphertext& c, const SecretKey& key, const Params& params) {
  const ModRing ring = params.ring();
  if (c.body.cols() != key.sk.size() + 1) throw ShapeMismatch("ciphertext width does not match key");
  std::vector<Int> out(c.rows());
  for (std::size_t i = 0; i < c.rows(); ++i) {
    Int acc = ring.reduce(c.body(i, 0));
    for (std::size_t j = 0; j < key.sk.size(); ++j) acc = ring.reduce(acc + ring.reduce(c.body(i, j + 1)) * ring.reduce(key.sk[j]));
    out[i] = acc;
  }
  return out;
}

inline Plaintext decrypt(const Ciphertext& c, const SecretKey& key, const Params& params) {
  Plaintext out;
  for (Int ph : phase(c, key, params)) out.push_back(smod(round_half_away(Rational(ph, params.L)), params.p));
  return out;
}

inline Ciphertext add(const Ciphertext& c1, const Ciphertext& c2, const ModRing& ring) {
  require_same_shape(c1.body, c2.body, "ciphertext add");
  std::optional<Int> budget;
  if (c1.noise_budget && c2.noise_budget) budget = *c1.noise_budget + *c2.noise_budget;
  return {mat_add(c1.body, c2.body, ring), budget};
}

inline Ciphertext add(const Ciphertext& c1, const Ciphertext& c2, const Params& params) {
  return add(c1, c2, params.ring());
}

/// Multiplication by a public integer, i.e. repeated addition.
inline Ciphertext scalar_mul_plain(const Ciphertext& c, Int k, const Params& params) {
  std::optional<Int> budget;
  if (c.noise_budget) budget = abs_int(k) * *c.noise_budget;
  return {mat_scale(c.body, k, params.ring()), budget};
}

/// Exact error vector smod(c*s, q) - L*m_true. Needs the key and ground truth.
inline std::vector<Int> noise_actual(const Ciphertext& c, const Plaintext& m_true, const SecretKey& key,
                                     const Params& params) {
  const auto ph = phase(c, key, params);
  if (ph.size() != m_true.size()) throw ShapeMismatch("noise_actual: message length mismatch");
  std::vector<Int> out(ph.size());
  for (std::size_t i = 0; i < ph.size(); ++i) out[i] = smod(ph[i] - params.L * m_true[i], params.q());
  return out;
}

}  // namespace enctrl

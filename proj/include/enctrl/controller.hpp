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

// Controller quantization, integer-F realizations of FIR and PID filters, and
// the encrypted controller runtime.
//
// A real controller x+ = F x + G y, u = H x + J y with integer F is scaled to
//   xbar+ = F xbar + Gbar ybar,  ubar = Hbar xbar + Jbar ybar
// with Gbar = round(G/S_G), Hbar = round(H/S_HJ), Jbar = round(J/(S_HJ S_G)),
// ybar = round(y/R_y) and u = R_u round((R_y S_G S_HJ / R_u) ubar).

#include <span>
#include <string>
#include <vector>

#include "enctrl/errors.hpp"
#include "enctrl/gsw.hpp"
#include "enctrl/lwe.hpp"
#include "enctrl/matrix.hpp"
#include "enctrl/rational.hpp"

namespace enctrl {

using RationalMatrix = Matrix<Rational>;

struct LinearController {
  RationalMatrix F;  // n x n
  RationalMatrix G;  // n x 1
  RationalMatrix H;  // 1 x n
  RationalMatrix J;  // 1 x 1
  std::vector<Rational> x0;

  std::size_t order() const { return F.rows(); }

  void validate() const {
    const std::size_t n = F.rows();
    if (F.cols() != n || G.rows() != n || H.cols() != n || H.rows() != J.rows() || G.cols() != J.cols() ||
        x0.size() != n) {
      throw ShapeMismatch("controller dimensions are inconsistent: F " + shape_string(F) + ", G " + shape_string(G) +
                          ", H " + shape_string(H) + ", J " + shape_string(J) + ", x0 " + std::to_string(x0.size()));
    }
  }
};

struct Scales {
  Rational Ry{1};
  Rational Sg{1};
  Rational Shj{1};
  Rational Ru{1};

  /// R_y S_G S_HJ, the real value of one unit of ubar.
  Rational output_unit() const { return Ry * Sg * Shj; }

  void validate() const {
    const Rational zero(0);
    if (Ry <= zero || Sg <= zero || Shj <= zero || Ru <= zero) throw InvalidScale("all scale factors must be positive");
  }

  bool operator==(const Scales&) const = default;
};

struct QuantizedController {
  Matrix<Int> F;
  Matrix<Int> G;  // Gbar
  Matrix<Int> H;  // Hbar
  Matrix<Int> J;  // Jbar
  std::vector<Int> x0;  // xbar[0]
  Scales scales;

  std::size_t order() const { return F.rows(); }

  /// Every static integer must fit in [p] before it can be encrypted.
  void check_range(const Params& params) const {
    const auto check = [&](const Matrix<Int>& m, const char* name) {
      for (Int v : m.values())
        if (!in_centered(v, params.p))
          throw PlaintextOutOfRange(std::string("quantized ") + name + " entry " + to_string(v) + " is outside [p]");
    };
    check(F, "F");
    check(G, "G");
    check(H, "H");
    check(J, "J");
    check(Matrix<Int>::column(x0), "x0");
  }

  bool operator==(const QuantizedController&) const = default;
};

inline Matrix<Int> round_matrix(const RationalMatrix& m, const Rational& scale) {
  return m.map([&](const Rational& v) { return round_half_away(v / scale); });
}

/// Throws NonIntegerF unless every entry of F is an exact integer.
inline Matrix<Int> require_integer_f(const RationalMatrix& f) {
  Matrix<Int> out(f.rows(), f.cols());
  for (std::size_t i = 0; i < f.rows(); ++i) {
    for (std::size_t j = 0; j < f.cols(); ++j) {
      if (!f(i, j).is_integer()) {
        throw NonIntegerF("F(" + std::to_string(i) + "," + std::to_string(j) + ") = " + f(i, j).to_string());
      }
      out(i, j) = f(i, j).num();
    }
  }
  return out;
}

inline QuantizedController quantize(const LinearController& ctrl, const Scales& scales) {
  ctrl.validate();
  scales.validate();
  QuantizedController q;
  q.F = require_integer_f(ctrl.F);
  q.G = round_matrix(ctrl.G, scales.Sg);
  q.H = round_matrix(ctrl.H, scales.Shj);
  q.J = round_matrix(ctrl.J, scales.Shj * scales.Sg);
  for (const auto& v : ctrl.x0) q.x0.push_back(round_half_away(v / (scales.Sg * scales.Ry)));
  q.scales = scales;
  return q;
}

/// ybar = round(y / R_y). The plant signal is floating point, so this is the
/// one place where a double meets the quantizer.
inline Int quantize_measurement(double y, const Rational& ry) {
  if (ry <= Rational(0)) throw InvalidScale("R_y must be positive");
  return round_half_away(y * static_cast<double>(ry.den()) / static_cast<double>(ry.num()));
}

/// u = R_u round((R_y S_G S_HJ / R_u) ubar), exactly.
inline Rational dequantize_control_exact(Int ubar, const Scales& scales) {
  scales.validate();
  return scales.Ru * Rational(round_half_away(scales.output_unit() / scales.Ru * Rational(ubar)));
}

inline double dequantize_control(Int ubar, const Scales& scales) {
  return dequantize_control_exact(ubar, scales).to_double();
}

/// Encrypted controller state machine. Holds ciphertexts only; there is no
/// place for a secret key in this type.
class EncryptedController {
 public:
  EncryptedController(Params params, GswMatrix f, GswMatrix g, GswMatrix h, GswMatrix j, Ciphertext x0)
      : params_(params), f_(std::move(f)), g_(std::move(g)), h_(std::move(h)), j_(std::move(j)), x_(std::move(x0)) {
    const std::size_t n = f_.rows();
    if (f_.cols() != n || g_.rows() != n || h_.cols() != n || j_.rows() != h_.rows() || j_.cols() != g_.cols() ||
        x_.rows() != n) {
      throw ShapeMismatch("encrypted controller parts have inconsistent shapes");
    }
  }

  /// u[t] = H x_C x[t] + J x_C y[t], then x[t+1] = F x_C x[t] + G x_C y[t].
  Ciphertext step(const Ciphertext& y) {
    if (y.rows() != g_.cols()) throw ShapeMismatch("step: input ciphertext has " + std::to_string(y.rows()) + " rows");
    const ModRing ring = params_.ring();
    Ciphertext u = add(mat_mul_ct(h_, x_, params_), mat_mul_ct(j_, y, params_), ring);
    x_ = add(mat_mul_ct(f_, x_, params_), mat_mul_ct(g_, y, params_), ring);
    return u;
  }

  const Ciphertext& state() const { return x_; }
  const Params& params() const { return params_; }
  const GswMatrix& f() const { return f_; }
  const GswMatrix& g() const { return g_; }
  const GswMatrix& h() const { return h_; }
  const GswMatrix& j() const { return j_; }

 private:
  Params params_;
  GswMatrix f_, g_, h_, j_;
  Ciphertext x_;
};

inline EncryptedController encrypt_controller(const QuantizedController& qc, const SecretKey& key,
                                              const Params& params, Rng& rng, const EncryptOptions& opts = {}) {
  qc.check_range(params);
  auto f = encrypt_gsw_matrix(qc.F, key, params, rng, opts);
  auto g = encrypt_gsw_matrix(qc.G, key, params, rng, opts);
  auto h = encrypt_gsw_matrix(qc.H, key, params, rng, opts);
  auto j = encrypt_gsw_matrix(qc.J, key, params, rng, opts);
  auto x0 = encrypt(qc.x0, key, params, rng, opts);
  return EncryptedController(params, std::move(f), std::move(g), std::move(h), std::move(j), std::move(x0));
}

/// FIR filter C(z) = sum_{i=0}^{n} b_{n-i} z^{-i}, coefficients given as b_0..b_n.
/// F is the down-shift matrix, G = e_1, H = [b_{n-1} ... b_0], J = b_n.
inline LinearController realize_fir(std::span<const Rational> b) {
  if (b.size() < 2) throw ShapeMismatch("realize_fir needs at least b_0 and b_1");
  const std::size_t n = b.size() - 1;
  LinearController c;
  c.F = RationalMatrix(n, n, Rational(0));
  for (std::size_t i = 1; i < n; ++i) c.F(i, i - 1) = Rational(1);
  c.G = RationalMatrix(n, 1, Rational(0));
  c.G(0, 0) = Rational(1);
  c.H = RationalMatrix(1, n, Rational(0));
  for (std::size_t k = 0; k < n; ++k) c.H(0, k) = b[n - 1 - k];
  c.J = RationalMatrix(1, 1, b[n]);
  c.x0.assign(n, Rational(0));
  return c;
}

inline LinearController realize_fir(const std::vector<Rational>& b) { return realize_fir(std::span<const Rational>(b)); }

/// Parallel-form PID C(z) = kp + ki Ts/(z-1) + kd / (Ts/Nd + Ts/(z-1)).
inline LinearController realize_pid(const Rational& kp, const Rational& ki, const Rational& kd, const Rational& ts,
                                    int nd) {
  if (ts <= Rational(0)) throw InvalidScale("PID sampling time must be positive");
  if (nd < 1) throw InvalidScale("PID derivative filter parameter Nd must be a positive integer");
  const Rational n(nd);
  const Rational b1 = ki * ts - kd * n * n / ts;
  const Rational b0 = ki * ts * n - ki * ts + kd * n * n / ts;
  const Rational b2 = kp + kd * n / ts;
  LinearController c;
  c.F = RationalMatrix{{Rational(2 - nd), Rational(nd - 1)}, {Rational(1), Rational(0)}};
  c.G = RationalMatrix{{Rational(1)}, {Rational(0)}};
  c.H = RationalMatrix{{b1, b0}};
  c.J = RationalMatrix{{b2}};
  c.x0.assign(2, Rational(0));
  return c;
}

}  // namespace enctrl

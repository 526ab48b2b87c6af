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

// Closed-loop simulation: nominal (real), quantized (integer controller) and
// encrypted loops, with instrumentation of the encrypted controller state
//   xi[t] = (x[t] * s mod q) / L
// and of the disturbances it injects relative to the quantized controller.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "enctrl/controller.hpp"
#include "enctrl/errors.hpp"
#include "enctrl/gsw.hpp"
#include "enctrl/lwe.hpp"
#include "enctrl/matrix.hpp"
#include "enctrl/rational.hpp"

namespace enctrl {

/// Single-input single-output plant x+ = A x + B u, y = C x.
struct Plant {
  Matrix<double> A;
  Matrix<double> B;  // n_p x 1
  Matrix<double> C;  // 1 x n_p
  std::vector<double> x;

  std::size_t order() const { return A.rows(); }

  void validate() const {
    const std::size_t n = A.rows();
    if (A.cols() != n || B.rows() != n || B.cols() != 1 || C.rows() != 1 || C.cols() != n || x.size() != n) {
      throw ShapeMismatch("plant dimensions are inconsistent: A " + shape_string(A) + ", B " + shape_string(B) +
                          ", C " + shape_string(C) + ", x " + std::to_string(x.size()));
    }
  }

  double output() const {
    double y = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) y += C(0, j) * x[j];
    return y;
  }

  void step(double u) {
    std::vector<double> next(x.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      for (std::size_t j = 0; j < x.size(); ++j) next[i] += A(i, j) * x[j];
      next[i] += B(i, 0) * u;
    }
    x = std::move(next);
  }
};

struct StepRecord {
  std::size_t t = 0;
  double y = 0.0;
  double u = 0.0;
  std::vector<double> xp;         // plant state at t
  std::vector<Int> xbar;          // quantized controller state at t
  std::vector<Rational> xi;       // encrypted loop only
  std::optional<Rational> err_L;  // L (xi - xbar), entry of largest magnitude
  std::optional<Rational> delta1;  // ||Delta_1[t]||_inf
  std::optional<Rational> delta2;  // ||Delta_2[t]||_inf
  bool overflow = false;
  std::optional<Int> ybar;
  std::optional<Int> ubar;
  std::optional<Rational> ubar_phase;  // ubar' = (u[t] * s mod q) / L

  bool operator==(const StepRecord&) const = default;
};

enum class LoopKind { kNominal, kQuantized, kEncrypted };

struct LoopTrace {
  LoopKind kind = LoopKind::kNominal;
  std::size_t plant_order = 0;
  std::size_t controller_order = 0;
  std::vector<StepRecord> steps;
  std::vector<double> final_xp;  // plant state after the last step
  bool complete = true;          // false when a networked run aborted early

  bool instrumented() const { return kind == LoopKind::kEncrypted; }
  bool any_overflow() const {
    return std::any_of(steps.begin(), steps.end(), [](const StepRecord& s) { return s.overflow; });
  }
};

inline void require_siso(const LinearController& c) {
  if (c.G.cols() != 1 || c.H.rows() != 1) throw ShapeMismatch("simulation supports single-input single-output controllers");
}

inline LoopTrace run_nominal(Plant plant, const LinearController& ctrl, std::size_t horizon) {
  plant.validate();
  ctrl.validate();
  require_siso(ctrl);
  if (ctrl.order() != 0 && plant.order() == 0) throw ShapeMismatch("empty plant");
  const auto to_d = [](const RationalMatrix& m) { return m.map([](const Rational& v) { return v.to_double(); }); };
  const Matrix<double> F = to_d(ctrl.F), G = to_d(ctrl.G), H = to_d(ctrl.H), J = to_d(ctrl.J);
  std::vector<double> x;
  for (const auto& v : ctrl.x0) x.push_back(v.to_double());

  LoopTrace trace{LoopKind::kNominal, plant.order(), ctrl.order(), {}, {}, true};
  for (std::size_t t = 0; t < horizon; ++t) {
    StepRecord rec;
    rec.t = t;
    rec.xp = plant.x;
    rec.y = plant.output();
    double u = J(0, 0) * rec.y;
    for (std::size_t j = 0; j < x.size(); ++j) u += H(0, j) * x[j];
    rec.u = u;
    std::vector<double> next(x.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      for (std::size_t j = 0; j < x.size(); ++j) next[i] += F(i, j) * x[j];
      next[i] += G(i, 0) * rec.y;
    }
    x = std::move(next);
    plant.step(u);
    trace.steps.push_back(std::move(rec));
  }
  trace.final_xp = plant.x;
  return trace;
}

namespace detail {

inline bool all_in_range(const std::vector<Int>& v, Int p) {
  return std::all_of(v.begin(), v.end(), [&](Int x) { return in_centered(x, p); });
}

/// acc + a b, throwing instead of wrapping past 128 bits.
inline Int mac(Int acc, Int a, Int b) { return detail::add_checked(acc, detail::mul_checked(a, b)); }

inline std::vector<Int> affine(const Matrix<Int>& a, const std::vector<Int>& x, const Matrix<Int>& b, Int y) {
  std::vector<Int> out(a.rows(), 0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out[i] = mac(out[i], a(i, j), x[j]);
    out[i] = mac(out[i], b(i, 0), y);
  }
  return out;
}

/// One closed loop of the plant with the integer controller.
class QuantizedLoop {
 public:
  QuantizedLoop(Plant plant, const QuantizedController& qc, std::optional<Int> p)
      : plant_(std::move(plant)), qc_(qc), xbar_(qc.x0), p_(p) {}

  StepRecord step(std::size_t t) {
    StepRecord rec;
    rec.t = t;
    rec.xp = plant_.x;
    rec.y = plant_.output();
    const Int ybar = quantize_measurement(rec.y, qc_.scales.Ry);
    const Int ubar = affine(qc_.H, xbar_, qc_.J, ybar).at(0);
    rec.ybar = ybar;
    rec.ubar = ubar;
    rec.xbar = xbar_;
    rec.u = dequantize_control(ubar, qc_.scales);
    xbar_ = affine(qc_.F, xbar_, qc_.G, ybar);
    if (p_) rec.overflow = !in_centered(ybar, *p_) || !in_centered(ubar, *p_) || !all_in_range(rec.xbar, *p_) ||
                           !all_in_range(xbar_, *p_);
    plant_.step(rec.u);
    return rec;
  }

  const Plant& plant() const { return plant_; }

 private:
  Plant plant_;
  QuantizedController qc_;
  std::vector<Int> xbar_;
  std::optional<Int> p_;
};

inline void require_siso(const QuantizedController& qc) {
  if (qc.G.cols() != 1 || qc.H.rows() != 1 || qc.J.rows() != 1 || qc.J.cols() != 1) {
    throw ShapeMismatch("simulation supports single-input single-output controllers");
  }
  const std::size_t n = qc.F.rows();
  if (qc.F.cols() != n || qc.G.rows() != n || qc.H.cols() != n || qc.x0.size() != n) {
    throw ShapeMismatch("quantized controller dimensions are inconsistent");
  }
}

}  // namespace detail

/// Integer controller in closed loop. With `p` set, plaintexts leaving [p] are
/// flagged in the trace (the integers themselves are exact and never wrap).
inline LoopTrace run_quantized(Plant plant, const QuantizedController& qc, std::size_t horizon,
                               std::optional<Int> p = std::nullopt) {
  plant.validate();
  detail::require_siso(qc);
  LoopTrace trace{LoopKind::kQuantized, plant.order(), qc.order(), {}, {}, true};
  detail::QuantizedLoop loop(std::move(plant), qc, p);
  for (std::size_t t = 0; t < horizon; ++t) trace.steps.push_back(loop.step(t));
  trace.final_xp = loop.plant().x;
  return trace;
}

/// Reply of the controller for one step: u[t] and the updated state x[t+1].
struct ControllerReply {
  Ciphertext u;
  Ciphertext next_state;
};

using ControllerChannel = std::function<ControllerReply(const Ciphertext& y, std::size_t t)>;

/// Plant-side half of the encrypted loop: quantizes and encrypts y, hands it
/// to the controller through `channel`, decrypts u, drives the plant and
/// records instrumentation. The reference xbar comes from an independent
/// quantized closed loop started from the same initial conditions.
inline LoopTrace run_encrypted_loop(Plant plant, const QuantizedController& qc, const SecretKey& key,
                                    const Params& params, Rng& rng, std::size_t horizon, const Ciphertext& x0,
                                    const ControllerChannel& channel, const EncryptOptions& opts = {}) {
  plant.validate();
  detail::require_siso(qc);
  if (x0.rows() != qc.order()) throw ShapeMismatch("initial state ciphertext does not match controller order");
  LoopTrace trace{LoopKind::kEncrypted, plant.order(), qc.order(), {}, {}, true};
  detail::QuantizedLoop reference(plant, qc, params.p);
  const Int L = params.L;
  const Int p = params.p;

  std::vector<Int> state_phase = phase(x0, key, params);
  for (std::size_t t = 0; t < horizon; ++t) {
    StepRecord rec;
    rec.t = t;
    rec.xp = plant.x;
    rec.y = plant.output();
    const Int ybar = quantize_measurement(rec.y, qc.scales.Ry);
    rec.ybar = ybar;
    bool overflow = !in_centered(ybar, p);
    const Ciphertext y_enc = encrypt({smod(ybar, p)}, key, params, rng, opts);

    // Plaintexts the controller is about to form, computed from the decrypted state.
    std::vector<Int> state_msg(state_phase.size());
    for (std::size_t i = 0; i < state_phase.size(); ++i) state_msg[i] = round_half_away(Rational(state_phase[i], L));
    overflow = overflow || !detail::all_in_range(detail::affine(qc.F, state_msg, qc.G, ybar), p) ||
               !detail::all_in_range(detail::affine(qc.H, state_msg, qc.J, ybar), p);

    ControllerReply reply;
    try {
      reply = channel(y_enc, t);
    } catch (const TransportError&) {
      trace.complete = false;
      break;
    }
    if (reply.u.rows() != 1 || reply.next_state.rows() != qc.order()) {
      throw ShapeMismatch("controller reply has unexpected shape");
    }

    const Int u_phase = phase(reply.u, key, params).at(0);
    rec.ubar_phase = Rational(u_phase, L);
    rec.ubar = round_half_away(*rec.ubar_phase);
    rec.u = dequantize_control(*rec.ubar, qc.scales);

    // Delta_2[t] = ubar' - Hbar xi[t] - Jbar ybar
    {
      Int acc = detail::mac(u_phase, -L, detail::mul_checked(qc.J(0, 0), ybar));
      for (std::size_t j = 0; j < state_phase.size(); ++j) acc = detail::mac(acc, -qc.H(0, j), state_phase[j]);
      rec.delta2 = Rational(abs_int(acc), L);
    }

    // Delta_1[t] = xi[t+1] - F xi[t] - Gbar ybar
    const std::vector<Int> next_phase = phase(reply.next_state, key, params);
    {
      Int worst = 0;
      for (std::size_t i = 0; i < next_phase.size(); ++i) {
        Int acc = detail::mac(next_phase[i], -L, detail::mul_checked(qc.G(i, 0), ybar));
        for (std::size_t j = 0; j < state_phase.size(); ++j) acc = detail::mac(acc, -qc.F(i, j), state_phase[j]);
        worst = std::max(worst, abs_int(acc));
      }
      rec.delta1 = Rational(worst, L);
    }

    const StepRecord ref = reference.step(t);
    rec.xbar = ref.xbar;
    {
      Int worst = 0;
      for (std::size_t i = 0; i < state_phase.size(); ++i) {
        rec.xi.push_back(Rational(state_phase[i], L));
        const Int e = detail::mac(state_phase[i], -L, ref.xbar[i]);
        if (abs_int(e) > abs_int(worst)) worst = e;
      }
      rec.err_L = Rational(worst);
    }
    rec.overflow = overflow;

    plant.step(rec.u);
    state_phase = next_phase;
    trace.steps.push_back(std::move(rec));
  }
  trace.final_xp = plant.x;
  return trace;
}

/// In-process encrypted loop. `ec` is advanced by `horizon` steps.
inline LoopTrace run_encrypted(Plant plant, const QuantizedController& qc, EncryptedController& ec,
                               const SecretKey& key, const Params& params, Rng& rng, std::size_t horizon,
                               const EncryptOptions& opts = {}) {
  if (horizon == 0) throw InvalidParams("run_encrypted: horizon must be positive");
  const Ciphertext x0 = ec.state();
  return run_encrypted_loop(
      std::move(plant), qc, key, params, rng, horizon, x0,
      [&](const Ciphertext& y, std::size_t) {
        Ciphertext u = ec.step(y);
        return ControllerReply{std::move(u), ec.state()};
      },
      opts);
}

/// Measured disturbances of an encrypted run next to their analysis bounds.
struct DisturbanceReport {
  struct Row {
    Rational delta1;     // ||Delta_1||_inf
    Rational delta2;     // |Delta_2|
    double delta_y;      // R_y round(y/R_y) - y
    Rational delta_dec;  // R_y S_G S_HJ (round(ubar') - ubar')
    Rational delta_u;    // actuator requantization
  };
  std::vector<Row> rows;

  Rational delta1_bound;  // ||Gbar|| r/(2L) + delta_bound(F) + delta_bound(G)
  Rational delta2_bound;  // ||Jbar|| r/(2L) + delta_bound(H) + delta_bound(J)
  Rational delta1_worst_case;
  Rational delta2_worst_case;
  double delta_y_bound = 0.0;  // R_y / 2
  Rational delta_dec_bound;    // R_y S_G S_HJ / 2
  Rational delta_u_bound;      // R_u / 2

  Rational max_delta1() const { return max_of(&Row::delta1); }
  Rational max_delta2() const { return max_of(&Row::delta2); }

 private:
  Rational max_of(Rational Row::*field) const {
    Rational m(0);
    for (const auto& r : rows) m = std::max(m, r.*field);
    return m;
  }
};

/// Induced infinity norm (max absolute row sum).
inline Int inf_norm(const Matrix<Int>& m) {
  Int best = 0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    Int s = 0;
    for (std::size_t j = 0; j < m.cols(); ++j) s += abs_int(m(i, j));
    best = std::max(best, s);
  }
  return best;
}

inline DisturbanceReport disturbance_report(const LoopTrace& trace, const Params& params,
                                            const QuantizedController& qc) {
  if (!trace.instrumented()) throw Error("disturbance_report needs an instrumented encrypted-loop trace");
  DisturbanceReport rep;
  const Scales& sc = qc.scales;
  const Rational unit = sc.output_unit();
  const Rational fresh(params.fresh_noise(), params.L);
  rep.delta1_bound = Rational(inf_norm(qc.G)) * Rational(params.r, 2 * params.L) + delta_bound(qc.F, params) +
                     delta_bound(qc.G, params);
  rep.delta2_bound = Rational(inf_norm(qc.J)) * Rational(params.r, 2 * params.L) + delta_bound(qc.H, params) +
                     delta_bound(qc.J, params);
  rep.delta1_worst_case = Rational(inf_norm(qc.G)) * fresh + delta_bound_worst_case(qc.F.cols(), params) +
                          delta_bound_worst_case(qc.G.cols(), params);
  rep.delta2_worst_case = Rational(inf_norm(qc.J)) * fresh + delta_bound_worst_case(qc.H.cols(), params) +
                          delta_bound_worst_case(qc.J.cols(), params);
  rep.delta_y_bound = sc.Ry.to_double() / 2.0;
  rep.delta_dec_bound = unit / Rational(2);
  rep.delta_u_bound = sc.Ru / Rational(2);

  for (const auto& s : trace.steps) {
    if (!s.delta1 || !s.delta2 || !s.ubar_phase || !s.ybar) throw Error("trace step lacks instrumentation");
    DisturbanceReport::Row row{*s.delta1, *s.delta2, 0.0, {}, {}};
    row.delta_y = sc.Ry.to_double() * static_cast<double>(*s.ybar) - s.y;
    const Int dec = round_half_away(*s.ubar_phase);
    row.delta_dec = unit * (Rational(dec) - *s.ubar_phase);
    row.delta_u = dequantize_control_exact(dec, sc) - unit * Rational(dec);
    rep.rows.push_back(row);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ParseError("bad number in CSV: '" + s + "'");
  return v;
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

inline std::vector<std::string> csv_header(std::size_t plant_order, std::size_t controller_order) {
  std::vector<std::string> h{"t", "y", "u"};
  for (std::size_t i = 0; i < plant_order; ++i) h.push_back("xp" + std::to_string(i + 1));
  for (std::size_t i = 0; i < controller_order; ++i) h.push_back("xbar" + std::to_string(i + 1));
  for (std::size_t i = 0; i < controller_order; ++i) h.push_back("xi" + std::to_string(i + 1));
  for (const char* c : {"err_L", "delta1", "delta2", "overflow", "ybar", "ubar", "ubar_phase"}) h.emplace_back(c);
  return h;
}

inline void write_csv(const LoopTrace& trace, std::ostream& os) {
  const auto header = csv_header(trace.plant_order, trace.controller_order);
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
  os << '\n';
  const auto opt_r = [](const std::optional<Rational>& v) { return v ? v->to_string() : std::string(); };
  const auto opt_i = [](const std::optional<Int>& v) { return v ? to_string(*v) : std::string(); };
  for (const auto& s : trace.steps) {
    std::vector<std::string> cells{std::to_string(s.t), detail::format_double(s.y), detail::format_double(s.u)};
    for (std::size_t i = 0; i < trace.plant_order; ++i) cells.push_back(detail::format_double(s.xp.at(i)));
    for (std::size_t i = 0; i < trace.controller_order; ++i)
      cells.push_back(i < s.xbar.size() ? to_string(s.xbar[i]) : std::string());
    for (std::size_t i = 0; i < trace.controller_order; ++i)
      cells.push_back(i < s.xi.size() ? s.xi[i].to_string() : std::string());
    cells.push_back(opt_r(s.err_L));
    cells.push_back(opt_r(s.delta1));
    cells.push_back(opt_r(s.delta2));
    cells.push_back(s.overflow ? "1" : "0");
    cells.push_back(opt_i(s.ybar));
    cells.push_back(opt_i(s.ubar));
    cells.push_back(opt_r(s.ubar_phase));
    for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
    os << '\n';
  }
}

inline void emit_csv(const LoopTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  write_csv(trace, out);
  out.flush();
  if (!out) throw Error("write to '" + path + "' failed");
}

/// Parses a trace written by write_csv. The loop kind is inferred from which
/// columns are populated.
inline LoopTrace read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError("empty CSV");
  const auto header = detail::split(line, ',');
  std::size_t np = 0, nc = 0;
  for (const auto& h : header) {
    if (h.rfind("xp", 0) == 0) ++np;
    if (h.rfind("xbar", 0) == 0) ++nc;
  }
  if (header != csv_header(np, nc)) throw ParseError("unexpected CSV header");
  LoopTrace trace{LoopKind::kNominal, np, nc, {}, {}, true};
  const auto opt_r = [](const std::string& s) { return s.empty() ? std::optional<Rational>() : Rational::parse(s); };
  const auto opt_i = [](const std::string& s) { return s.empty() ? std::optional<Int>() : parse_int(s); };
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto c = detail::split(line, ',');
    if (c.size() != header.size()) throw ParseError("CSV row has " + std::to_string(c.size()) + " cells");
    StepRecord s;
    std::size_t k = 0;
    s.t = static_cast<std::size_t>(parse_int(c[k++]));
    s.y = detail::parse_double(c[k++]);
    s.u = detail::parse_double(c[k++]);
    for (std::size_t i = 0; i < np; ++i) s.xp.push_back(detail::parse_double(c[k++]));
    for (std::size_t i = 0; i < nc; ++i, ++k)
      if (!c[k].empty()) s.xbar.push_back(parse_int(c[k]));
    for (std::size_t i = 0; i < nc; ++i, ++k)
      if (!c[k].empty()) s.xi.push_back(Rational::parse(c[k]));
    s.err_L = opt_r(c[k++]);
    s.delta1 = opt_r(c[k++]);
    s.delta2 = opt_r(c[k++]);
    s.overflow = c[k++] == "1";
    s.ybar = opt_i(c[k++]);
    s.ubar = opt_i(c[k++]);
    s.ubar_phase = opt_r(c[k++]);
    if (!s.xi.empty()) trace.kind = LoopKind::kEncrypted;
    else if (s.ybar && trace.kind == LoopKind::kNominal) trace.kind = LoopKind::kQuantized;
    trace.steps.push_back(std::move(s));
  }
  return trace;
}

inline LoopTrace read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return read_csv(in);
}

}  // namespace enctrl

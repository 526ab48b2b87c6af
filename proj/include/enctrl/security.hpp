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

#include <cmath>
#include <optional>
#include <sstream>
#include <string>

#include "enctrl/controller.hpp"
#include "enctrl/errors.hpp"
#include "enctrl/gsw.hpp"
#include "enctrl/lwe.hpp"
#include "enctrl/rational.hpp"
#include "enctrl/sim.hpp"

namespace enctrl {

/// Noise budget of one controller, evaluated with both error bounds.
struct NoiseHeadroom {
  Rational delta1_bound;       // state update, typical-case formula
  Rational delta2_bound;       // output, typical-case formula
  Rational delta1_worst_case;
  Rational delta2_worst_case;
  /// 1/2 minus the worst-case error of a single ciphertext product (in units
  /// of one plaintext step). Positive means every single product decrypts
  /// correctly regardless of the sampled errors.
  Rational single_product_margin;
};

struct ParamsReport {
  bool valid = false;
  std::string problem;  // set when !valid
  Int q = 0;
  unsigned digits = 0;
  /// N / (log q - log r). A proportionality heuristic, not a security level.
  double lattice_indicator = 0.0;
  std::optional<NoiseHeadroom> headroom;
};

/// N / (log q - log r); base of the logarithm cancels.
inline double lattice_indicator(const Params& params) {
  const double lq = std::log2(static_cast<double>(params.q()));
  const double lr = std::log2(static_cast<double>(params.r));
  return static_cast<double>(params.N) / (lq - lr);
}

inline NoiseHeadroom noise_headroom(const QuantizedController& qc, const Params& params) {
  const Rational half_r(params.r, 2 * params.L);
  const Rational fresh(params.fresh_noise(), params.L);
  const auto norm = [](const Matrix<Int>& m) { return Rational(inf_norm(m)); };
  NoiseHeadroom h;
  h.delta1_bound = norm(qc.G) * half_r + delta_bound(qc.F, params) + delta_bound(qc.G, params);
  h.delta2_bound = norm(qc.J) * half_r + delta_bound(qc.H, params) + delta_bound(qc.J, params);
  h.delta1_worst_case = norm(qc.G) * fresh + delta_bound_worst_case(qc.F.cols(), params) +
                        delta_bound_worst_case(qc.G.cols(), params);
  h.delta2_worst_case = norm(qc.J) * fresh + delta_bound_worst_case(qc.H.cols(), params) +
                        delta_bound_worst_case(qc.J.cols(), params);
  h.single_product_margin = Rational(1, 2) - delta_bound_worst_case(1, params);
  return h;
}

/// Report-only: never throws for bad parameters, records the problem instead.
inline ParamsReport check_params(const Params& params, const QuantizedController* qc = nullptr) {
  ParamsReport rep;
  try {
    params.validate();
  } catch (const InvalidParams& e) {
    rep.problem = e.what();
    return rep;
  }
  rep.valid = true;
  rep.q = params.q();
  rep.digits = params.digits();
  rep.lattice_indicator = lattice_indicator(params);
  if (qc) rep.headroom = noise_headroom(*qc, params);
  return rep;
}

inline std::string format_report(const Params& params, const ParamsReport& rep) {
  std::ostringstream out;
  out << "parameters: p=" << to_string(params.p) << " L=" << to_string(params.L) << " r=" << to_string(params.r)
      << " N=" << params.N << " base=" << to_string(params.base) << "\n";
  if (!rep.valid) {
    out << "INVALID: " << rep.problem << "\n";
    return out.str();
  }
  out << "q = " << to_string(rep.q) << " (" << rep.digits << " digits in base " << to_string(params.base) << ")\n";
  out << "lattice heuristic N/(log q - log r) = " << rep.lattice_indicator
      << "  [heuristic indicator only; this is not a security level, use a lattice estimator]\n";
  if (params.p == 10000 && params.L == 10000 && params.r == 100 && params.N == 20 && params.base == 10) {
    out << "reference: an external LWE estimator run on this parameter set reported rop ~ 2^29.7"
           " (documentation only, not computed here)\n";
  }
  if (rep.headroom) {
    const auto& h = *rep.headroom;
    out << "state disturbance bound    ||Delta1|| <= " << h.delta1_bound.to_double()
        << " (worst case " << h.delta1_worst_case.to_double() << ")\n";
    out << "output disturbance bound   |Delta2|  <= " << h.delta2_bound.to_double()
        << " (worst case " << h.delta2_worst_case.to_double() << ")\n";
    out << "single-product margin (1/2 - worst-case product error) = " << h.single_product_margin.to_double()
        << (h.single_product_margin > Rational(0) ? "" : "  [products may decrypt incorrectly]") << "\n";
  }
  return out.str();
}

}  // namespace enctrl

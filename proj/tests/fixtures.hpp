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

// Shared setups for the test binaries.

#include <cmath>

#include "enctrl/controller.hpp"
#include "enctrl/lwe.hpp"
#include "enctrl/sim.hpp"

namespace enctrl_test {

using enctrl::Int;
using enctrl::Rational;
using enctrl::RationalMatrix;

// Scalar unstable plant x+ = sqrt(2) x + u with the first-order integer-F
// controller used throughout the examples.
inline enctrl::Plant ScalarPlant() {
  return enctrl::Plant{enctrl::Matrix<double>{{std::sqrt(2.0)}}, enctrl::Matrix<double>{{1.0}},
                       enctrl::Matrix<double>{{1.0}}, {-3.4}};
}

inline enctrl::LinearController ScalarController() {
  enctrl::LinearController c;
  c.F = RationalMatrix{{Rational(-1)}};
  c.G = RationalMatrix{{Rational(1)}};
  c.H = RationalMatrix{{Rational::parse("-1.414")}};
  c.J = RationalMatrix{{Rational(0)}};
  c.x0 = {Rational::parse("4.3")};
  return c;
}

inline enctrl::Scales ScalarScales(const Rational& ry = Rational::parse("1e-3"),
                                   const Rational& ru = Rational::parse("1e-6")) {
  return enctrl::Scales{ry, Rational(1), Rational::parse("1e-3"), ru};
}

inline enctrl::Params ScalarParams(std::uint64_t seed = 0) {
  return enctrl::Params{1000000000, 100, 10, 4, 10, seed};
}

inline constexpr std::size_t kScalarHorizon = 150;

struct EncryptedRun {
  enctrl::LoopTrace trace;
  enctrl::QuantizedController qc;
  enctrl::Params params;
};

/// Keygen, controller encryption and loop all draw from one generator seeded
/// with `seed`, in that order.
inline EncryptedRun RunScalarEncrypted(std::uint64_t seed, const enctrl::EncryptOptions& opts = {},
                                       const enctrl::Params& params = ScalarParams(),
                                       const enctrl::Scales& scales = ScalarScales()) {
  enctrl::Rng rng(seed);
  const auto key = enctrl::keygen(params, rng);
  const auto qc = enctrl::quantize(ScalarController(), scales);
  auto ec = enctrl::encrypt_controller(qc, key, params, rng, opts);
  auto trace = enctrl::run_encrypted(ScalarPlant(), qc, ec, key, params, rng, kScalarHorizon, opts);
  return {std::move(trace), qc, params};
}

inline Rational MaxAbsErrL(const enctrl::LoopTrace& trace) {
  Rational m(0);
  for (const auto& s : trace.steps)
    if (s.err_L && enctrl::abs(*s.err_L) > m) m = enctrl::abs(*s.err_L);
  return m;
}

}  // namespace enctrl_test

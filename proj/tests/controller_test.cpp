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


#include "enctrl/controller.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <complex>
#include <random>
#include <type_traits>

namespace {

using enctrl::Int;
using enctrl::LinearController;
using enctrl::Params;
using enctrl::Plaintext;
using enctrl::Rational;
using enctrl::RationalMatrix;
using enctrl::Rng;
using enctrl::Scales;
using IntMatrix = enctrl::Matrix<Int>;

Scales ScalarScales() {
  return Scales{Rational::parse("1e-3"), Rational(1), Rational::parse("1e-3"), Rational::parse("1e-6")};
}

double spectral_radius(const IntMatrix& f) {
  Eigen::MatrixXd m(f.rows(), f.cols());
  for (std::size_t i = 0; i < f.rows(); ++i)
    for (std::size_t j = 0; j < f.cols(); ++j) m(i, j) = static_cast<double>(f(i, j));
  return m.eigenvalues().cwiseAbs().maxCoeff();
}

TEST(Quantize, GainExample) {
  LinearController c;
  c.F = RationalMatrix{{Rational(0), Rational(1)}, {Rational(-1), Rational(0)}};
  c.G = RationalMatrix{{Rational::parse("5.19")}, {Rational(38)}};
  c.H = RationalMatrix{{Rational(1), Rational(0)}};
  c.J = RationalMatrix{{Rational(0)}};
  c.x0 = {Rational(0), Rational(0)};
  const auto q = enctrl::quantize(c, Scales{Rational(1), Rational(1, 10), Rational(1), Rational(1)});
  EXPECT_EQ(q.G, (IntMatrix{{52}, {380}}));
}

TEST(Quantize, UnitScalesRoundEntries) {
  LinearController c;
  c.F = RationalMatrix{{Rational(2)}};
  c.G = RationalMatrix{{Rational::parse("1.5")}};
  c.H = RationalMatrix{{Rational::parse("-2.5")}};
  c.J = RationalMatrix{{Rational::parse("0.49")}};
  c.x0 = {Rational::parse("-0.5")};
  const auto q = enctrl::quantize(c, Scales{});
  EXPECT_EQ(q.F, (IntMatrix{{2}}));
  EXPECT_EQ(q.G, (IntMatrix{{2}}));
  EXPECT_EQ(q.H, (IntMatrix{{-3}}));
  EXPECT_EQ(q.J, (IntMatrix{{0}}));
  EXPECT_EQ(q.x0, std::vector<Int>{-1});
}

TEST(Quantize, ScalarExample) {
  LinearController c;
  c.F = RationalMatrix{{Rational(-1)}};
  c.G = RationalMatrix{{Rational(1)}};
  c.H = RationalMatrix{{Rational::parse("-1.414")}};
  c.J = RationalMatrix{{Rational(0)}};
  c.x0 = {Rational::parse("4.3")};
  const auto q = enctrl::quantize(c, ScalarScales());
  EXPECT_EQ(q.F, (IntMatrix{{-1}}));
  EXPECT_EQ(q.G, (IntMatrix{{1}}));
  EXPECT_EQ(q.H, (IntMatrix{{-1414}}));
  EXPECT_EQ(q.J, (IntMatrix{{0}}));
  EXPECT_EQ(q.x0, std::vector<Int>{4300});
}

TEST(Quantize, NonIntegerStateMatrixIsRejected) {
  LinearController c;
  c.F = RationalMatrix{{Rational(1, 2)}};
  c.G = RationalMatrix{{Rational(1)}};
  c.H = RationalMatrix{{Rational(1)}};
  c.J = RationalMatrix{{Rational(0)}};
  c.x0 = {Rational(0)};
  try {
    enctrl::quantize(c, Scales{});
    FAIL() << "expected NonIntegerF";
  } catch (const enctrl::NonIntegerF& e) {
    EXPECT_NE(std::string(e.what()).find("0.5"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("without bound"), std::string::npos);
  }
}

TEST(Quantize, InvalidScalesAndShapes) {
  LinearController c = enctrl::realize_fir(std::vector<Rational>{Rational(1), Rational(2)});
  EXPECT_THROW(enctrl::quantize(c, Scales{Rational(0), Rational(1), Rational(1), Rational(1)}), enctrl::InvalidScale);
  c.x0.push_back(Rational(1));
  EXPECT_THROW(enctrl::quantize(c, Scales{}), enctrl::ShapeMismatch);
}

TEST(QuantizeMeasurement, Examples) {
  EXPECT_EQ(enctrl::quantize_measurement(12.11, Rational(1, 10)), 121);
  EXPECT_EQ(enctrl::quantize_measurement(0.0, Rational(1, 10)), 0);
  EXPECT_EQ(enctrl::quantize_measurement(-12.15, Rational(1, 10)), -122);
  EXPECT_THROW(enctrl::quantize_measurement(1.0, Rational(0)), enctrl::InvalidScale);
}

TEST(DequantizeControl, Examples) {
  const Scales s = ScalarScales();
  EXPECT_EQ(enctrl::dequantize_control_exact(1414, s), Rational(1414, 1000000));
  EXPECT_DOUBLE_EQ(enctrl::dequantize_control(1414, s), 1.414e-3);
  EXPECT_EQ(enctrl::dequantize_control_exact(0, s), Rational(0));
  // R_y S_G S_HJ / R_u = 1: u = R_u ubar exactly.
  const Scales unit{Rational(1, 100), Rational(1), Rational(1, 100), Rational(1, 10000)};
  for (Int ubar : {-7, 0, 3, 123456}) EXPECT_EQ(enctrl::dequantize_control_exact(ubar, unit), Rational(ubar, 10000));
  // Coarser actuator: ubar * 1e-6 rounded to multiples of 1e-4.
  const Scales coarse{Rational(1, 1000), Rational(1), Rational(1, 1000), Rational(1, 10000)};
  EXPECT_EQ(enctrl::dequantize_control_exact(150, coarse), Rational(2, 10000));
  EXPECT_EQ(enctrl::dequantize_control_exact(-149, coarse), Rational(-1, 10000));
}

// L = 10^4 leaves room for a few products below L/2, so every decryption here is exact.
class EncryptedControllerTest : public ::testing::Test {
 protected:
  Params params_{1000000000, 10000, 10, 4, 10, 0};
  Rng rng_{31};
  enctrl::SecretKey key_ = enctrl::keygen(params_, rng_);
};

static_assert(!std::is_constructible_v<enctrl::EncryptedController, enctrl::SecretKey>);

TEST_F(EncryptedControllerTest, ScalarExampleFirstStep) {
  enctrl::QuantizedController qc{IntMatrix{{-1}}, IntMatrix{{1}}, IntMatrix{{-1414}}, IntMatrix{{0}}, {4300}, ScalarScales()};
  auto ec = enctrl::encrypt_controller(qc, key_, params_, rng_);
  const Int ybar = enctrl::quantize_measurement(-3.4, qc.scales.Ry);
  const auto u = ec.step(enctrl::encrypt({ybar}, key_, params_, rng_));
  // |H| e_x alone can reach 1414 * 5 > L/2, so the output is checked against its tracked budget.
  const Int expected = -1414 * 4300 + 0 * ybar;
  ASSERT_TRUE(u.noise_budget);
  EXPECT_LE(enctrl::abs_int(enctrl::noise_actual(u, {expected}, key_, params_)[0]), *u.noise_budget);
  EXPECT_LE(enctrl::abs_int(enctrl::decrypt(u, key_, params_)[0] - expected), 1);
  EXPECT_EQ(enctrl::decrypt(ec.state(), key_, params_), Plaintext{-4300 + ybar});
}

TEST_F(EncryptedControllerTest, ZeroController) {
  enctrl::QuantizedController qc{IntMatrix(2, 2, 0), IntMatrix(2, 1, 0), IntMatrix(1, 2, 0), IntMatrix(1, 1, 0),
                                 {0, 0}, Scales{}};
  auto ec = enctrl::encrypt_controller(qc, key_, params_, rng_);
  for (Int y : {5, -17, 1000})
    EXPECT_EQ(enctrl::decrypt(ec.step(enctrl::encrypt({y}, key_, params_, rng_)), key_, params_), Plaintext{0});
}

TEST_F(EncryptedControllerTest, ZeroStateZeroInput) {
  enctrl::QuantizedController qc{IntMatrix{{1, 2}, {0, 1}}, IntMatrix{{3}, {4}}, IntMatrix{{5, 6}}, IntMatrix{{7}},
                                 {0, 0}, Scales{}};
  auto ec = enctrl::encrypt_controller(qc, key_, params_, rng_);
  EXPECT_EQ(enctrl::decrypt(ec.step(enctrl::encrypt({0}, key_, params_, rng_)), key_, params_), Plaintext{0});
}

TEST_F(EncryptedControllerTest, NoiselessRunsMatchIntegerRecursion) {
  enctrl::EncryptOptions zero;
  zero.zero_error = true;
  std::mt19937_64 g(12);
  std::uniform_int_distribution<int> unit(-1, 1), gain(-20, 20), input(-500, 500);
  for (int trial = 0; trial < 10; ++trial) {
    IntMatrix f(2, 2);
    do {
      for (std::size_t i = 0; i < 4; ++i) f.data()[i] = unit(g);
    } while (spectral_radius(f) > 1.0 + 1e-12);
    enctrl::QuantizedController qc{f, IntMatrix{{gain(g)}, {gain(g)}}, IntMatrix{{gain(g), gain(g)}},
                                   IntMatrix{{gain(g)}}, {input(g), input(g)}, Scales{}};
    auto ec = enctrl::encrypt_controller(qc, key_, params_, rng_, zero);
    std::vector<Int> x = qc.x0;
    for (int t = 0; t < 20; ++t) {
      const Int y = input(g);
      const Int u = qc.H(0, 0) * x[0] + qc.H(0, 1) * x[1] + qc.J(0, 0) * y;
      x = {f(0, 0) * x[0] + f(0, 1) * x[1] + qc.G(0, 0) * y, f(1, 0) * x[0] + f(1, 1) * x[1] + qc.G(1, 0) * y};
      const auto uc = ec.step(enctrl::encrypt({y}, key_, params_, rng_, zero));
      ASSERT_EQ(enctrl::decrypt(uc, key_, params_), Plaintext{u});
      ASSERT_EQ(enctrl::decrypt(ec.state(), key_, params_), x);
    }
  }
}

TEST_F(EncryptedControllerTest, RangeAndShapeChecks) {
  enctrl::QuantizedController qc{IntMatrix{{1}}, IntMatrix{{1}}, IntMatrix{{params_.p}}, IntMatrix{{0}}, {0}, Scales{}};
  EXPECT_THROW(enctrl::encrypt_controller(qc, key_, params_, rng_), enctrl::PlaintextOutOfRange);
  qc.H = IntMatrix{{1}};
  auto ec = enctrl::encrypt_controller(qc, key_, params_, rng_);
  EXPECT_THROW(ec.step(enctrl::encrypt({1, 2}, key_, params_, rng_)), enctrl::ShapeMismatch);
}

// Direct convolution of the coefficient sequence with a unit impulse.
std::vector<Rational> fir_impulse_oracle(const std::vector<Rational>& b, std::size_t steps) {
  const std::size_t n = b.size() - 1;
  std::vector<Rational> out(steps, Rational(0));
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t i = 0; i <= n; ++i)
      if (t == i) out[t] += b[n - i];  // C(z) = sum_i b_{n-i} z^{-i}
  return out;
}

std::vector<Rational> simulate_impulse(const LinearController& c, std::size_t steps) {
  std::vector<Rational> x = c.x0, out;
  for (std::size_t t = 0; t < steps; ++t) {
    const Rational y = t == 0 ? Rational(1) : Rational(0);
    Rational u = c.J(0, 0) * y;
    for (std::size_t j = 0; j < x.size(); ++j) u += c.H(0, j) * x[j];
    std::vector<Rational> next(x.size(), Rational(0));
    for (std::size_t i = 0; i < x.size(); ++i) {
      for (std::size_t j = 0; j < x.size(); ++j) next[i] += c.F(i, j) * x[j];
      next[i] += c.G(i, 0) * y;
    }
    x = next;
    out.push_back(u);
  }
  return out;
}

TEST(Fir, LayoutForThreeTaps) {
  const auto c = enctrl::realize_fir(std::vector<Rational>{Rational(1), Rational(2), Rational(3)});
  EXPECT_EQ(c.F, (RationalMatrix{{Rational(0), Rational(0)}, {Rational(1), Rational(0)}}));
  EXPECT_EQ(c.G, (RationalMatrix{{Rational(1)}, {Rational(0)}}));
  EXPECT_EQ(c.H, (RationalMatrix{{Rational(2), Rational(1)}}));
  EXPECT_EQ(c.J, (RationalMatrix{{Rational(3)}}));
  EXPECT_EQ(simulate_impulse(c, 6),
            (std::vector<Rational>{Rational(3), Rational(2), Rational(1), Rational(0), Rational(0), Rational(0)}));
}

TEST(Fir, ImpulseResponseMatchesConvolution) {
  std::mt19937_64 g(3);
  std::uniform_int_distribution<int> coef(-9999, 9999), len(2, 9);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Rational> b(static_cast<std::size_t>(len(g)));
    for (auto& v : b) v = Rational(coef(g), 1000);
    const auto c = enctrl::realize_fir(b);
    ASSERT_EQ(simulate_impulse(c, b.size() + 4), fir_impulse_oracle(b, b.size() + 4));
    ASSERT_NO_THROW(enctrl::quantize(c, Scales{}));
  }
}

TEST(Fir, ZeroCoefficients) {
  const auto c = enctrl::realize_fir(std::vector<Rational>(4, Rational(0)));
  EXPECT_EQ(simulate_impulse(c, 8), std::vector<Rational>(8, Rational(0)));
  EXPECT_THROW(enctrl::realize_fir(std::vector<Rational>{Rational(1)}), enctrl::ShapeMismatch);
}

TEST(Pid, ProportionalOnly) {
  const auto c = enctrl::realize_pid(Rational(3), Rational(0), Rational(0), Rational(1, 10), 5);
  EXPECT_EQ(c.H, (RationalMatrix{{Rational(0), Rational(0)}}));
  EXPECT_EQ(c.J, (RationalMatrix{{Rational(3)}}));
}

TEST(Pid, CoefficientValues) {
  const auto c = enctrl::realize_pid(Rational(1), Rational(2), Rational(1, 10), Rational(1, 10), 5);
  EXPECT_EQ(c.H(0, 0), Rational::parse("-24.8"));
  EXPECT_EQ(c.H(0, 1), Rational::parse("25.8"));
  EXPECT_EQ(c.J(0, 0), Rational(6));
  EXPECT_EQ(c.F, (RationalMatrix{{Rational(-3), Rational(4)}, {Rational(1), Rational(0)}}));
}

using Complex = std::complex<long double>;

Complex pid_transfer(long double kp, long double ki, long double kd, long double ts, long double nd, Complex z) {
  return kp + ki * ts / (z - 1.0L) + kd / (ts / nd + ts / (z - 1.0L));
}

// H (zI - F)^{-1} G + J for a 2x2 realization, by Cramer's rule.
Complex realization_transfer(const LinearController& c, Complex z) {
  const auto v = [](const Rational& r) { return static_cast<long double>(r.num()) / static_cast<long double>(r.den()); };
  const Complex a = z - v(c.F(0, 0)), b = -v(c.F(0, 1)), cc = -v(c.F(1, 0)), d = z - v(c.F(1, 1));
  const Complex det = a * d - b * cc;
  const Complex x0 = (d * v(c.G(0, 0)) - b * v(c.G(1, 0))) / det;
  const Complex x1 = (-cc * v(c.G(0, 0)) + a * v(c.G(1, 0))) / det;
  return v(c.H(0, 0)) * x0 + v(c.H(0, 1)) * x1 + v(c.J(0, 0));
}

TEST(Pid, FrequencyResponseMatchesTransferFunction) {
  const auto c = enctrl::realize_pid(Rational(1), Rational(2), Rational(1, 10), Rational(1, 10), 5);
  for (int k = 1; k <= 10; ++k) {
    const Complex z = std::polar(1.0L, 3.0L * k / 10.0L);
    const Complex expected = pid_transfer(1, 2, 0.1L, 0.1L, 5, z);
    EXPECT_LE(std::abs(realization_transfer(c, z) - expected) / std::abs(expected), 1e-9L) << "k=" << k;
  }
}

TEST(Pid, RandomGainsPassTheIntegerGate) {
  std::mt19937_64 g(21);
  std::uniform_int_distribution<int> gain(-5000, 5000), ts(1, 100), nd(1, 20);
  for (int trial = 0; trial < 100; ++trial) {
    const auto c = enctrl::realize_pid(Rational(gain(g), 100), Rational(gain(g), 100), Rational(gain(g), 1000),
                                       Rational(ts(g), 1000), nd(g));
    ASSERT_NO_THROW(enctrl::quantize(c, Scales{}));
  }
  EXPECT_THROW(enctrl::realize_pid(Rational(1), Rational(1), Rational(1), Rational(0), 5), enctrl::InvalidScale);
  EXPECT_THROW(enctrl::realize_pid(Rational(1), Rational(1), Rational(1), Rational(1), 0), enctrl::InvalidScale);
}

}  // namespace

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

// Run configuration files.
//
// Line-oriented `key = value` text; `#` starts a comment. Matrices are written
// row by row, `[a b; c d]`, and a bare number is a 1x1 matrix. Controller and
// scale values are exact decimals (`-1.414`, `1e-3`, `1/3`). Plant values are
// real numbers and may also be written `sqrt(x)`.
//
//   plant.A = sqrt(2)          plant.B = 1     plant.C = 1     plant.x0 = -3.4
//   controller.type = ss       (ss | fir | pid)
//   controller.F = -1          controller.G = 1
//   controller.H = -1.414      controller.J = 0      controller.x0 = 4.3
//   controller.b = [b0 b1 ... bn]                          (fir)
//   controller.kp / ki / kd / Ts = <decimal>, controller.Nd = <integer>  (pid)
//   scale.Ry / Sg / Shj / Ru = <decimal>
//   crypto.p / L / r / N / base / seed = <integer>
//   sim.horizon = <integer>

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "enctrl/controller.hpp"
#include "enctrl/errors.hpp"
#include "enctrl/lwe.hpp"
#include "enctrl/rational.hpp"
#include "enctrl/sim.hpp"

namespace enctrl {

enum class ControllerForm { kStateSpace, kFir, kPid };

struct RunConfig {
  Plant plant;
  ControllerForm form = ControllerForm::kStateSpace;
  LinearController controller;
  Scales scales;
  Params params;
  std::size_t horizon = 150;
};

namespace config_detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

struct Entry {
  std::string value;
  int line = 0;
};

using Table = std::map<std::string, Entry, std::less<>>;

inline Table tokenize(std::istream& in) {
  Table table;
  std::string raw;
  for (int line = 1; std::getline(in, raw); ++line) {
    std::string_view s(raw);
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) throw ParseError("line " + std::to_string(line) + ": expected 'key = value'");
    const std::string key(trim(s.substr(0, eq)));
    const std::string value(trim(s.substr(eq + 1)));
    if (key.empty() || value.empty()) throw ParseError("line " + std::to_string(line) + ": empty key or value");
    if (!table.emplace(key, Entry{value, line}).second) {
      throw ParseError("line " + std::to_string(line) + ": duplicate key '" + key + "'");
    }
  }
  return table;
}

/// Splits `[a b; c d]` (or a bare token) into rows of tokens.
inline std::vector<std::vector<std::string>> split_matrix(std::string_view text) {
  text = trim(text);
  if (!text.empty() && text.front() == '[') {
    if (text.back() != ']') throw ParseError("unterminated matrix '" + std::string(text) + "'");
    text = text.substr(1, text.size() - 2);
  }
  std::vector<std::vector<std::string>> rows;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find(';', start);
    if (end == std::string_view::npos) end = text.size();
    std::string row(text.substr(start, end - start));
    for (char& c : row)
      if (c == ',') c = ' ';
    std::istringstream ss(row);
    std::vector<std::string> tokens;
    for (std::string tok; ss >> tok;) tokens.push_back(tok);
    if (tokens.empty()) throw ParseError("empty matrix row in '" + std::string(text) + "'");
    rows.push_back(std::move(tokens));
    start = end + 1;
  }
  for (const auto& r : rows)
    if (r.size() != rows.front().size()) throw ParseError("ragged matrix '" + std::string(text) + "'");
  return rows;
}

inline double parse_real(std::string_view tok) {
  double sign = 1.0;
  std::string_view body = tok;
  if (body.starts_with("-sqrt(")) {
    sign = -1.0;
    body.remove_prefix(1);
  }
  if (body.starts_with("sqrt(") && body.ends_with(")")) {
    const double arg = parse_real(body.substr(5, body.size() - 6));
    if (arg < 0) throw ParseError("sqrt of a negative number");
    return sign * std::sqrt(arg);
  }
  if (tok.starts_with("+")) tok.remove_prefix(1);
  double v = 0;
  const auto* end = tok.data() + tok.size();
  const auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ParseError("invalid real number '" + std::string(tok) + "'");
  return v;
}

template <typename T, typename F>
Matrix<T> parse_matrix(std::string_view text, F parse_one) {
  const auto rows = split_matrix(text);
  Matrix<T> m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = parse_one(rows[i][j]);
  return m;
}

inline Rational parse_exact(const std::string& tok) { return Rational::parse(tok); }

class Reader {
 public:
  explicit Reader(Table table) : table_(std::move(table)) {}

  const Entry* find(std::string_view key) {
    const auto it = table_.find(key);
    if (it == table_.end()) return nullptr;
    used_.insert(it->first);
    return &it->second;
  }

  const Entry& require(std::string_view key) {
    if (const Entry* e = find(key)) return *e;
    throw ParseError("missing required key '" + std::string(key) + "'");
  }

  template <typename Fn>
  auto with_line(const Entry& e, std::string_view key, Fn fn) -> decltype(fn(e.value)) {
    try {
      return fn(e.value);
    } catch (const ParseError& err) {
      throw ParseError("line " + std::to_string(e.line) + " (" + std::string(key) + "): " + err.what());
    }
  }

  Matrix<double> real_matrix(std::string_view key) {
    return with_line(require(key), key, [](const std::string& v) { return parse_matrix<double>(v, parse_real); });
  }

  RationalMatrix exact_matrix(std::string_view key) {
    return with_line(require(key), key, [](const std::string& v) { return parse_matrix<Rational>(v, parse_exact); });
  }

  std::optional<Rational> exact(std::string_view key) {
    const Entry* e = find(key);
    if (!e) return std::nullopt;
    return with_line(*e, key, [](const std::string& v) { return Rational::parse(v); });
  }

  std::optional<Int> integer(std::string_view key) {
    const auto v = exact(key);
    if (!v) return std::nullopt;
    if (!v->is_integer()) throw ParseError("line " + std::to_string(table_.find(key)->second.line) + " (" +
                                           std::string(key) + "): expected an integer, got " + v->to_string());
    return v->num();
  }

  void reject_unused() const {
    for (const auto& [key, entry] : table_) {
      if (!used_.contains(key)) throw ParseError("line " + std::to_string(entry.line) + ": unknown key '" + key + "'");
    }
  }

 private:
  Table table_;
  std::set<std::string, std::less<>> used_;
};

template <typename T>
std::vector<T> flatten(const Matrix<T>& m) {
  if (m.rows() != 1 && m.cols() != 1) throw ShapeMismatch("expected a vector, got " + shape_string(m));
  return m.values();
}

}  // namespace config_detail

inline RunConfig parse_config(std::istream& in) {
  using namespace config_detail;
  Reader rd(tokenize(in));
  RunConfig cfg;

  cfg.plant.A = rd.real_matrix("plant.A");
  cfg.plant.B = rd.real_matrix("plant.B");
  cfg.plant.C = rd.real_matrix("plant.C");
  cfg.plant.x = flatten(rd.real_matrix("plant.x0"));
  cfg.plant.validate();

  const Entry* type = rd.find("controller.type");
  const std::string form = type ? type->value : "ss";
  if (form == "ss") {
    cfg.form = ControllerForm::kStateSpace;
    cfg.controller.F = rd.exact_matrix("controller.F");
    cfg.controller.G = rd.exact_matrix("controller.G");
    cfg.controller.H = rd.exact_matrix("controller.H");
    cfg.controller.J = rd.exact_matrix("controller.J");
    cfg.controller.x0 = rd.find("controller.x0") ? flatten(rd.exact_matrix("controller.x0"))
                                                 : std::vector<Rational>(cfg.controller.F.rows(), Rational(0));
  } else if (form == "fir") {
    cfg.form = ControllerForm::kFir;
    cfg.controller = realize_fir(flatten(rd.exact_matrix("controller.b")));
  } else if (form == "pid") {
    cfg.form = ControllerForm::kPid;
    const auto need = [&](std::string_view k) {
      if (auto v = rd.exact(k)) return *v;
      throw ParseError("missing required key '" + std::string(k) + "'");
    };
    const Rational kp = need("controller.kp");
    const Rational ki = need("controller.ki");
    const Rational kd = need("controller.kd");
    const Rational ts = need("controller.Ts");
    const auto nd = rd.integer("controller.Nd");
    if (!nd) throw ParseError("missing required key 'controller.Nd'");
    if (*nd < 1 || *nd > 1'000'000) throw InvalidScale("controller.Nd must be a positive integer");
    cfg.controller = realize_pid(kp, ki, kd, ts, static_cast<int>(*nd));
  } else {
    throw ParseError("line " + std::to_string(type->line) + ": controller.type must be ss, fir or pid");
  }
  if (form != "ss" && rd.find("controller.x0")) {
    cfg.controller.x0 = flatten(rd.exact_matrix("controller.x0"));
  }
  cfg.controller.validate();

  if (auto v = rd.exact("scale.Ry")) cfg.scales.Ry = *v;
  if (auto v = rd.exact("scale.Sg")) cfg.scales.Sg = *v;
  if (auto v = rd.exact("scale.Shj")) cfg.scales.Shj = *v;
  if (auto v = rd.exact("scale.Ru")) cfg.scales.Ru = *v;
  cfg.scales.validate();

  if (auto v = rd.integer("crypto.base")) cfg.params.base = *v;
  if (auto v = rd.integer("crypto.p")) cfg.params.p = *v;
  if (auto v = rd.integer("crypto.L")) cfg.params.L = *v;
  if (auto v = rd.integer("crypto.r")) cfg.params.r = *v;
  if (auto v = rd.integer("crypto.N")) {
    if (*v < 1 || *v > 1 << 20) throw InvalidParams("crypto.N out of range");
    cfg.params.N = static_cast<unsigned>(*v);
  }
  if (auto v = rd.integer("crypto.seed")) {
    if (*v < 0 || *v > static_cast<Int>(UINT64_MAX)) throw InvalidParams("crypto.seed must fit in 64 bits");
    cfg.params.seed = static_cast<std::uint64_t>(*v);
  }
  if (auto v = rd.integer("sim.horizon")) {
    if (*v < 0 || *v > 100'000'000) throw ParseError("sim.horizon out of range");
    cfg.horizon = static_cast<std::size_t>(*v);
  }
  rd.reject_unused();
  return cfg;
}

inline RunConfig parse_config(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file '" + path + "'");
  return parse_config(in);
}

}  // namespace enctrl

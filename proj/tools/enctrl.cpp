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


// enctrl: key generation, encryption utilities, closed-loop simulation and
// networked controller roles.

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "enctrl/config.hpp"
#include "enctrl/controller.hpp"
#include "enctrl/lwe.hpp"
#include "enctrl/netloop.hpp"
#include "enctrl/security.hpp"
#include "enctrl/serialize.hpp"
#include "enctrl/sim.hpp"

namespace {

using namespace enctrl;

constexpr int kExitRange = 1;
constexpr int kExitUsage = 2;
constexpr int kExitStrict = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParamFlags {
  std::optional<std::string> p, L, r;
  std::optional<unsigned> N;
  std::optional<unsigned> base;

  void add_to(CLI::App& cmd) {
    cmd.add_option("--p", p, "plaintext modulus (power of base)");
    cmd.add_option("--L", L, "scaling factor (power of base)");
    cmd.add_option("--r", r, "error range bound, r < L");
    cmd.add_option("--N", N, "secret key dimension");
    cmd.add_option("--base", base, "decomposition radix");
  }

  void apply(Params& params) const {
    const auto integer = [](const std::string& text, const char* name) {
      const Rational v = Rational::parse(text);
      if (!v.is_integer()) throw InvalidParams(std::string(name) + " must be an integer");
      return v.num();
    };
    if (p) params.p = integer(*p, "p");
    if (L) params.L = integer(*L, "L");
    if (r) params.r = integer(*r, "r");
    if (N) params.N = *N;
    if (base) params.base = *base;
  }
};

struct Options {
  std::optional<std::string> config;
  std::string mode = "encrypted";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> horizon;
  std::optional<std::string> out;
  bool strict = false;
  std::optional<std::string> listen;
  std::optional<std::string> connect;
  std::optional<std::string> key;
  std::vector<std::string> message;
  std::string ciphertext;
  ParamFlags params;
};

Params resolve_params(const Options& o) {
  Params params = o.config ? load_config(*o.config).params : Params{};
  o.params.apply(params);
  if (o.seed) params.seed = *o.seed;
  return params;
}

int cmd_keygen(const Options& o) {
  if (!o.out) throw UsageError("keygen needs --out PATH");
  const Params params = resolve_params(o);
  Rng rng(params.seed);
  const SecretKey key = keygen(params, rng);
  write_file(*o.out, serialize_key_file(key, params));
  std::cout << "wrote key (N=" << params.N << ", q=" << to_string(params.q()) << ") to " << *o.out << "\n";
  return 0;
}

int cmd_enc(const Options& o) {
  if (!o.key) throw UsageError("enc needs --key PATH");
  if (!o.out) throw UsageError("enc needs --out PATH");
  auto [key, params] = deserialize_key_file(read_file(*o.key));
  Plaintext m;
  for (const auto& text : o.message) {
    try {
      m.push_back(parse_int(text));
    } catch (const ParseError&) {
      throw UsageError("message entry '" + text + "' is not an integer");
    }
  }
  Rng rng(o.seed.value_or(params.seed));
  write_file(*o.out, serialize_ciphertext(encrypt(m, key, params, rng), params));
  std::cout << "wrote " << m.size() << "-row ciphertext to " << *o.out << "\n";
  return 0;
}

int cmd_dec(const Options& o) {
  if (!o.key) throw UsageError("dec needs --key PATH");
  auto [key, params] = deserialize_key_file(read_file(*o.key));
  const Ciphertext c = deserialize_ciphertext(read_file(o.ciphertext));
  if (c.body.cols() != params.N + 1) throw ParseError("ciphertext does not belong to this key");
  const Plaintext m = decrypt(c, key, params);
  for (std::size_t i = 0; i < m.size(); ++i) std::cout << (i ? " " : "") << to_string(m[i]);
  std::cout << "\n";
  return 0;
}

double state_norm(const std::vector<double>& x) {
  double n = 0.0;
  for (double v : x) n = std::max(n, std::isfinite(v) ? std::abs(v) : INFINITY);
  return n;
}

bool diverged(const LoopTrace& trace) {
  double start = 1.0;
  if (!trace.steps.empty()) start = std::max(1.0, state_norm(trace.steps.front().xp));
  for (const auto& s : trace.steps)
    if (!(state_norm(s.xp) <= 1e6 * start) || !std::isfinite(s.u)) return true;
  return !(state_norm(trace.final_xp) <= 1e6 * start);
}

void print_summary(const LoopTrace& trace, const RunConfig& cfg, const QuantizedController* qc) {
  const double final_norm = state_norm(trace.final_xp);
  std::cout << "steps: " << trace.steps.size() << (trace.complete ? "" : " (incomplete: connection lost)") << "\n";
  std::cout << "final |x_p|_inf: " << final_norm << "\n";
  std::cout << "converged (|x_p|_inf < 1e-2): " << (final_norm < 1e-2 ? "yes" : "no") << "\n";
  std::cout << "diverged: " << (diverged(trace) ? "yes" : "no") << "\n";
  if (trace.kind != LoopKind::kNominal) std::cout << "plaintext overflow: " << (trace.any_overflow() ? "yes" : "no") << "\n";
  if (!trace.instrumented() || !qc || trace.steps.empty()) return;

  Rational max_err(0);
  for (const auto& s : trace.steps)
    if (s.err_L && abs(*s.err_L) > max_err) max_err = abs(*s.err_L);
  const Rational L(cfg.params.L);
  std::cout << "max |L(xi - xbar)|: " << max_err.to_string() << " (" << (max_err / L).to_double() << " L)\n";
  const DisturbanceReport rep = disturbance_report(trace, cfg.params, *qc);
  std::cout << "max ||Delta1||: " << rep.max_delta1().to_double() << " (bound " << rep.delta1_bound.to_double()
            << ", worst case " << rep.delta1_worst_case.to_double() << ")\n";
  std::cout << "max |Delta2|: " << rep.max_delta2().to_double() << " (bound " << rep.delta2_bound.to_double()
            << ", worst case " << rep.delta2_worst_case.to_double() << ")\n";
}

int cmd_simulate(const Options& o) {
  if (!o.config && o.mode != "net-controller") throw UsageError("simulate needs --config PATH");
  if (o.mode == "net-controller") {
    if (!o.listen) throw UsageError("--mode net-controller needs --listen ADDR");
    const auto result = net::serve_controller(*o.listen, [](std::uint16_t port) {
      std::cout << "listening on port " << port << std::endl;
    });
    std::cout << "session closed after " << result.steps << " steps\n";
    return 0;
  }

  RunConfig cfg = load_config(*o.config);
  o.params.apply(cfg.params);
  if (o.seed) cfg.params.seed = *o.seed;
  if (o.horizon) cfg.horizon = *o.horizon;

  LoopTrace trace;
  std::optional<QuantizedController> qc;
  if (o.mode == "nominal") {
    trace = run_nominal(cfg.plant, cfg.controller, cfg.horizon);
  } else {
    cfg.params.validate();
    qc = quantize(cfg.controller, cfg.scales);
    if (o.mode == "quantized") {
      trace = run_quantized(cfg.plant, *qc, cfg.horizon, cfg.params.p);
    } else if (o.mode == "encrypted" || o.mode == "net-plant") {
      Rng rng(cfg.params.seed);
      const SecretKey key = keygen(cfg.params, rng);
      if (o.mode == "encrypted") {
        EncryptedController ec = encrypt_controller(*qc, key, cfg.params, rng);
        trace = run_encrypted(cfg.plant, *qc, ec, key, cfg.params, rng, cfg.horizon);
      } else {
        if (!o.connect) throw UsageError("--mode net-plant needs --connect ADDR");
        trace = net::run_plant_side(*o.connect, cfg.plant, *qc, key, cfg.params, rng, cfg.horizon);
      }
    } else {
      throw UsageError("unknown mode '" + o.mode + "'");
    }
  }

  if (o.out) emit_csv(trace, *o.out);
  print_summary(trace, cfg, qc ? &*qc : nullptr);
  if (!trace.complete) return kExitRange;
  if (o.strict && (diverged(trace) || trace.any_overflow())) {
    std::cerr << "strict: " << (trace.any_overflow() ? "plaintext overflow" : "plant state diverged") << "\n";
    return kExitStrict;
  }
  return 0;
}

int cmd_check_params(const Options& o) {
  Params params = o.config ? load_config(*o.config).params : Params{};
  o.params.apply(params);
  std::optional<QuantizedController> qc;
  if (o.config) {
    const RunConfig cfg = load_config(*o.config);
    qc = quantize(cfg.controller, cfg.scales);
  }
  const ParamsReport rep = check_params(params, qc ? &*qc : nullptr);
  std::cout << format_report(params, rep);
  return rep.valid ? 0 : kExitRange;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Encrypted linear controllers: keys, ciphertexts, closed-loop simulation"};
  app.require_subcommand(1);
  Options o;

  auto* keygen_cmd = app.add_subcommand("keygen", "generate a secret key file");
  keygen_cmd->add_option("--config", o.config, "read crypto.* parameters from a config file");
  keygen_cmd->add_option("--seed", o.seed, "PRNG seed");
  keygen_cmd->add_option("--out", o.out, "key file to write");
  o.params.add_to(*keygen_cmd);

  auto* enc_cmd = app.add_subcommand("enc", "encrypt an integer vector");
  enc_cmd->add_option("message", o.message, "plaintext entries in [p]")->required();
  enc_cmd->add_option("--key", o.key, "key file");
  enc_cmd->add_option("--seed", o.seed, "PRNG seed (defaults to the key file's seed)");
  enc_cmd->add_option("--out", o.out, "ciphertext file to write");

  auto* dec_cmd = app.add_subcommand("dec", "decrypt a ciphertext file");
  dec_cmd->add_option("ciphertext", o.ciphertext, "ciphertext file")->required();
  dec_cmd->add_option("--key", o.key, "key file");

  auto* sim_cmd = app.add_subcommand("simulate", "run a closed loop and write its trace as CSV");
  sim_cmd->add_option("--config", o.config, "controller definition file");
  sim_cmd->add_option("--mode", o.mode, "nominal | quantized | encrypted | net-plant | net-controller")
      ->check(CLI::IsMember({"nominal", "quantized", "encrypted", "net-plant", "net-controller"}));
  sim_cmd->add_option("--seed", o.seed, "PRNG seed (overrides crypto.seed)");
  sim_cmd->add_option("--horizon", o.horizon, "number of steps (overrides sim.horizon)");
  sim_cmd->add_option("--out", o.out, "CSV trace output");
  sim_cmd->add_flag("--strict", o.strict, "exit nonzero on divergence or plaintext overflow");
  sim_cmd->add_option("--listen", o.listen, "address for --mode net-controller, e.g. 127.0.0.1:7000");
  sim_cmd->add_option("--connect", o.connect, "controller address for --mode net-plant");
  o.params.add_to(*sim_cmd);

  auto* check_cmd = app.add_subcommand("check-params", "validate parameters and report noise headroom");
  check_cmd->add_option("--config", o.config, "config file (adds controller noise headroom)");
  o.params.add_to(*check_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*keygen_cmd) return cmd_keygen(o);
    if (*enc_cmd) return cmd_enc(o);
    if (*dec_cmd) return cmd_dec(o);
    if (*sim_cmd) return cmd_simulate(o);
    if (*check_cmd) return cmd_check_params(o);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const enctrl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRange;
  }
  return kExitUsage;
}

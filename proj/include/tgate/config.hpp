#pragma once

#include "tgate/core.hpp"
#include "tgate/dynamics.hpp"
#include "tgate/hamiltonian.hpp"
#include "tgate/kinetics.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#ifndef TGATE_VERSION
#define TGATE_VERSION "0.0.0"
#endif

namespace tgate {

using json = nlohmann::json;

inline constexpr const char* version = TGATE_VERSION;

struct RatesConfig {
  std::array<double, 3> lifetimes_ms{0.57, 0.02, 0.57};
  std::optional<TripletKinetics> kinetics;  // when set, rates come from sublevel_mixing

  DecayRates rates() const {
    if (kinetics) {
      const auto m = sublevel_mixing(*kinetics);
      return {m.rates[0], m.rates[1], m.rates[2]};
    }
    return DecayRates::from_lifetimes_ms(lifetimes_ms[0], lifetimes_ms[1], lifetimes_ms[2]);
  }
};

struct ProtocolConfig {
  int passes = 2;
  DensityMatrix initial = basis_density(NuclearBasisState::down_up);
  std::array<double, 3> populations{0.49, 0.02, 0.49};
  ProtocolOptions options;
};

struct SweepConfig {
  std::string parameter = "A";
  double min = 0.0;
  double max = 50.0;
  int points = 25;
};

struct CurveConfig {
  int points = 500;
};

struct MapConfig {
  int points = 21;
  double delta_max = 1.0;
  double sign = 1.0;               // A' = A (1 + sign * delta2)
  std::optional<double> t_max_us;  // default: 1 / a_minus of the symmetric molecule
  int time_grid = 400;
};

struct TraceSpec {
  TraceKind kind = TraceKind::flash_delay;
  Transition transition = Transition::plus_zero;
  double field = 9600.0;
  double theta_deg = 0.0, phi_deg = 0.0;
  double t_inv_us = 0.0;
  double t_start_us = 1.0;
  double t_step_us = 10.0;
  int points = 200;
};

struct KineticsConfig {
  TripletKinetics truth;                    // generating parameters for kinetics-sim
  std::optional<TripletKinetics> initial;  // fit start; defaults to `truth`
  std::vector<TraceSpec> traces;
  double noise_sigma = 0.01;
  std::string traces_csv;                   // kinetics-fit input
};

struct McConfig {
  std::int64_t samples = 100000;
  std::uint64_t seed = 1;
};

struct RunConfig {
  SpinParams spin;
  RatesConfig rates;
  ProtocolConfig protocol;
  SweepConfig sweep;
  CurveConfig curve;
  MapConfig map;
  KineticsConfig kinetics;
  McConfig mc;
  std::string output = "tripletgate";
  json source = json::object();  // parsed document, used for hashing
};

// ---------------------------------------------------------------------------
// Strict reader: unknown keys and type mismatches are reported with a path.

namespace detail {

class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("config " + (path_.empty() ? std::string("/") : path_) + ": " + msg);
  }

  void require_object(std::initializer_list<const char*> allowed) const {
    if (!j_.is_object()) fail("expected an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j_.items())
      if (!ok.count(k)) Node(v, path_ + "/" + k).fail("unknown field");
  }

  bool has(const char* key) const { return j_.contains(key); }
  Node at(const char* key) const { return {j_.at(key), path_ + "/" + key}; }
  Node at(std::size_t i) const { return {j_.at(i), path_ + "/" + std::to_string(i)}; }
  const json& raw() const { return j_; }
  const std::string& path() const { return path_; }

  double number() const {
    if (!j_.is_number()) fail("expected a number");
    const double v = j_.get<double>();
    if (!std::isfinite(v)) fail("must be finite");
    return v;
  }
  std::int64_t integer() const {
    if (!j_.is_number_integer()) fail("expected an integer");
    return j_.get<std::int64_t>();
  }
  bool boolean() const {
    if (!j_.is_boolean()) fail("expected true or false");
    return j_.get<bool>();
  }
  std::string string() const {
    if (!j_.is_string()) fail("expected a string");
    return j_.get<std::string>();
  }
  std::size_t array_size() const {
    if (!j_.is_array()) fail("expected an array");
    return j_.size();
  }

  void get(const char* key, double& out) const { if (has(key)) out = at(key).number(); }
  void get(const char* key, bool& out) const { if (has(key)) out = at(key).boolean(); }
  void get(const char* key, std::string& out) const { if (has(key)) out = at(key).string(); }
  void get(const char* key, int& out) const {
    if (has(key)) {
      const auto v = at(key).integer();
      if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) at(key).fail("out of range");
      out = static_cast<int>(v);
    }
  }

  std::array<double, 3> triple() const {
    if (array_size() != 3) fail("expected 3 numbers");
    return {at(std::size_t{0}).number(), at(std::size_t{1}).number(), at(std::size_t{2}).number()};
  }

 private:
  const json& j_;
  std::string path_;
};

inline constexpr double deg = std::numbers::pi / 180.0;

inline TripletKinetics read_kinetics(const Node& n, TripletKinetics k = {}) {
  n.require_object({"p_x", "p_y", "p_z", "tau_x_ms", "tau_y_ms", "tau_z_ms", "D", "E", "field",
                    "theta_deg", "phi_deg"});
  n.get("p_x", k.p_x);
  n.get("p_y", k.p_y);
  n.get("p_z", k.p_z);
  n.get("tau_x_ms", k.tau_x);
  n.get("tau_y_ms", k.tau_y);
  n.get("tau_z_ms", k.tau_z);
  n.get("D", k.D);
  n.get("E", k.E);
  n.get("field", k.field);
  double th = k.theta / deg, ph = k.phi / deg;
  n.get("theta_deg", th);
  n.get("phi_deg", ph);
  k.theta = th * deg;
  k.phi = ph * deg;
  try {
    k.validate();
  } catch (const ConfigError& e) {
    n.fail(e.what());
  }
  return k;
}

inline TraceKind parse_kind(const Node& n) {
  const std::string s = n.string();
  if (s == "flash_delay") return TraceKind::flash_delay;
  if (s == "inversion_recovery") return TraceKind::inversion_recovery;
  n.fail("unknown trace kind '" + s + "'");
}

inline Transition parse_transition(const Node& n) {
  const std::string s = n.string();
  if (s == "plus_zero") return Transition::plus_zero;
  if (s == "zero_minus") return Transition::zero_minus;
  n.fail("unknown transition '" + s + "'");
}

inline DensityMatrix read_initial(const Node& n) {
  if (n.raw().is_string()) {
    const std::string s = n.string();
    if (s == "up_up") return basis_density(NuclearBasisState::up_up);
    if (s == "up_down") return basis_density(NuclearBasisState::up_down);
    if (s == "down_up") return basis_density(NuclearBasisState::down_up);
    if (s == "down_down") return basis_density(NuclearBasisState::down_down);
    n.fail("unknown initial state '" + s + "'");
  }
  // Explicit matrix: {"re": 4x4, "im": 4x4}; "im" optional.
  n.require_object({"re", "im"});
  DensityMatrix rho = DensityMatrix::Zero();
  for (const char* part : {"re", "im"}) {
    if (!n.has(part)) {
      if (std::string(part) == "re") n.fail("missing field 're'");
      continue;
    }
    const Node m = n.at(part);
    if (m.array_size() != 4) m.fail("expected 4 rows");
    for (std::size_t r = 0; r < 4; ++r) {
      const Node row = m.at(r);
      if (row.array_size() != 4) row.fail("expected 4 columns");
      for (std::size_t c = 0; c < 4; ++c) {
        const double v = row.at(c).number();
        rho(static_cast<int>(r), static_cast<int>(c)) += std::string(part) == "re" ? cplx(v) : cplx(0.0, v);
      }
    }
  }
  if ((rho - rho.adjoint()).norm() > 1e-10) n.fail("matrix is not Hermitian");
  if (std::abs(rho.trace() - 1.0) > 1e-10) n.fail("matrix trace is not 1");
  Eigen::SelfAdjointEigenSolver<DensityMatrix> es(rho);
  if (es.eigenvalues().minCoeff() < -1e-10) n.fail("matrix is not positive semidefinite");
  return rho;
}

}  // namespace detail

inline RunConfig parse_config(const json& doc) {
  using detail::Node;
  RunConfig c;
  c.source = doc;
  const Node root(doc, "");
  root.require_object({"spin", "rates", "protocol", "sweep", "curve", "map", "kinetics", "mc", "output"});

  if (root.has("spin")) {
    const Node n = root.at("spin");
    n.require_object({"omega_n", "omega_nprime", "omega_e", "omega_0", "A", "A_prime", "D", "gamma_opt"});
    n.get("omega_n", c.spin.omega_n);
    n.get("omega_nprime", c.spin.omega_nprime);
    n.get("omega_e", c.spin.omega_e);
    n.get("omega_0", c.spin.omega_0);
    n.get("A", c.spin.A);
    n.get("A_prime", c.spin.A_prime);
    n.get("D", c.spin.D);
    n.get("gamma_opt", c.spin.gamma_opt);
    try {
      c.spin.validate();
    } catch (const ConfigError& e) {
      n.fail(e.what());
    }
  }
  if (root.has("rates")) {
    const Node n = root.at("rates");
    n.require_object({"lifetimes_ms", "kinetics"});
    if (n.has("lifetimes_ms") && n.has("kinetics")) n.fail("give either lifetimes_ms or kinetics, not both");
    if (n.has("lifetimes_ms")) {
      c.rates.lifetimes_ms = n.at("lifetimes_ms").triple();
      for (double t : c.rates.lifetimes_ms)
        if (!(t > 0.0)) n.at("lifetimes_ms").fail("lifetimes must be > 0");
    }
    if (n.has("kinetics")) c.rates.kinetics = detail::read_kinetics(n.at("kinetics"));
  }
  if (root.has("protocol")) {
    const Node n = root.at("protocol");
    n.require_object({"passes", "initial", "populations", "inter_pass_wait", "second_pass_odd_multiple",
                      "phase_match"});
    n.get("passes", c.protocol.passes);
    if (c.protocol.passes != 1 && c.protocol.passes != 2) n.at("passes").fail("must be 1 or 2");
    if (n.has("initial")) c.protocol.initial = detail::read_initial(n.at("initial"));
    if (n.has("populations")) {
      c.protocol.populations = n.at("populations").triple();
      double s = 0.0;
      for (double p : c.protocol.populations) {
        if (p < 0.0) n.at("populations").fail("populations must be >= 0");
        s += p;
      }
      if (s > 1.0 + 1e-12) n.at("populations").fail("populations sum exceeds 1");
    }
    n.get("inter_pass_wait", c.protocol.options.inter_pass_wait);
    if (c.protocol.options.inter_pass_wait < 0.0) n.at("inter_pass_wait").fail("must be >= 0");
    if (n.has("second_pass_odd_multiple") && !n.at("second_pass_odd_multiple").raw().is_null()) {
      const auto m = n.at("second_pass_odd_multiple").integer();
      if (m < 1 || m % 2 == 0 || m > 1000000) n.at("second_pass_odd_multiple").fail("must be a positive odd integer");
      c.protocol.options.second_pass_odd_multiple = static_cast<int>(m);
    }
    n.get("phase_match", c.protocol.options.phase_match);
  }
  if (root.has("sweep")) {
    const Node n = root.at("sweep");
    n.require_object({"parameter", "min", "max", "points"});
    n.get("parameter", c.sweep.parameter);
    if (c.sweep.parameter != "A") n.at("parameter").fail("only 'A' (with A' = A) is supported");
    n.get("min", c.sweep.min);
    n.get("max", c.sweep.max);
    n.get("points", c.sweep.points);
    if (c.sweep.points < 2) n.fail("points must be >= 2");
    if (!(c.sweep.max > c.sweep.min)) n.fail("max must exceed min");
  }
  if (root.has("curve")) {
    const Node n = root.at("curve");
    n.require_object({"points"});
    n.get("points", c.curve.points);
    if (c.curve.points < 2) n.fail("points must be >= 2");
  }
  if (root.has("map")) {
    const Node n = root.at("map");
    n.require_object({"points", "delta_max", "sign", "t_max_us", "time_grid"});
    n.get("points", c.map.points);
    n.get("delta_max", c.map.delta_max);
    n.get("sign", c.map.sign);
    n.get("time_grid", c.map.time_grid);
    if (n.has("t_max_us")) {
      c.map.t_max_us = n.at("t_max_us").number();
      if (!(*c.map.t_max_us > 0.0)) n.at("t_max_us").fail("must be > 0");
    }
    if (c.map.points < 2) n.fail("points must be >= 2");
    if (!(c.map.delta_max > 0.0)) n.fail("delta_max must be > 0");
    if (c.map.sign != 1.0 && c.map.sign != -1.0) n.at("sign").fail("must be 1 or -1");
  }
  if (root.has("kinetics")) {
    const Node n = root.at("kinetics");
    n.require_object({"truth", "initial", "traces", "noise_sigma", "traces_csv"});
    if (n.has("truth")) c.kinetics.truth = detail::read_kinetics(n.at("truth"));
    if (n.has("initial")) c.kinetics.initial = detail::read_kinetics(n.at("initial"));
    n.get("noise_sigma", c.kinetics.noise_sigma);
    if (c.kinetics.noise_sigma < 0.0) n.at("noise_sigma").fail("must be >= 0");
    n.get("traces_csv", c.kinetics.traces_csv);
    if (n.has("traces")) {
      const Node arr = n.at("traces");
      for (std::size_t i = 0; i < arr.array_size(); ++i) {
        const Node t = arr.at(i);
        t.require_object({"kind", "transition", "field", "theta_deg", "phi_deg", "t_inv_us", "t_start_us",
                          "t_step_us", "points"});
        TraceSpec s;
        if (t.has("kind")) s.kind = detail::parse_kind(t.at("kind"));
        if (t.has("transition")) s.transition = detail::parse_transition(t.at("transition"));
        t.get("field", s.field);
        t.get("theta_deg", s.theta_deg);
        t.get("phi_deg", s.phi_deg);
        t.get("t_inv_us", s.t_inv_us);
        t.get("t_start_us", s.t_start_us);
        t.get("t_step_us", s.t_step_us);
        t.get("points", s.points);
        if (s.points < 2) t.fail("points must be >= 2");
        if (!(s.t_step_us > 0.0)) t.fail("t_step_us must be > 0");
        if (s.t_inv_us < 0.0 || s.t_start_us < 0.0) t.fail("times must be >= 0");
        c.kinetics.traces.push_back(s);
      }
    }
  }
  if (root.has("mc")) {
    const Node n = root.at("mc");
    n.require_object({"samples", "seed"});
    if (n.has("samples")) {
      c.mc.samples = n.at("samples").integer();
      if (c.mc.samples < 100) n.at("samples").fail("must be >= 100");
    }
    if (n.has("seed")) {
      const json& s = n.at("seed").raw();
      if (!s.is_number_unsigned()) n.at("seed").fail("expected a nonnegative integer");
      c.mc.seed = s.get<std::uint64_t>();
    }
  }
  if (root.has("output")) {
    const Node n = root.at("output");
    n.require_object({"prefix"});
    n.get("prefix", c.output);
  }
  return c;
}

inline RunConfig parse_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: malformed JSON: ") + e.what());
  }
  return parse_config(doc);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---------------------------------------------------------------------------
// CSV output

inline std::string fmt_num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10e", v);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const std::string& config_hash, const std::vector<std::string>& header) {
    out_ << "# tripletgate " << version << " config_hash=" << config_hash << "\n";
    row_strings(header);
  }

  void row_strings(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << "\n";
  }

  void row(const std::vector<double>& cells) {
    std::vector<std::string> s;
    s.reserve(cells.size());
    for (double v : cells) s.push_back(fmt_num(v));
    row_strings(s);
  }

  std::string str() const { return out_.str(); }

 private:
  std::ostringstream out_;
};

}  // namespace tgate

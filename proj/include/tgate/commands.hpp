#pragma once

#include "tgate/config.hpp"
#include "tgate/dynamics.hpp"
#include "tgate/effective.hpp"
#include "tgate/entanglement.hpp"
#include "tgate/gate.hpp"
#include "tgate/kinetics.hpp"

#include <atomic>
#include <exception>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <thread>
#include <tuple>
#include <vector>

namespace tgate {

/// Evaluates f(0..n-1) on up to `workers` threads; results (and the first
/// failing index's exception) come back in index order.
template <typename F>
auto parallel_map(std::size_t n, int workers, F f) -> std::vector<decltype(f(std::size_t{0}))> {
  using R = decltype(f(std::size_t{0}));
  std::vector<std::optional<R>> slots(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        slots[i].emplace(f(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t nthreads = std::min<std::size_t>(std::max(1, workers), std::max<std::size_t>(n, 1));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < nthreads; ++t) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  std::vector<R> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    out.push_back(std::move(*slots[i]));
  }
  return out;
}

struct RunOptions {
  int workers = 1;
  std::optional<std::uint64_t> seed;       // overrides mc.seed
  std::optional<std::string> out_prefix;   // overrides output.prefix
};

/// Files to write plus text for stdout. Nothing touches disk until the
/// command has finished.
struct CommandOutput {
  std::vector<std::pair<std::string, std::string>> files;
  std::string text;
};

namespace detail {

inline std::uint64_t effective_seed(const RunConfig& c, const RunOptions& o) {
  return o.seed.value_or(c.mc.seed);
}

inline std::string config_hash(const RunConfig& c, const RunOptions& o) {
  return hex64(fnv1a(c.source.dump() + "|seed=" + std::to_string(effective_seed(c, o))));
}

inline std::string prefix(const RunConfig& c, const RunOptions& o) { return o.out_prefix.value_or(c.output); }

inline std::string kind_name(TraceKind k) {
  return k == TraceKind::flash_delay ? "flash_delay" : "inversion_recovery";
}
inline std::string transition_name(Transition t) {
  return t == Transition::plus_zero ? "plus_zero" : "zero_minus";
}

}  // namespace detail

inline CommandOutput cmd_couplings(const RunConfig& c, const RunOptions& o) {
  const SpinParams& p = c.spin;
  const DecayRates rates = c.rates.rates();
  const std::string hash = detail::config_hash(c, o);

  CsvWriter csv(hash, {"sublevel", "a_analytic_MHz", "a_numeric_MHz", "a_signed_MHz", "entangling_wait_us",
                       "iswap_time_us", "lifetime_us"});
  std::ostringstream table;
  table << "sublevel  a_analytic(MHz)   a_numeric(MHz)    wait(us)          lifetime(us)\n";
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (Sublevel s : all_sublevels) {
    const Coupling cp = coupling_numeric(p, s);
    double analytic = nan;
    if (p.symmetric()) {
      try {
        analytic = coupling_analytic(p, s);
      } catch (const std::domain_error&) {
      }
    }
    const double k = rates.of(s);
    const double life = k > 0.0 ? 1.0 / k : std::numeric_limits<double>::infinity();
    const double wait = entangling_wait(cp.a_numeric);
    csv.row_strings({name_of(s), fmt_num(analytic), fmt_num(cp.a_numeric), fmt_num(cp.a_signed), fmt_num(wait),
                     fmt_num(iswap_time(cp.a_numeric)), fmt_num(life)});
    char line[160];
    std::snprintf(line, sizeof line, "%-9s %-17s %-17s %-17s %s\n", name_of(s), fmt_num(analytic).c_str(),
                  fmt_num(cp.a_numeric).c_str(), fmt_num(wait).c_str(), fmt_num(life).c_str());
    table << line;
  }

  const FeasibilityReport f = feasibility(p, rates);
  CsvWriter fcsv(hash, {"quantity", "value"});
  const std::vector<std::pair<std::string, double>> rows{
      {"gate_time_us", f.gate_time},  {"iswap_time_us", f.iswap_time}, {"lifetime_us", f.lifetime},
      {"zero_time_us", f.zero_time},  {"left_ratio", f.left_ratio},    {"right_ratio", f.right_ratio},
      {"gate_margin", f.gate_margin}, {"left_pass", f.left_pass ? 1.0 : 0.0},
      {"right_pass", f.right_pass ? 1.0 : 0.0}};
  for (const auto& [k, v] : rows) fcsv.row_strings({k, fmt_num(v)});

  if (p.symmetric()) {
    try {
      table << "|a+/a0| (analytic) = "
            << fmt_num(std::abs(coupling_analytic(p, Sublevel::plus) / coupling_analytic(p, Sublevel::zero)))
            << "\n";
    } catch (const std::domain_error&) {
    }
  }
  table << "gate time " << fmt_num(f.gate_time) << " us, lifetime " << fmt_num(f.lifetime) << " us, T0 time "
        << fmt_num(f.zero_time) << " us\n";
  table << "feasible: left " << (f.left_pass ? "yes" : "no") << ", right " << (f.right_pass ? "yes" : "no")
        << " (ratio " << fmt_num(f.right_ratio) << ")\n";
  for (const auto& n : f.notes) table << "note: " << n << "\n";

  const std::string pre = detail::prefix(c, o);
  return {{{pre + "_couplings.csv", csv.str()}, {pre + "_feasibility.csv", fcsv.str()}}, table.str()};
}

/// Entangling power of the T+ and T0 blocks over one period of the T+ curve.
inline CommandOutput cmd_epower_curve(const RunConfig& c, const RunOptions& o) {
  const SpinParams& p = c.spin;
  const double a = coupling_numeric(p, Sublevel::plus).a_numeric;
  if (a == 0.0) throw NumericalError("epower-curve: T+ coupling vanishes, period undefined");
  const double period = 2.0 * iswap_time(a);
  const HermitianEvolution evo(build_excited(p));
  const int n = c.curve.points;

  const auto rows = parallel_map(static_cast<std::size_t>(n), o.workers, [&](std::size_t i) {
    const double t = period * static_cast<double>(i) / (n - 1);
    const Operator u = evo.at(t);
    return std::array<double, 4>{t, entangling_power_closed(a, t),
                                 entangling_power_exact(sublevel_block(u, Sublevel::plus).unitary),
                                 entangling_power_exact(sublevel_block(u, Sublevel::zero).unitary)};
  });
  CsvWriter csv(detail::config_hash(c, o), {"t_us", "e_plus_closed", "e_plus_exact", "e_zero_exact"});
  for (const auto& r : rows) csv.row({r[0], r[1], r[2], r[3]});
  return {{{detail::prefix(c, o) + "_epower.csv", csv.str()}}, ""};
}

/// Parameters of one asymmetry-map cell.
inline SpinParams asymmetric_params(const SpinParams& base, double delta1, double delta2, double sign = 1.0) {
  SpinParams p = base;
  p.omega_nprime = base.omega_n * (1.0 + delta1);
  p.A_prime = base.A * (1.0 + sign * delta2);
  return p;
}

inline double map_window(const RunConfig& c) {
  if (c.map.t_max_us) return *c.map.t_max_us;
  SpinParams sym = c.spin;
  sym.A_prime = sym.A;
  sym.omega_nprime = sym.omega_n;
  const double a = coupling_numeric(sym, Sublevel::minus).a_numeric;
  if (a == 0.0) throw NumericalError("asymmetry-map: reference T- coupling vanishes");
  return 1.0 / std::abs(a);
}

inline CommandOutput cmd_asymmetry_map(const RunConfig& c, const RunOptions& o) {
  const int n = c.map.points;
  const double t_max = map_window(c);
  const auto cells = parallel_map(static_cast<std::size_t>(n * n), o.workers, [&](std::size_t idx) {
    const double d1 = c.map.delta_max * static_cast<double>(idx / n) / (n - 1);
    const double d2 = c.map.delta_max * static_cast<double>(idx % n) / (n - 1);
    const SpinParams p = asymmetric_params(c.spin, d1, d2, c.map.sign);
    const PowerMaximum m = max_entangling_power(p, Sublevel::minus, t_max, c.map.time_grid);
    return std::array<double, 4>{d1, d2, m.m, m.t_star};
  });
  CsvWriter csv(detail::config_hash(c, o), {"delta1", "delta2", "m_minus", "t_star_us"});
  for (const auto& r : cells) csv.row({r[0], r[1], r[2], r[3]});
  return {{{detail::prefix(c, o) + "_asymmetry.csv", csv.str()}}, ""};
}

struct SweepPoint {
  double A = 0.0;
  double eof_polarized = 0.0;
  double eof_experimental = 0.0;
};

/// Single pass from fully polarized T0 and the configured protocol, at A = A'.
inline SweepPoint protocol_point(const RunConfig& c, double A) {
  SpinParams p = c.spin;
  p.A = p.A_prime = A;
  const DecayRates rates = c.rates.rates();
  SweepPoint s{A, 0.0, 0.0};
  s.eof_polarized = entanglement_of_formation(
      run_protocol(p, rates, single_pass_sequence(p, c.protocol.initial)).nuclear_state);
  const PulseSequence seq =
      c.protocol.passes == 2
          ? two_pass_sequence(p, rates, c.protocol.initial, c.protocol.populations, c.protocol.options)
          : single_pass_sequence(p, c.protocol.initial, c.protocol.populations);
  s.eof_experimental = entanglement_of_formation(run_protocol(p, rates, seq).nuclear_state);
  return s;
}

inline CommandOutput cmd_protocol_sweep(const RunConfig& c, const RunOptions& o) {
  const int n = c.sweep.points;
  const auto pts = parallel_map(static_cast<std::size_t>(n), o.workers, [&](std::size_t i) {
    return protocol_point(c, c.sweep.min + (c.sweep.max - c.sweep.min) * static_cast<double>(i) / (n - 1));
  });
  CsvWriter csv(detail::config_hash(c, o), {"A_MHz", "eof_polarized", "eof_experimental"});
  for (const auto& s : pts) csv.row({s.A, s.eof_polarized, s.eof_experimental});
  return {{{detail::prefix(c, o) + "_protocol.csv", csv.str()}}, ""};
}

/// Default trace set: flash delay and inversion recovery on plus_zero with
/// the field along the molecular x and y axes.
inline std::vector<TraceSpec> default_trace_specs() {
  std::vector<TraceSpec> out;
  for (TraceKind kind : {TraceKind::flash_delay, TraceKind::inversion_recovery})
    for (double phi : {0.0, 90.0}) {
      TraceSpec s;
      s.kind = kind;
      s.theta_deg = 90.0;
      s.phi_deg = phi;
      s.t_inv_us = kind == TraceKind::inversion_recovery ? 20.0 : 0.0;
      out.push_back(s);
    }
  return out;
}

inline TraceData trace_from_spec(const TraceSpec& s) {
  TraceData t;
  t.kind = s.kind;
  t.transition = s.transition;
  t.field = s.field;
  t.theta = s.theta_deg * detail::deg;
  t.phi = s.phi_deg * detail::deg;
  t.inversion_delay = s.t_inv_us;
  for (int i = 0; i < s.points; ++i) t.times.push_back(s.t_start_us + s.t_step_us * i);
  return t;
}

inline const std::vector<std::string>& trace_csv_header() {
  static const std::vector<std::string> h{"kind", "transition", "t_us", "amplitude",
                                          "field_MHz", "theta_deg", "phi_deg", "t_inv_us"};
  return h;
}

inline void append_trace_rows(CsvWriter& csv, const TraceData& t, const std::vector<double>& values) {
  for (std::size_t i = 0; i < t.times.size(); ++i)
    csv.row_strings({detail::kind_name(t.kind), detail::transition_name(t.transition), fmt_num(t.times[i]),
                     fmt_num(values[i]), fmt_num(t.field), fmt_num(t.theta / detail::deg),
                     fmt_num(t.phi / detail::deg), fmt_num(t.inversion_delay)});
}

inline CommandOutput cmd_kinetics_sim(const RunConfig& c, const RunOptions& o) {
  const auto specs = c.kinetics.traces.empty() ? default_trace_specs() : c.kinetics.traces;
  std::mt19937_64 rng(detail::effective_seed(c, o));
  std::normal_distribution<double> noise(0.0, 1.0);
  CsvWriter csv(detail::config_hash(c, o), trace_csv_header());
  for (const auto& s : specs) {
    TraceData t = simulate_trace(c.kinetics.truth, trace_from_spec(s));
    t.noise_sigma = c.kinetics.noise_sigma;
    for (double& a : t.amplitudes) a += c.kinetics.noise_sigma * noise(rng);
    append_trace_rows(csv, t, t.amplitudes);
  }
  return {{{detail::prefix(c, o) + "_traces.csv", csv.str()}}, ""};
}

/// Reads traces in the kinetics-sim CSV layout; rows with identical
/// (kind, transition, field, theta, phi, t_inv) form one trace, in order of
/// first appearance.
inline std::vector<TraceData> read_traces_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<TraceData> traces;
  std::map<std::tuple<std::string, std::string, double, double, double, double>, std::size_t> index;
  bool header_seen = false;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
    const auto where = "traces csv line " + std::to_string(lineno) + ": ";
    if (!header_seen) {
      if (cells != trace_csv_header()) throw ConfigError(where + "unexpected header");
      header_seen = true;
      continue;
    }
    if (cells.size() != 8) throw ConfigError(where + "expected 8 columns");
    std::array<double, 6> v{};
    try {
      for (int k = 0; k < 6; ++k) {
        std::size_t used = 0;
        v[k] = std::stod(cells[2 + k], &used);
        if (used != cells[2 + k].size()) throw std::invalid_argument("trailing characters");
      }
    } catch (const std::exception&) {
      throw ConfigError(where + "malformed number");
    }
    TraceKind kind;
    if (cells[0] == "flash_delay") kind = TraceKind::flash_delay;
    else if (cells[0] == "inversion_recovery") kind = TraceKind::inversion_recovery;
    else throw ConfigError(where + "unknown kind '" + cells[0] + "'");
    Transition tr;
    if (cells[1] == "plus_zero") tr = Transition::plus_zero;
    else if (cells[1] == "zero_minus") tr = Transition::zero_minus;
    else throw ConfigError(where + "unknown transition '" + cells[1] + "'");

    const auto key = std::make_tuple(cells[0], cells[1], v[2], v[3], v[4], v[5]);
    auto it = index.find(key);
    if (it == index.end()) {
      TraceData t;
      t.kind = kind;
      t.transition = tr;
      t.field = v[2];
      t.theta = v[3] * detail::deg;
      t.phi = v[4] * detail::deg;
      t.inversion_delay = v[5];
      traces.push_back(t);
      it = index.emplace(key, traces.size() - 1).first;
    }
    traces[it->second].times.push_back(v[0]);
    traces[it->second].amplitudes.push_back(v[1]);
  }
  if (!header_seen) throw ConfigError("traces csv: missing header");
  for (const auto& t : traces) t.validate();
  return traces;
}

inline CommandOutput cmd_kinetics_fit(const RunConfig& c, const RunOptions& o) {
  if (c.kinetics.traces_csv.empty()) throw ConfigError("config /kinetics/traces_csv: required for kinetics-fit");
  std::ifstream in(c.kinetics.traces_csv, std::ios::binary);
  if (!in) throw ConfigError("config /kinetics/traces_csv: cannot open '" + c.kinetics.traces_csv + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  const auto traces = read_traces_csv(ss.str());
  const FitResult r = fit_traces(traces, c.kinetics.initial.value_or(c.kinetics.truth));

  const std::string hash = detail::config_hash(c, o);
  json j;
  j["version"] = version;
  j["config_hash"] = hash;
  j["p_x"] = r.params.p_x;
  j["p_y"] = r.params.p_y;
  j["p_z"] = r.params.p_z;
  j["tau_x_ms"] = r.params.tau_x;
  j["tau_y_ms"] = r.params.tau_y;
  j["tau_z_ms"] = r.params.tau_z;
  j["stderr"] = {{"p_x", r.stderrs[0]}, {"p_y", r.stderrs[1]}, {"p_z", r.stderrs[2]},
                 {"tau_x_ms", r.stderrs[3]}, {"tau_y_ms", r.stderrs[4]}, {"tau_z_ms", r.stderrs[5]}};
  j["residual_norm"] = r.residual_norm;
  j["near_singular"] = r.near_singular;
  j["rcond"] = r.rcond;
  j["iterations"] = r.iterations;
  j["scales"] = r.scales;

  CsvWriter csv(hash, trace_csv_header());
  for (std::size_t i = 0; i < traces.size(); ++i) append_trace_rows(csv, traces[i], r.residuals[i]);

  std::ostringstream text;
  text << "p_x:p_y:p_z = " << fmt_num(r.params.p_x) << " : " << fmt_num(r.params.p_y) << " : "
       << fmt_num(r.params.p_z) << "\n"
       << "tau_x, tau_y, tau_z (ms) = " << fmt_num(r.params.tau_x) << ", " << fmt_num(r.params.tau_y) << ", "
       << fmt_num(r.params.tau_z) << "\n"
       << "residual norm " << fmt_num(r.residual_norm) << (r.near_singular ? " (near-singular Jacobian)" : "")
       << "\n";
  const std::string pre = detail::prefix(c, o);
  return {{{pre + "_fit.json", j.dump(2) + "\n"}, {pre + "_residuals.csv", csv.str()}}, text.str()};
}

}  // namespace tgate

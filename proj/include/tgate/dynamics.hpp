#pragma once

#include "tgate/core.hpp"
#include "tgate/effective.hpp"
#include "tgate/gate.hpp"
#include "tgate/hamiltonian.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace tgate {

/// Optical decay rates of the triplet sublevels to the ground state, 1/us.
struct DecayRates {
  double k_plus = 0.0;
  double k_zero = 0.0;
  double k_minus = 0.0;

  double of(Sublevel s) const {
    switch (s) {
      case Sublevel::plus: return k_plus;
      case Sublevel::zero: return k_zero;
      case Sublevel::minus: return k_minus;
    }
    return 0.0;
  }

  void validate() const {
    for (double k : {k_plus, k_zero, k_minus})
      if (!(k >= 0.0) || !std::isfinite(k)) throw ConfigError("DecayRates: rates must be finite and >= 0");
  }

  /// From lifetimes in ms (0.57 ms -> 1/570 per us).
  static DecayRates from_lifetimes_ms(double tau_plus, double tau_zero, double tau_minus) {
    const auto k = [](double tau_ms) {
      if (!(tau_ms > 0.0)) throw ConfigError("lifetimes must be > 0");
      return 1.0 / (tau_ms * 1000.0);
    };
    return {k(tau_plus), k(tau_zero), k(tau_minus)};
  }
};

// Photon-distinguishability model: overlap of two Lorentzian emission lines of
// total width k_tot whose centres are `detuning` apart (both rad/us).
using OverlapModel = double (*)(double k_tot, double detuning);

inline double lorentzian_overlap(double k_tot, double detuning) {
  if (k_tot <= 0.0) return detuning == 0.0 ? 1.0 : 0.0;
  return k_tot / std::sqrt(k_tot * k_tot + detuning * detuning);
}

// ---------------------------------------------------------------------------
// Pulse sequences

struct Excite {
  std::array<double, 3> populations{};  // indexed by Sublevel: plus, zero, minus
};

struct MicrowaveSwap {
  Sublevel from{};
  Sublevel to{};
};

struct Wait {
  double duration = 0.0;  // us
  bool decay = true;
};

struct CollectDecay {
  std::optional<double> horizon;  // us; nullopt means "until empty"
};

using PulseEvent = std::variant<Excite, MicrowaveSwap, Wait, CollectDecay>;

struct PulseSequence {
  DensityMatrix initial_state = DensityMatrix::Zero();
  std::vector<PulseEvent> events;
};

// ---------------------------------------------------------------------------
// Ensemble bookkeeping

struct PhotonRecord {
  Sublevel sublevel{};
  double start = 0.0;     // us, clock at segment start
  double duration = 0.0;  // us, infinite for a complete collection
  double rate = 0.0;      // 1/us
  double linewidth = 0.0; // k_tot, rad/us
  Eigen::Vector4d frequencies = Eigen::Vector4d::Zero();  // branch eigenfrequencies, rad/us
  double emitted = 0.0;   // population transferred to the ground state
};

/// Excited branches are stored in the Schroedinger picture. The ground
/// accumulator is stored in the interaction picture of the ground
/// Hamiltonian at `clock`; ground_state() converts back.
struct EnsembleState {
  std::array<DensityMatrix, 3> excited{DensityMatrix::Zero(), DensityMatrix::Zero(),
                                       DensityMatrix::Zero()};
  DensityMatrix ground = DensityMatrix::Zero();
  double clock = 0.0;
  std::vector<PhotonRecord> photons;

  static EnsembleState in_ground(const DensityMatrix& rho) {
    EnsembleState s;
    s.ground = rho;
    return s;
  }

  DensityMatrix& branch(Sublevel s) { return excited[index_of(s)]; }
  const DensityMatrix& branch(Sublevel s) const { return excited[index_of(s)]; }

  double excited_population() const {
    double t = 0.0;
    for (const auto& b : excited) t += b.trace().real();
    return t;
  }

  double total_trace() const { return excited_population() + ground.trace().real(); }

  DensityMatrix ground_state(const Eigen::Vector4d& ground_energies) const {
    const Eigen::Vector4cd ph = (ground_energies.cast<cplx>() * cplx(0.0, -clock)).array().exp();
    return ph.asDiagonal() * ground * ph.conjugate().asDiagonal();
  }

  /// Nuclear state with the electron traced out (Schroedinger picture).
  DensityMatrix nuclear_state(const Eigen::Vector4d& ground_energies) const {
    DensityMatrix r = ground_state(ground_energies);
    for (const auto& b : excited) r += b;
    return r;
  }
};

/// Effective nuclear Hamiltonians of the three sublevels, rad/us.
struct BranchHamiltonians {
  std::array<Matrix4c, 3> h;

  explicit BranchHamiltonians(const Operator& h_excited) {
    for (Sublevel s : all_sublevels) h[index_of(s)] = effective_block(h_excited, s);
  }
  const Matrix4c& of(Sublevel s) const { return h[index_of(s)]; }
};

/// Coherent evolution plus exponential decay of one branch into the ground
/// accumulator over [clock, clock + duration]. In the branch eigenbasis
/// {mu} a decayed coherence between paths (mu -> a) and (nu -> b) picks up
/// the time-integral factor k (1 - e^{-zT}) / z, z = k + i x, and the photon
/// overlap factor, where x = (w_mu - w_nu) - (e_a - e_b) is the difference of
/// the two emitted photon frequencies.
class BranchDecay {
 public:
  BranchDecay(const Matrix4c& h_branch, const Eigen::Vector4d& ground_energies, double rate,
              double linewidth, OverlapModel overlap = lorentzian_overlap)
      : ground_energies_(ground_energies), rate_(rate), linewidth_(linewidth), overlap_(overlap) {
    Eigen::SelfAdjointEigenSolver<Matrix4c> es(h_branch);
    vectors_ = es.eigenvectors();
    freqs_ = es.eigenvalues();
  }

  struct Outcome {
    DensityMatrix remaining;
    DensityMatrix influx;  // interaction picture of the ground Hamiltonian
  };

  /// `duration` may be +infinity (complete decay).
  Outcome apply(const DensityMatrix& rho, double clock, double duration) const {
    const bool complete = std::isinf(duration);
    const Matrix4c rho_eig = vectors_.adjoint() * rho * vectors_;
    Outcome out;
    out.influx = DensityMatrix::Zero();

    if (complete) {
      out.remaining = rate_ > 0.0 ? DensityMatrix::Zero() : DensityMatrix(rho);
    } else {
      const Eigen::Vector4cd ph = (freqs_.cast<cplx>() * cplx(0.0, -duration)).array().exp();
      out.remaining = std::exp(-rate_ * duration) * vectors_ * ph.asDiagonal() * rho_eig *
                      ph.conjugate().asDiagonal() * vectors_.adjoint();
    }
    if (rate_ <= 0.0) return out;

    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) {
        const double dg = ground_energies_(a) - ground_energies_(b);
        const cplx frame = std::exp(cplx(0.0, dg * clock));
        cplx acc = 0.0;
        for (int mu = 0; mu < 4; ++mu)
          for (int nu = 0; nu < 4; ++nu) {
            const cplx amp = vectors_(a, mu) * rho_eig(mu, nu) * std::conj(vectors_(b, nu));
            if (amp == 0.0) continue;
            const double x = (freqs_(mu) - freqs_(nu)) - dg;
            const cplx z(rate_, x);
            const cplx integral = complete ? 1.0 / z : (1.0 - std::exp(-z * duration)) / z;
            acc += amp * rate_ * integral * overlap_(linewidth_, x);
          }
        out.influx(a, b) = frame * acc;
      }
    return out;
  }

  const Eigen::Vector4d& frequencies() const { return freqs_; }

 private:
  Matrix4c vectors_;
  Eigen::Vector4d freqs_;
  Eigen::Vector4d ground_energies_;
  double rate_;
  double linewidth_;
  OverlapModel overlap_;
};

/// Ideal instantaneous pi pulse between two sublevels.
inline EnsembleState apply_microwave(EnsembleState state, Sublevel from, Sublevel to) {
  if (from == to) throw std::invalid_argument("apply_microwave: sublevels must differ");
  std::swap(state.branch(from), state.branch(to));
  return state;
}

inline EnsembleState evolve_with_decay(EnsembleState state, const BranchHamiltonians& branches,
                                       const DecayRates& rates, const SpinParams& params,
                                       std::optional<double> duration,
                                       OverlapModel overlap = lorentzian_overlap) {
  if (duration && !(*duration >= 0.0)) throw std::invalid_argument("evolve_with_decay: negative duration");
  const double t = duration.value_or(std::numeric_limits<double>::infinity());
  const Eigen::Vector4d eg = ground_energies(params);
  for (Sublevel s : all_sublevels) {
    DensityMatrix& rho = state.branch(s);
    const double k = rates.of(s);
    const double k_tot = k + to_angular(params.gamma_opt);
    const BranchDecay channel(branches.of(s), eg, k, k_tot, overlap);
    const auto res = channel.apply(rho, state.clock, t);
    const double emitted = res.influx.trace().real();
    if (emitted > 0.0)
      state.photons.push_back({s, state.clock, t, k, k_tot, channel.frequencies(), emitted});
    rho = res.remaining;
    state.ground += res.influx;
  }
  if (duration) state.clock += *duration;
  return state;
}

inline EnsembleState evolve_with_decay(EnsembleState state, const Operator& h_excited,
                                       const DecayRates& rates, const SpinParams& params,
                                       std::optional<double> duration) {
  return evolve_with_decay(std::move(state), BranchHamiltonians(h_excited), rates, params, duration);
}

/// Coherent evolution of every branch without decay.
inline EnsembleState evolve_coherent(EnsembleState state, const BranchHamiltonians& branches,
                                     double duration) {
  if (!(duration >= 0.0)) throw std::invalid_argument("evolve_coherent: negative duration");
  for (Sublevel s : all_sublevels) {
    const Matrix4c u = propagator(branches.of(s), duration);
    state.branch(s) = u * state.branch(s) * u.adjoint();
  }
  state.clock += duration;
  return state;
}

// ---------------------------------------------------------------------------
// Protocol execution

inline void validate_sequence(const PulseSequence& seq) {
  const DensityMatrix& r = seq.initial_state;
  if ((r - r.adjoint()).norm() > 1e-10 || std::abs(r.trace() - 1.0) > 1e-10)
    throw ConfigError("PulseSequence: initial state must be Hermitian with unit trace");
  for (const auto& ev : seq.events) {
    if (const auto* e = std::get_if<Excite>(&ev)) {
      double sum = 0.0;
      for (double p : e->populations) {
        if (!(p >= 0.0)) throw ConfigError("Excite: populations must be nonnegative");
        sum += p;
      }
      if (sum > 1.0 + 1e-12) throw ConfigError("Excite: populations sum exceeds 1");
    } else if (const auto* m = std::get_if<MicrowaveSwap>(&ev)) {
      if (m->from == m->to) throw ConfigError("MicrowaveSwap: sublevels must differ");
    } else if (const auto* w = std::get_if<Wait>(&ev)) {
      if (!(w->duration >= 0.0) || std::isinf(w->duration))
        throw ConfigError("Wait: duration must be finite and >= 0");
    } else if (const auto* c = std::get_if<CollectDecay>(&ev)) {
      if (c->horizon && !(*c->horizon >= 0.0)) throw ConfigError("CollectDecay: negative horizon");
    }
  }
  if (seq.events.empty() || !std::holds_alternative<CollectDecay>(seq.events.back()) ||
      std::get<CollectDecay>(seq.events.back()).horizon)
    throw ConfigError("PulseSequence: final event must be CollectDecay until complete");
}

struct ProtocolResult {
  DensityMatrix nuclear_state;   // ground-manifold nuclear state, trace 1
  double residual_excited = 0.0; // population still excited at the end
  std::optional<std::string> warning;
  EnsembleState final_state;
};

inline ProtocolResult run_protocol(const SpinParams& params, const DecayRates& rates,
                                   const PulseSequence& seq,
                                   OverlapModel overlap = lorentzian_overlap) {
  params.validate();
  rates.validate();
  validate_sequence(seq);
  const BranchHamiltonians branches(build_excited(params));
  const Eigen::Vector4d eg = ground_energies(params);

  EnsembleState state = EnsembleState::in_ground(seq.initial_state);
  for (const auto& ev : seq.events) {
    if (const auto* e = std::get_if<Excite>(&ev)) {
      if (state.excited_population() > 1e-12)
        throw ConfigError("Excite: excited manifold is still populated");
      const DensityMatrix g = state.ground_state(eg);
      double sum = 0.0;
      for (Sublevel s : all_sublevels) {
        state.branch(s) = e->populations[index_of(s)] * g;
        sum += e->populations[index_of(s)];
      }
      state.ground *= (1.0 - sum);
    } else if (const auto* m = std::get_if<MicrowaveSwap>(&ev)) {
      state = apply_microwave(std::move(state), m->from, m->to);
    } else if (const auto* w = std::get_if<Wait>(&ev)) {
      state = w->decay ? evolve_with_decay(std::move(state), branches, rates, params, w->duration, overlap)
                       : evolve_coherent(std::move(state), branches, w->duration);
    } else if (const auto* c = std::get_if<CollectDecay>(&ev)) {
      state = evolve_with_decay(std::move(state), branches, rates, params, c->horizon, overlap);
    }
  }

  ProtocolResult out;
  out.residual_excited = state.excited_population();
  const DensityMatrix g = state.ground_state(eg);
  const double tr = g.trace().real();
  if (tr > 1e-12) {
    out.nuclear_state = g / tr;
  } else {
    const DensityMatrix all = state.nuclear_state(eg);
    out.nuclear_state = all / all.trace().real();
  }
  out.nuclear_state = 0.5 * (out.nuclear_state + out.nuclear_state.adjoint()).eval();
  if (out.residual_excited > 1e-6) {
    std::ostringstream os;
    os << "run_protocol: residual excited population " << out.residual_excited;
    out.warning = os.str();
  }
  out.final_state = std::move(state);
  return out;
}

// ---------------------------------------------------------------------------
// Protocol schedules

enum class NuclearBasisState { up_up = 0, up_down = 1, down_up = 2, down_down = 3 };

inline DensityMatrix basis_density(NuclearBasisState s) {
  DensityMatrix r = DensityMatrix::Zero();
  r(static_cast<int>(s), static_cast<int>(s)) = 1.0;
  return r;
}

struct ProtocolOptions {
  double inter_pass_wait = 5.0;                 // in units of 1/k_zero
  std::optional<int> second_pass_odd_multiple;  // auto when empty
  bool phase_match = true;  // auto multiple must reproduce the first-pass Bell state
};

/// Single pass: excitation into T0, swap to T+, entangling wait, swap back.
inline PulseSequence single_pass_sequence(const SpinParams& p, const DensityMatrix& initial,
                                          std::array<double, 3> populations = {0.0, 1.0, 0.0}) {
  PulseSequence seq;
  seq.initial_state = initial;
  seq.events.push_back(Excite{populations});
  const double gate = entangling_wait(coupling_numeric(p, Sublevel::plus).a_numeric);
  if (std::isfinite(gate)) {
    seq.events.push_back(MicrowaveSwap{Sublevel::zero, Sublevel::plus});
    seq.events.push_back(Wait{gate});
    seq.events.push_back(MicrowaveSwap{Sublevel::plus, Sublevel::zero});
  }
  seq.events.push_back(CollectDecay{});
  return seq;
}

struct TwoPassSchedule {
  bool gated = false;        // false when either coupling vanishes
  double first_swap = 0.0;   // us after excitation: T+ -> T0
  double second_swap = 0.0;  // us after excitation: T- -> T0
  int second_multiple = 0;
};

/// Timing for the two-pass protocol. The T+ population is released into the
/// fast-decaying T0 after one entangling wait; once T0 has emptied, the T-
/// population is released at an odd multiple of its own entangling wait.
inline TwoPassSchedule two_pass_schedule(const SpinParams& p, const DecayRates& rates,
                                         const ProtocolOptions& opts = {}) {
  const Coupling cp = coupling_numeric(p, Sublevel::plus);
  const Coupling cm = coupling_numeric(p, Sublevel::minus);
  TwoPassSchedule s;
  const double q_plus = entangling_wait(cp.a_numeric);
  const double q_minus = entangling_wait(cm.a_numeric);
  if (!std::isfinite(q_plus) || !std::isfinite(q_minus)) return s;
  s.gated = true;
  s.first_swap = q_plus;
  const double earliest =
      q_plus + (rates.k_zero > 0.0 ? opts.inter_pass_wait / rates.k_zero : 0.0);

  if (opts.second_pass_odd_multiple) {
    const int m = *opts.second_pass_odd_multiple;
    if (m < 1 || m % 2 == 0) throw ConfigError("second_pass_odd_multiple must be a positive odd integer");
    s.second_multiple = m;
  } else {
    // A flip-flop rotation by angle theta = a t maps |down-up> to
    // cos(theta)|down-up> - i sin(theta)|up-down>; at odd multiples of pi/4
    // the Bell state's relative phase is sign(a) * tan(m pi / 4).
    const int target = cp.a_signed >= 0.0 ? 1 : -1;
    const int sign_minus = cm.a_signed >= 0.0 ? 1 : -1;
    int m = 1;
    while (m * q_minus < earliest ||
           (opts.phase_match && sign_minus * ((m % 4 == 1) ? 1 : -1) != target))
      m += 2;
    s.second_multiple = m;
  }
  s.second_swap = s.second_multiple * q_minus;
  if (s.second_swap <= s.first_swap)
    throw ConfigError("two-pass schedule: second pass would end before the first");
  return s;
}

/// Two-pass sequence for excitation into both T+ and T- (partial polarization).
inline PulseSequence two_pass_sequence(const SpinParams& p, const DecayRates& rates,
                                       const DensityMatrix& initial,
                                       std::array<double, 3> populations,
                                       const ProtocolOptions& opts = {}) {
  PulseSequence seq;
  seq.initial_state = initial;
  seq.events.push_back(Excite{populations});
  const TwoPassSchedule s = two_pass_schedule(p, rates, opts);
  if (s.gated) {
    seq.events.push_back(Wait{s.first_swap});
    seq.events.push_back(MicrowaveSwap{Sublevel::plus, Sublevel::zero});
    seq.events.push_back(Wait{s.second_swap - s.first_swap});
    seq.events.push_back(MicrowaveSwap{Sublevel::minus, Sublevel::zero});
  }
  seq.events.push_back(CollectDecay{});
  return seq;
}

// ---------------------------------------------------------------------------
// Lifetime window check

struct FeasibilityReport {
  double gate_time = 0.0;      // entangling wait on T+, us
  double iswap_time = 0.0;     // time to entangling power 2/9 on T+, us
  double lifetime = 0.0;       // 1/k_plus, us
  double zero_time = 0.0;      // pi / (2 * 2pi * a_0), us
  double left_ratio = 0.0;     // lifetime / gate_time
  double right_ratio = 0.0;    // zero_time / lifetime
  double gate_margin = 0.0;    // zero_time / gate_time
  bool left_pass = false;      // gate_time < lifetime
  bool right_pass = false;     // zero_time >= ratio * lifetime
  std::vector<std::string> notes;
};

inline FeasibilityReport feasibility(const SpinParams& p, const DecayRates& rates,
                                     double much_less_ratio = 10.0) {
  const Coupling cp = coupling_numeric(p, Sublevel::plus);
  const Coupling c0 = coupling_numeric(p, Sublevel::zero);
  FeasibilityReport r;
  r.gate_time = entangling_wait(cp.a_numeric);
  r.iswap_time = iswap_time(cp.a_numeric);
  r.zero_time = iswap_time(c0.a_numeric);
  const double inf = std::numeric_limits<double>::infinity();
  r.lifetime = rates.k_plus > 0.0 ? 1.0 / rates.k_plus : inf;
  if (std::isinf(r.lifetime)) r.notes.push_back("infinite lifetime (k_plus = 0)");
  if (std::isinf(r.gate_time)) r.notes.push_back("vanishing coupling: gate time is infinite");

  r.left_ratio = std::isinf(r.gate_time) ? 0.0 : r.lifetime / r.gate_time;
  r.right_ratio = std::isinf(r.lifetime) ? 0.0 : r.zero_time / r.lifetime;
  r.gate_margin = std::isinf(r.gate_time) ? 0.0 : r.zero_time / r.gate_time;
  r.left_pass = r.gate_time < r.lifetime;
  r.right_pass = r.right_ratio >= much_less_ratio;
  return r;
}

}  // namespace tgate

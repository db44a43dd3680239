#pragma once

#include "tgate/core.hpp"
#include "tgate/spincore.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>

namespace tgate {

/// Spin Hamiltonian constants. Every field is an ordinary frequency in MHz;
/// builders convert to rad/us.
struct SpinParams {
  double omega_n = 3.7;
  double omega_nprime = 3.7;
  double omega_e = 9600.0;
  double omega_0 = 0.0;
  double A = 2.5;
  double A_prime = 2.5;
  double D = -296.0;
  double gamma_opt = 1e-3;

  void validate() const {
    for (double v : {omega_n, omega_nprime, omega_e, omega_0, A, A_prime, D, gamma_opt})
      if (!std::isfinite(v)) throw ConfigError("SpinParams: all frequencies must be finite");
    if (!(omega_e > 0.0)) throw ConfigError("SpinParams: omega_e must be > 0");
    if (!(gamma_opt > 0.0)) throw ConfigError("SpinParams: gamma_opt must be > 0");
  }

  bool symmetric(double tol = 1e-12) const {
    return std::abs(A - A_prime) <= tol * std::max(1.0, std::abs(A)) &&
           std::abs(omega_n - omega_nprime) <= tol * std::max(1.0, std::abs(omega_n));
  }

  /// Diagnostic only: every small scale is below ratio * omega_e.
  bool perturbative(double ratio = 0.1) const {
    const double limit = ratio * omega_e;
    return std::abs(A) < limit && std::abs(A_prime) < limit && std::abs(omega_n) < limit &&
           std::abs(omega_nprime) < limit && std::abs(D) < limit;
  }

  /// Defaults describe the reference molecule.
  static SpinParams reference() { return {}; }
};

namespace detail {

inline Operator hamiltonian_on(const SpinParams& p, Space space) {
  const auto e = spin_one_ops();
  const auto n = spin_half_ops();
  const auto E = [&](const Operator& op) { return embed(op, Slot::electron, space); };
  const auto N = [&](const Operator& op) { return embed(op, Slot::nucleus_n, space); };
  const auto Np = [&](const Operator& op) { return embed(op, Slot::nucleus_nprime, space); };

  const Operator ez = E(e.z);
  const Operator dot_n = N(n.x) * E(e.x) + N(n.y) * E(e.y) + N(n.z) * ez;
  const Operator dot_np = Np(n.x) * E(e.x) + Np(n.y) * E(e.y) + Np(n.z) * ez;
  const Operator excited_identity = space == Space::full
                                        ? excited_projector()
                                        : Operator::Identity(12, 12);

  Operator h = -p.omega_n * N(n.z) - p.omega_nprime * Np(n.z) + p.omega_e * ez +
               p.omega_0 * excited_identity + p.A * dot_n + p.A_prime * dot_np +
               p.D * ez * ez;
  return two_pi * h;
}

}  // namespace detail

/// Full 16x16 Hamiltonian (ground + excited manifolds), rad/us.
inline Operator build_full(const SpinParams& p) { return detail::hamiltonian_on(p, Space::full); }

/// Excited-manifold (triplet) block, 12x12, rad/us.
inline Operator build_excited(const SpinParams& p) {
  return detail::hamiltonian_on(p, Space::excited);
}

/// Ground-manifold block: nuclear Zeeman only, diagonal.
inline Operator build_ground(const SpinParams& p) {
  Operator h = Operator::Zero(4, 4);
  for (int n = 0; n < 2; ++n)
    for (int np = 0; np < 2; ++np) {
      const double mn = n == BasisLayout::up ? 0.5 : -0.5;
      const double mnp = np == BasisLayout::up ? 0.5 : -0.5;
      h(n * 2 + np, n * 2 + np) = -two_pi * (p.omega_n * mn + p.omega_nprime * mnp);
    }
  return h;
}

/// Diagonal of the ground Hamiltonian as real energies (rad/us).
inline Eigen::Vector4d ground_energies(const SpinParams& p) {
  return build_ground(p).diagonal().real();
}

}  // namespace tgate

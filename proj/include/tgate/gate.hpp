#pragma once

#include "tgate/core.hpp"
#include "tgate/effective.hpp"
#include "tgate/entanglement.hpp"
#include "tgate/hamiltonian.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>

namespace tgate {

/// exp(-i H t) for a fixed Hermitian H, diagonalized once.
class HermitianEvolution {
 public:
  explicit HermitianEvolution(const Operator& h) {
    if (!linalg::is_hermitian(h)) throw std::invalid_argument("propagator: H is not Hermitian");
    Eigen::SelfAdjointEigenSolver<Operator> es(h);
    vectors_ = es.eigenvectors();
    energies_ = es.eigenvalues();
  }

  Operator at(double t) const {
    const Eigen::VectorXcd phases =
        (energies_.cast<cplx>() * cplx(0.0, -t)).array().exp().matrix();
    return vectors_ * phases.asDiagonal() * vectors_.adjoint();
  }

  const Eigen::VectorXd& energies() const { return energies_; }
  const Operator& vectors() const { return vectors_; }

 private:
  Operator vectors_;
  Eigen::VectorXd energies_;
};

/// U = exp(-i H t), t in us, H in rad/us.
inline Operator propagator(const Operator& h, double t) { return HermitianEvolution(h).at(t); }

struct SublevelBlock {
  Matrix4c block;
  double leakage = 0.0;
  Matrix4c unitary;  // polar-decomposition unitary closest to `block`
};

inline constexpr double default_leak_tol = 1e-3;

/// Nuclear 4x4 block of a 12x12 excited-manifold propagator. Throws
/// LeakageError (carrying the block) when 1 - tr(B^dagger B)/4 >= leak_tol.
inline SublevelBlock sublevel_block(const Operator& u, Sublevel s,
                                    double leak_tol = default_leak_tol) {
  if (u.rows() != 12 || u.cols() != 12)
    throw std::invalid_argument("sublevel_block: expected a 12x12 propagator");
  const int base = index_of(s) * 4;
  SublevelBlock out;
  out.block = u.block(base, base, 4, 4);
  out.leakage = 1.0 - 0.25 * (out.block.adjoint() * out.block).trace().real();
  if (out.leakage >= leak_tol) {
    std::ostringstream os;
    os << "sublevel_block(" << name_of(s) << "): leakage " << out.leakage << " >= " << leak_tol;
    throw LeakageError(os.str(), out.leakage, out.block);
  }
  out.unitary = linalg::polar_unitary(out.block);
  return out;
}

/// Time at which a flip-flop gate of coupling `a_mhz` reaches entangling
/// power 2/9 (the iSWAP point, phase pi/2): pi / (2 * 2pi * a).
inline double iswap_time(double a_mhz) {
  return a_mhz == 0.0 ? std::numeric_limits<double>::infinity()
                      : std::numbers::pi / (2.0 * to_angular(std::abs(a_mhz)));
}

/// Wait that turns |down-up> into a maximally entangled state (phase pi/4):
/// pi / (4 * 2pi * a). This is the protocol gate time.
inline double entangling_wait(double a_mhz) { return 0.5 * iswap_time(a_mhz); }

struct PowerMaximum {
  double m = 0.0;       // maximal entangling power
  double t_star = 0.0;  // argmax, us
};

/// Maximizes the entangling power of the sublevel block of exp(-i H t) over
/// t in (0, t_max]: grid search followed by golden-section refinement.
inline PowerMaximum max_entangling_power(const SpinParams& p, Sublevel s, double t_max,
                                         int grid_points = 400, double leak_tol = default_leak_tol) {
  if (!(t_max > 0.0)) throw std::invalid_argument("max_entangling_power: t_max must be > 0");
  grid_points = std::max(grid_points, 400);
  const HermitianEvolution evo(build_excited(p));

  const auto power_at = [&](double t) -> std::optional<double> {
    try {
      return entangling_power_exact(sublevel_block(evo.at(t), s, leak_tol).unitary);
    } catch (const LeakageError&) {
      return std::nullopt;
    }
  };

  const double dt = t_max / grid_points;
  int best = -1;
  double best_val = -1.0;
  for (int k = 1; k <= grid_points; ++k) {
    const auto v = power_at(k * dt);
    if (v && *v > best_val) {
      best_val = *v;
      best = k;
    }
  }
  if (best < 0) throw LeakageError("max_entangling_power: every block rejected", 1.0, Matrix4c::Zero());

  // Golden-section search on the bracket around the best grid point.
  double lo = std::max((best - 1) * dt, 0.0);
  double hi = std::min((best + 1) * dt, t_max);
  const double tol = 5e-5 * t_max;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  const auto f = [&](double t) { return power_at(t).value_or(-1.0); };
  double x1 = hi - g * (hi - lo);
  double x2 = lo + g * (hi - lo);
  double f1 = f(x1);
  double f2 = f(x2);
  while (hi - lo > tol) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + g * (hi - lo);
      f2 = f(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - g * (hi - lo);
      f1 = f(x1);
    }
  }
  PowerMaximum out{best_val, best * dt};
  for (auto [t, v] : {std::pair{x1, f1}, std::pair{x2, f2}})
    if (v > out.m) out = {v, t};
  return out;
}

}  // namespace tgate

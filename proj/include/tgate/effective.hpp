#pragma once

#include "tgate/core.hpp"
#include "tgate/hamiltonian.hpp"
#include "tgate/spincore.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace tgate {

/// Flip-flop coupling between |T_s, down-up> and |T_s, up-down>.
struct Coupling {
  Sublevel sublevel{};
  std::optional<double> a_analytic;  // MHz; symmetric molecule only
  double a_numeric = 0.0;            // MHz, magnitude
  double a_signed = 0.0;             // MHz, sign of the effective off-diagonal element
  double detuning = 0.0;             // MHz, E(down-up) - E(up-down), unperturbed
};

/// Closed-form second-order couplings for the symmetric molecule:
/// a_pm = 2A^2 / (-/+D + 2 omega_e + 4 omega_n), a_0 = a_+ - a_-.
inline double coupling_analytic(const SpinParams& p, Sublevel s) {
  if (!p.symmetric())
    throw std::domain_error("coupling_analytic: requires A == A' and omega_n == omega_n'");
  const auto a_pm = [&](double sign) {
    const double denom = -sign * p.D + 2.0 * p.omega_e + 4.0 * p.omega_n;
    if (denom == 0.0) throw std::domain_error("coupling_analytic: zero denominator");
    return 2.0 * p.A * p.A / denom;
  };
  switch (s) {
    case Sublevel::plus: return a_pm(+1.0);
    case Sublevel::minus: return a_pm(-1.0);
    case Sublevel::zero: return a_pm(+1.0) - a_pm(-1.0);
  }
  return 0.0;
}

struct FlipFlopPair {
  int down_up;
  int up_down;
};

constexpr FlipFlopPair flip_flop_pair(Sublevel s) {
  return {BasisLayout::excited_index(s, BasisLayout::down, BasisLayout::up),
          BasisLayout::excited_index(s, BasisLayout::up, BasisLayout::down)};
}

/// Second-order Lowdin (quasi-degenerate) effective Hamiltonian on the model
/// space `model`. H0 is the diagonal of `h`; everything else is the perturbation.
inline Operator lowdin_block(const Operator& h, const std::vector<int>& model) {
  const auto n = static_cast<int>(h.rows());
  const auto m = static_cast<int>(model.size());
  std::vector<bool> in_model(n, false);
  for (int i : model) in_model[i] = true;

  Operator heff(m, m);
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b) {
      const int i = model[a];
      const int j = model[b];
      cplx acc = h(i, j);
      for (int k = 0; k < n; ++k) {
        if (in_model[k]) continue;
        const cplx vik = h(i, k);
        const cplx vkj = h(k, j);
        if (vik == 0.0 || vkj == 0.0) continue;
        const double di = h(i, i).real() - h(k, k).real();
        const double dj = h(j, j).real() - h(k, k).real();
        if (di == 0.0 || dj == 0.0) {
          std::ostringstream os;
          os << "lowdin_block: model level " << i << " is degenerate with coupled level " << k;
          throw DegeneracyError(os.str());
        }
        acc += 0.5 * vik * vkj * (1.0 / di + 1.0 / dj);
      }
      heff(a, b) = acc;
    }
  return heff;
}

inline Coupling coupling_numeric(const SpinParams& p, Sublevel s, double min_overlap = 0.7) {
  const Operator h = build_excited(p);
  const auto pair = flip_flop_pair(s);

  Eigen::SelfAdjointEigenSolver<Operator> es(h);
  const auto& vecs = es.eigenvectors();
  const auto& vals = es.eigenvalues();

  std::vector<int> order(12);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> overlap(12);
  for (int k = 0; k < 12; ++k)
    overlap[k] = std::norm(vecs(pair.down_up, k)) + std::norm(vecs(pair.up_down, k));
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return overlap[a] > overlap[b]; });
  const int k1 = order[0];
  const int k2 = order[1];
  if (overlap[k1] < min_overlap || overlap[k2] < min_overlap) {
    std::ostringstream os;
    os << "coupling_numeric(" << name_of(s) << "): ambiguous flip-flop eigenvectors " << k1
       << " (overlap " << overlap[k1] << ") and " << k2 << " (overlap " << overlap[k2] << ")";
    throw DegeneracyError(os.str());
  }

  const Operator heff = lowdin_block(h, {pair.down_up, pair.up_down});
  const double offdiag = heff(0, 1).real();

  Coupling c;
  c.sublevel = s;
  c.detuning = to_mhz(h(pair.down_up, pair.down_up).real() - h(pair.up_down, pair.up_down).real());
  if (p.symmetric()) {
    c.a_analytic = coupling_analytic(p, s);
    c.a_numeric = to_mhz(0.5 * std::abs(vals(k1) - vals(k2)));
  } else {
    c.a_numeric = to_mhz(std::abs(offdiag));
  }
  c.a_signed = offdiag < 0.0 ? -c.a_numeric : c.a_numeric;
  return c;
}

/// Exact effective 4x4 nuclear Hamiltonian of one triplet sublevel: the four
/// eigenstates dominated by T_s, projected onto T_s and orthonormalized.
/// Includes the flip-flop coupling to all orders.
inline Matrix4c effective_block(const Operator& h_excited, Sublevel s) {
  Eigen::SelfAdjointEigenSolver<Operator> es(h_excited);
  const auto& vecs = es.eigenvectors();
  const int base = index_of(s) * 4;

  std::vector<int> order(12);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> weight(12);
  for (int k = 0; k < 12; ++k) weight[k] = vecs.block(base, k, 4, 1).squaredNorm();
  std::sort(order.begin(), order.end(), [&](int a, int b) { return weight[a] > weight[b]; });
  if (weight[order[3]] < 0.5 || weight[order[4]] > 0.5) {
    std::ostringstream os;
    os << "effective_block(" << name_of(s) << "): sublevel is not separable from the rest";
    throw DegeneracyError(os.str());
  }

  Matrix4c proj;
  Eigen::Vector4d energies;
  for (int c = 0; c < 4; ++c) {
    proj.col(c) = vecs.block(base, order[c], 4, 1);
    energies(c) = es.eigenvalues()(order[c]);
  }
  const Matrix4c w = linalg::polar_unitary(proj);
  return w * energies.cast<cplx>().asDiagonal() * w.adjoint();
}

inline Matrix4c effective_block(const SpinParams& p, Sublevel s) {
  return effective_block(build_excited(p), s);
}

/// Perturbative eigen-decomposition of the excited manifold.
struct EffectiveSpectrum {
  Eigen::VectorXd energies;      // rad/us, second order, ascending
  Operator vectors;              // columns, first order, orthonormalized
  std::vector<Sublevel> labels;  // dominant sublevel of each column
  double max_abs_error = 0.0;    // vs exact eigenvalues, rad/us
  double error_constant = 0.0;   // max_abs_error / ((2 pi A)^3 / (2 pi omega_e)^2)

  Operator reconstruct() const {
    return vectors * energies.cast<cplx>().asDiagonal() * vectors.adjoint();
  }
};

namespace detail {

inline double total_m(int excited_index) {
  const auto [e, n, np] = BasisLayout::decompose(excited_index + 4);
  const double me = 2.0 - e;  // T+ -> 1, T0 -> 0, T- -> -1
  return me + (n == BasisLayout::up ? 0.5 : -0.5) + (np == BasisLayout::up ? 0.5 : -0.5);
}

}  // namespace detail

inline EffectiveSpectrum perturbative_spectrum(const SpinParams& p) {
  const Operator h = build_excited(p);
  const Eigen::VectorXd e0 = h.diagonal().real();

  // Model spaces: each flip-flop pair is treated quasi-degenerately; the
  // remaining levels are non-degenerate singletons.
  std::vector<std::vector<int>> spaces;
  std::vector<int> space_of(12, -1);
  for (Sublevel s : all_sublevels) {
    const auto pair = flip_flop_pair(s);
    space_of[pair.down_up] = space_of[pair.up_down] = static_cast<int>(spaces.size());
    spaces.push_back({pair.down_up, pair.up_down});
  }
  for (int i = 0; i < 12; ++i)
    if (space_of[i] < 0) {
      space_of[i] = static_cast<int>(spaces.size());
      spaces.push_back({i});
    }

  const double scale = std::max(1.0, e0.cwiseAbs().maxCoeff());
  std::ostringstream collisions;
  bool collided = false;
  for (int i = 0; i < 12; ++i)
    for (int j = i + 1; j < 12; ++j) {
      if (space_of[i] == space_of[j]) continue;
      if (detail::total_m(i) != detail::total_m(j)) continue;
      if (std::abs(e0(i) - e0(j)) < 1e-12 * scale) {
        collisions << " (" << i << "," << j << ")";
        collided = true;
      }
    }
  if (collided)
    throw DegeneracyError("perturbative_spectrum: accidental degeneracy between levels" +
                          collisions.str());

  std::vector<double> energies;
  std::vector<Eigen::VectorXcd> vectors;
  for (const auto& space : spaces) {
    const Operator heff = lowdin_block(h, space);
    Eigen::SelfAdjointEigenSolver<Operator> es(heff);
    for (int c = 0; c < static_cast<int>(space.size()); ++c) {
      Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(12);
      for (int a = 0; a < static_cast<int>(space.size()); ++a) psi(space[a]) = es.eigenvectors()(a, c);
      for (int k = 0; k < 12; ++k) {
        if (space_of[k] == space_of[space[0]]) continue;
        cplx amp = 0.0;
        for (int a = 0; a < static_cast<int>(space.size()); ++a) {
          const int i = space[a];
          if (h(k, i) == 0.0) continue;
          amp += h(k, i) * es.eigenvectors()(a, c) / (e0(i) - e0(k));
        }
        psi(k) += amp;
      }
      energies.push_back(es.eigenvalues()(c));
      vectors.push_back(psi);
    }
  }

  std::vector<int> order(12);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return energies[a] < energies[b]; });

  EffectiveSpectrum out;
  out.energies.resize(12);
  Operator raw(12, 12);
  for (int c = 0; c < 12; ++c) {
    out.energies(c) = energies[order[c]];
    raw.col(c) = vectors[order[c]];
  }
  // Symmetric (Lowdin) orthonormalization: V (V^dagger V)^{-1/2}.
  const Operator gram = raw.adjoint() * raw;
  Eigen::SelfAdjointEigenSolver<Operator> gs(gram);
  const Operator inv_sqrt = gs.eigenvectors() *
                            gs.eigenvalues().cwiseSqrt().cwiseInverse().cast<cplx>().asDiagonal() *
                            gs.eigenvectors().adjoint();
  out.vectors = raw * inv_sqrt;

  for (int c = 0; c < 12; ++c) {
    int best = 0;
    double best_w = -1.0;
    for (Sublevel s : all_sublevels) {
      const double w = out.vectors.block(index_of(s) * 4, c, 4, 1).squaredNorm();
      if (w > best_w) {
        best_w = w;
        best = index_of(s);
      }
    }
    out.labels.push_back(static_cast<Sublevel>(best));
  }

  const Eigen::VectorXd exact = Eigen::SelfAdjointEigenSolver<Operator>(h).eigenvalues();
  out.max_abs_error = (exact - out.energies).cwiseAbs().maxCoeff();
  const double a = to_angular(std::max(std::abs(p.A), std::abs(p.A_prime)));
  const double bound = a * a * a / std::pow(to_angular(p.omega_e), 2);
  out.error_constant = bound > 0.0 ? out.max_abs_error / bound : 0.0;
  return out;
}

struct DegeneracyResidual {
  double plus;   // |(A'-A) - 2(omega_n' - omega_n)|, MHz
  double minus;  // |(A'-A) + 2(omega_n' - omega_n)|, MHz
};

/// Distance from the degeneracy-recovery condition A'-A = +/-2(omega_n'-omega_n).
inline DegeneracyResidual degeneracy_residual(const SpinParams& p) {
  const double da = p.A_prime - p.A;
  const double dw = p.omega_nprime - p.omega_n;
  return {std::abs(da - 2.0 * dw), std::abs(da + 2.0 * dw)};
}

}  // namespace tgate

#pragma once

#include "tgate/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace tgate {

inline constexpr double entangling_power_bound = 2.0 / 9.0;

enum class PowerMethod { closed_form, exact_haar, monte_carlo };

struct EntanglementReport {
  double entangling_power = 0.0;
  PowerMethod method = PowerMethod::exact_haar;
  double standard_error = 0.0;  // Monte Carlo only
};

namespace detail {

inline void require_unitary(const Matrix4c& u, const char* who) {
  if ((u.adjoint() * u - Matrix4c::Identity()).norm() > 1e-8)
    throw std::invalid_argument(std::string(who) + ": input is not unitary");
}

// Two-copy index (a1, b1, a2, b2) -> ((a1 * 2 + b1) * 4 + a2 * 2 + b2).
constexpr int copy_index(int a1, int b1, int a2, int b2) { return (a1 * 2 + b1) * 4 + a2 * 2 + b2; }

// (I + SWAP) / 6 on each qubit's pair of copies, tensored.
inline const Eigen::Matrix<cplx, 16, 16>& haar_product_moment() {
  static const Eigen::Matrix<cplx, 16, 16> omega = [] {
    Eigen::Matrix<cplx, 16, 16> m = Eigen::Matrix<cplx, 16, 16>::Zero();
    const auto w = [](int x1, int x2, int y1, int y2) {
      return ((x1 == y1 && x2 == y2) ? 1.0 : 0.0) + ((x1 == y2 && x2 == y1) ? 1.0 : 0.0);
    };
    for (int a1 = 0; a1 < 2; ++a1)
      for (int b1 = 0; b1 < 2; ++b1)
        for (int a2 = 0; a2 < 2; ++a2)
          for (int b2 = 0; b2 < 2; ++b2)
            for (int c1 = 0; c1 < 2; ++c1)
              for (int d1 = 0; d1 < 2; ++d1)
                for (int c2 = 0; c2 < 2; ++c2)
                  for (int d2 = 0; d2 < 2; ++d2)
                    m(copy_index(a1, b1, a2, b2), copy_index(c1, d1, c2, d2)) =
                        w(a1, a2, c1, c2) * w(b1, b2, d1, d2) / 36.0;
    return m;
  }();
  return omega;
}

}  // namespace detail

/// Entangling power via the exact Haar average over product inputs:
/// 1 - Tr[(U x U) Omega (U x U)^dagger S_A], where S_A swaps the copies of
/// the first qubit.
inline double entangling_power_exact(const Matrix4c& u) {
  detail::require_unitary(u, "entangling_power_exact");
  Eigen::Matrix<cplx, 16, 16> uu;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) uu.block<4, 4>(i * 4, j * 4) = u(i, j) * u;
  const Eigen::Matrix<cplx, 16, 16> rho2 = uu * detail::haar_product_moment() * uu.adjoint();

  // Tr[rho2 S_A] = sum over rows r of rho2(S_A r, r).
  cplx tr = 0.0;
  for (int a1 = 0; a1 < 2; ++a1)
    for (int b1 = 0; b1 < 2; ++b1)
      for (int a2 = 0; a2 < 2; ++a2)
        for (int b2 = 0; b2 < 2; ++b2)
          tr += rho2(detail::copy_index(a1, b1, a2, b2), detail::copy_index(a2, b1, a1, b2));
  return std::max(0.0, 1.0 - tr.real());
}

/// Linear entropy 1 - tr(rho_A^2) of a two-qubit pure state.
inline double linear_entropy(const Eigen::Vector4cd& psi) {
  Eigen::Matrix2cd m;
  m << psi(0), psi(1), psi(2), psi(3);
  const Eigen::Matrix2cd rho_a = m * m.adjoint();
  return 1.0 - (rho_a * rho_a).trace().real();
}

template <typename Rng>
Eigen::Vector2cd haar_qubit(Rng& rng) {
  std::normal_distribution<double> g;
  Eigen::Vector2cd v;
  for (int i = 0; i < 2; ++i) v(i) = cplx(g(rng), g(rng));
  return v.normalized();
}

/// Haar-random unitary (QR of a complex Ginibre matrix with phase fix).
template <typename Rng>
Operator haar_unitary(int dim, Rng& rng) {
  std::normal_distribution<double> g;
  Operator z(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) z(i, j) = cplx(g(rng), g(rng)) / std::sqrt(2.0);
  Eigen::HouseholderQR<Operator> qr(z);
  Operator q = qr.householderQ();
  const Operator r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < dim; ++j) {
    const cplx d = r(j, j);
    q.col(j) *= std::abs(d) > 0.0 ? d / std::abs(d) : cplx(1.0);
  }
  return q;
}

/// Monte Carlo estimate of the entangling power; deterministic for a seed.
inline EntanglementReport entangling_power_mc(const Matrix4c& u, std::int64_t samples,
                                              std::uint64_t seed) {
  if (samples < 100) throw std::invalid_argument("entangling_power_mc: need at least 100 samples");
  detail::require_unitary(u, "entangling_power_mc");
  std::mt19937_64 rng(seed);
  double mean = 0.0;
  double m2 = 0.0;
  for (std::int64_t k = 0; k < samples; ++k) {
    const Eigen::Vector2cd a = haar_qubit(rng);
    const Eigen::Vector2cd b = haar_qubit(rng);
    Eigen::Vector4cd psi;
    psi << a(0) * b(0), a(0) * b(1), a(1) * b(0), a(1) * b(1);
    const double x = linear_entropy(u * psi);
    const double delta = x - mean;
    mean += delta / static_cast<double>(k + 1);
    m2 += delta * (x - mean);
  }
  const double n = static_cast<double>(samples);
  return {mean, PowerMethod::monte_carlo, std::sqrt(m2 / (n - 1.0) / n)};
}

/// Closed form for a flip-flop gate with coupling a (MHz) after time t (us):
/// (1/9)(3 + cos 2x) sin^2 x with x = 2 pi a t.
inline double entangling_power_closed(double a_mhz, double t_us) {
  const double x = two_pi * a_mhz * t_us;
  const double s = std::sin(x);
  return (3.0 + std::cos(2.0 * x)) * s * s / 9.0;
}

namespace detail {

inline void require_density_matrix(const DensityMatrix& rho, const char* who) {
  const double tol = 1e-8;
  if ((rho - rho.adjoint()).norm() > tol || std::abs(rho.trace() - 1.0) > tol)
    throw std::invalid_argument(std::string(who) + ": not a Hermitian trace-one matrix");
  Eigen::SelfAdjointEigenSolver<DensityMatrix> es(rho);
  if (es.eigenvalues().minCoeff() < -tol)
    throw std::invalid_argument(std::string(who) + ": matrix is not positive semidefinite");
}

}  // namespace detail

/// Wootters concurrence.
inline double concurrence(const DensityMatrix& rho) {
  detail::require_density_matrix(rho, "concurrence");
  Matrix4c yy = Matrix4c::Zero();
  yy(0, 3) = -1.0;
  yy(1, 2) = 1.0;
  yy(2, 1) = 1.0;
  yy(3, 0) = -1.0;
  const Matrix4c tilde = yy * rho.conjugate() * yy;
  const Matrix4c sq = linalg::psd_sqrt(rho);
  const Matrix4c r = sq * tilde * sq;
  Eigen::SelfAdjointEigenSolver<Matrix4c> es(0.5 * (r + r.adjoint()));
  Eigen::Vector4d lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  std::sort(lam.data(), lam.data() + 4, std::greater<>());
  return std::clamp(lam(0) - lam(1) - lam(2) - lam(3), 0.0, 1.0);
}

inline double binary_entropy(double x) {
  const auto term = [](double v) { return v <= 0.0 ? 0.0 : -v * std::log2(v); };
  return term(x) + term(1.0 - x);
}

/// Entanglement of formation in ebits from a concurrence value.
inline double eof_from_concurrence(double c) {
  const double cc = std::clamp(c, 0.0, 1.0);
  return binary_entropy(0.5 * (1.0 + std::sqrt(1.0 - cc * cc)));
}

inline double entanglement_of_formation(const DensityMatrix& rho) {
  return eof_from_concurrence(concurrence(rho));
}

}  // namespace tgate

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace tgate {

using cplx = std::complex<double>;
using Operator = Eigen::MatrixXcd;
using Matrix4c = Eigen::Matrix4cd;
using DensityMatrix = Eigen::Matrix4cd;

inline constexpr double two_pi = 2.0 * std::numbers::pi;
inline constexpr cplx I{0.0, 1.0};

/// MHz (ordinary frequency) to rad/us.
constexpr double to_angular(double mhz) noexcept { return two_pi * mhz; }
/// rad/us to MHz.
constexpr double to_mhz(double angular) noexcept { return angular / two_pi; }

// Error hierarchy. The CLI maps ConfigError to exit code 2 and
// NumericalError (and subclasses) to exit code 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct NumericalError : Error {
  using Error::Error;
};

/// Raised when eigenvectors cannot be attributed to a unique subspace.
struct DegeneracyError : NumericalError {
  using NumericalError::NumericalError;
};

/// Raised when a sublevel block of a propagator is not close to unitary.
struct LeakageError : NumericalError {
  LeakageError(const std::string& what, double leakage, Matrix4c block)
      : NumericalError(what), leakage(leakage), block(std::move(block)) {}
  double leakage;
  Matrix4c block;
};

namespace linalg {

inline double hermiticity_defect(const Operator& h) { return (h - h.adjoint()).norm(); }

inline bool is_hermitian(const Operator& h, double tol = 1e-10) {
  return h.rows() == h.cols() && hermiticity_defect(h) <= tol * std::max(1.0, h.norm());
}

inline double unitarity_defect(const Operator& u) {
  return (u.adjoint() * u - Operator::Identity(u.rows(), u.cols())).norm();
}

inline Operator commutator(const Operator& a, const Operator& b) { return a * b - b * a; }

/// Closest unitary in Frobenius norm (unitary factor of the polar decomposition).
template <typename Derived>
auto polar_unitary(const Eigen::MatrixBase<Derived>& m) {
  using Plain = typename Derived::PlainObject;
  Eigen::JacobiSVD<Plain> svd(m.eval(), Eigen::ComputeFullU | Eigen::ComputeFullV);
  return Plain(svd.matrixU() * svd.matrixV().adjoint());
}

/// Principal square root of a positive semidefinite Hermitian matrix.
/// Small negative eigenvalues from rounding are clamped to zero.
template <typename Derived>
auto psd_sqrt(const Eigen::MatrixBase<Derived>& m) {
  using Plain = typename Derived::PlainObject;
  Eigen::SelfAdjointEigenSolver<Plain> es(m.eval());
  auto vals = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().eval();
  return Plain(es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().adjoint());
}

/// Kronecker product of two dense complex matrices.
inline Operator kron(const Operator& a, const Operator& b) {
  Operator out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

}  // namespace linalg
}  // namespace tgate

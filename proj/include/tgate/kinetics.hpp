#pragma once

#include "tgate/core.hpp"
#include "tgate/spincore.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace tgate {

/// Zero-field triplet populations and lifetimes plus the field geometry.
struct TripletKinetics {
  double p_x = 0.46, p_y = 0.54, p_z = 0.0;
  double tau_x = 0.50, tau_y = 0.58, tau_z = 0.020;  // ms
  double D = -296.0, E = -6.0;                        // MHz
  double field = 9600.0;                               // electron Zeeman, MHz
  double theta = 0.0, phi = 0.0;                       // rad, molecular frame

  void validate() const {
    for (double p : {p_x, p_y, p_z})
      if (!(p >= 0.0)) throw ConfigError("TripletKinetics: populations must be >= 0");
    if (std::abs(p_x + p_y + p_z - 1.0) > 1e-9)
      throw ConfigError("TripletKinetics: populations must sum to 1");
    for (double t : {tau_x, tau_y, tau_z})
      if (!(t > 0.0) || !std::isfinite(t)) throw ConfigError("TripletKinetics: lifetimes must be > 0");
    for (double v : {D, E, field, theta, phi})
      if (!std::isfinite(v)) throw ConfigError("TripletKinetics: non-finite parameter");
    if (field < 0.0) throw ConfigError("TripletKinetics: field must be >= 0");
  }

  std::array<double, 3> populations() const { return {p_x, p_y, p_z}; }
  std::array<double, 3> rates_per_us() const {
    return {1.0 / (tau_x * 1000.0), 1.0 / (tau_y * 1000.0), 1.0 / (tau_z * 1000.0)};
  }
};

struct SublevelMixing {
  std::array<double, 3> populations{};  // plus, zero, minus
  std::array<double, 3> rates{};        // 1/us
  Eigen::Matrix3d weights;              // |c_ij|^2, row i in-field, column j in {x, y, z}
  Eigen::Matrix3cd vectors;             // in-field eigenvectors in the zero-field basis (columns)
};

namespace detail {

// Zero-field eigenstates in the |+1>, |0>, |-1> basis.
inline Eigen::Matrix3cd zero_field_basis() {
  const double r = 1.0 / std::sqrt(2.0);
  Eigen::Matrix3cd t;
  // columns: T_x, T_y, T_z
  t.col(0) << -r, 0.0, r;
  t.col(1) << cplx(0.0, r), 0.0, cplx(0.0, r);
  t.col(2) << 0.0, 1.0, 0.0;
  return t;
}

}  // namespace detail

/// Triplet Hamiltonian in the |+1>, |0>, |-1> basis (rad/us).
inline Eigen::Matrix3cd triplet_hamiltonian(const TripletKinetics& k) {
  const SpinOps s = spin_one_ops();
  const Eigen::Matrix3cd sx = s.x, sy = s.y, sz = s.z;
  const Eigen::Vector3d n(std::sin(k.theta) * std::cos(k.phi), std::sin(k.theta) * std::sin(k.phi),
                          std::cos(k.theta));
  const Eigen::Matrix3cd ns = n(0) * sx + n(1) * sy + n(2) * sz;
  const Eigen::Matrix3cd id = Eigen::Matrix3cd::Identity();
  return two_pi * (k.field * ns + k.D * (sz * sz - (2.0 / 3.0) * id) + k.E * (sx * sx - sy * sy));
}

/// In-field populations and rates from zero-field ones.
inline SublevelMixing sublevel_mixing(const TripletKinetics& k) {
  k.validate();
  const Eigen::Matrix3cd basis = detail::zero_field_basis();
  SublevelMixing out;

  const auto p = k.populations();
  const auto r = k.rates_per_us();

  if (k.field == 0.0) {
    // No field: the zero-field states are the eigenstates. x -> plus, z -> zero, y -> minus.
    const std::array<int, 3> label{0, 2, 1};
    out.weights = Eigen::Matrix3d::Zero();
    for (int i = 0; i < 3; ++i) {
      out.populations[i] = p[label[i]];
      out.rates[i] = r[label[i]];
      out.weights(i, label[i]) = 1.0;
    }
    out.vectors = out.weights.cast<cplx>().transpose();
    return out;
  }

  {
    const Eigen::Matrix3cd h = basis.adjoint() * triplet_hamiltonian(k) * basis;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3cd> es(0.5 * (h + h.adjoint()));
    const Eigen::Vector3d ev = es.eigenvalues();
    const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
    if (ev(1) - ev(0) < 1e-9 * scale || ev(2) - ev(1) < 1e-9 * scale)
      throw DegeneracyError("sublevel_mixing: degenerate in-field eigenvalues");

    const SpinOps s = spin_one_ops();
    const Eigen::Vector3d n(std::sin(k.theta) * std::cos(k.phi), std::sin(k.theta) * std::sin(k.phi),
                            std::cos(k.theta));
    const Eigen::Matrix3cd ns =
        basis.adjoint() * (n(0) * Eigen::Matrix3cd(s.x) + n(1) * Eigen::Matrix3cd(s.y) + n(2) * Eigen::Matrix3cd(s.z)) * basis;

    std::array<int, 3> order{0, 1, 2};
    std::array<double, 3> proj{};
    for (int i = 0; i < 3; ++i)
      proj[i] = (es.eigenvectors().col(i).adjoint() * ns * es.eigenvectors().col(i))(0).real();
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (std::abs(proj[a] - proj[b]) > 1e-12) return proj[a] > proj[b];
      return ev(a) > ev(b);
    });
    for (int i = 0; i < 3; ++i) out.vectors.col(i) = es.eigenvectors().col(order[i]);
    out.weights = out.vectors.cwiseAbs2();
    out.weights.transposeInPlace();
  }

  for (int i = 0; i < 3; ++i) {
    out.populations[i] = out.rates[i] = 0.0;
    for (int j = 0; j < 3; ++j) {
      out.populations[i] += out.weights(i, j) * p[j];
      out.rates[i] += out.weights(i, j) * r[j];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Echo-detected traces

enum class TraceKind { flash_delay, inversion_recovery };
enum class Transition { plus_zero, zero_minus };

struct TraceData {
  TraceKind kind = TraceKind::flash_delay;
  Transition transition = Transition::plus_zero;
  double inversion_delay = 0.0;  // us, inversion recovery only
  double field = 9600.0;         // MHz
  double theta = 0.0, phi = 0.0; // rad
  std::vector<double> times;     // us
  std::vector<double> amplitudes;
  double noise_sigma = 0.0;

  void validate() const {
    if (times.empty()) throw ConfigError("TraceData: no time points");
    for (std::size_t i = 1; i < times.size(); ++i)
      if (!(times[i] > times[i - 1])) throw ConfigError("TraceData: times must be strictly increasing");
    if (kind == TraceKind::inversion_recovery && !(inversion_delay >= 0.0))
      throw ConfigError("TraceData: inversion delay must be >= 0");
  }
};

inline std::pair<int, int> transition_levels(Transition t) {
  switch (t) {
    case Transition::plus_zero: return {0, 1};
    case Transition::zero_minus: return {1, 2};
  }
  throw ConfigError("unknown transition");
}

/// Unnormalized echo amplitude n_a - n_b at each time point.
inline std::vector<double> raw_trace(const SublevelMixing& m, const TraceData& spec) {
  const auto [a, b] = transition_levels(spec.transition);
  std::vector<double> out;
  out.reserve(spec.times.size());
  for (double t : spec.times) {
    std::array<double, 3> n{};
    if (spec.kind == TraceKind::flash_delay) {
      for (int i = 0; i < 3; ++i) n[i] = m.populations[i] * std::exp(-m.rates[i] * t);
    } else {
      for (int i = 0; i < 3; ++i) n[i] = m.populations[i] * std::exp(-m.rates[i] * spec.inversion_delay);
      std::swap(n[a], n[b]);
      for (int i = 0; i < 3; ++i) n[i] *= std::exp(-m.rates[i] * t);
    }
    out.push_back(n[a] - n[b]);
  }
  return out;
}

inline TripletKinetics with_geometry(TripletKinetics k, const TraceData& spec) {
  k.field = spec.field;
  k.theta = spec.theta;
  k.phi = spec.phi;
  return k;
}

/// Amplitudes normalized to the earliest point; an identically zero trace stays zero.
inline TraceData simulate_trace(const TripletKinetics& k, TraceData spec) {
  spec.validate();
  const auto raw = raw_trace(sublevel_mixing(with_geometry(k, spec)), spec);
  double peak = 0.0;
  for (double v : raw) peak = std::max(peak, std::abs(v));
  const double norm = raw.front();
  spec.amplitudes.assign(raw.size(), 0.0);
  if (peak < 1e-12) return spec;  // no population difference on this transition
  if (std::abs(norm) < 1e-12 * peak)
    throw NumericalError("simulate_trace: first point is zero, cannot normalize");
  for (std::size_t i = 0; i < raw.size(); ++i) spec.amplitudes[i] = raw[i] / norm;
  return spec;
}

/// First time at which the trace changes sign, located by bisection on the
/// raw amplitude between grid points. NaN if no sign change.
inline double zero_crossing(const TripletKinetics& k, const TraceData& spec) {
  const auto m = sublevel_mixing(with_geometry(k, spec));
  const auto f = [&](double t) {
    TraceData one = spec;
    one.times = {t};
    return raw_trace(m, one).front();
  };
  for (std::size_t i = 1; i < spec.times.size(); ++i) {
    double lo = spec.times[i - 1], hi = spec.times[i];
    double flo = f(lo);
    if (flo == 0.0) return lo;
    if ((flo > 0.0) == (f(hi) > 0.0)) continue;
    for (int it = 0; it < 200 && hi - lo > 1e-12 * std::max(1.0, hi); ++it) {
      const double mid = 0.5 * (lo + hi);
      const double fm = f(mid);
      if ((fm > 0.0) == (flo > 0.0)) {
        lo = mid;
        flo = fm;
      } else {
        hi = mid;
      }
    }
    return 0.5 * (lo + hi);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

// ---------------------------------------------------------------------------
// Simultaneous fit

struct FitOptions {
  int max_iterations = 200;
  double tolerance = 1e-12;      // relative objective change
  double fd_step = 1e-6;
  double singular_rcond = 1e-6;  // near-singular flag threshold
};

struct FitResult {
  TripletKinetics params;
  double residual_norm = 0.0;
  std::array<double, 6> stderrs{};  // p_x, p_y, p_z, tau_x, tau_y, tau_z
  std::vector<double> scales;       // per-trace amplitude scale
  bool near_singular = false;
  double rcond = 0.0;
  int iterations = 0;
  std::vector<double> objective_log;  // accepted steps, nonincreasing
  std::vector<std::vector<double>> residuals;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, FitResult best) : Error(what), best_(std::move(best)) {}
  const FitResult& best() const { return best_; }

 private:
  FitResult best_;
};

namespace detail {

// Parameters: logits l_x, l_y (l_z = 0), log tau_x, log tau_y, log tau_z.
using FitVector = Eigen::Matrix<double, 5, 1>;

inline TripletKinetics unpack(const FitVector& v, TripletKinetics base) {
  const double mx = std::max({v(0), v(1), 0.0});
  const double ex = std::exp(v(0) - mx), ey = std::exp(v(1) - mx), ez = std::exp(-mx);
  const double s = ex + ey + ez;
  base.p_x = ex / s;
  base.p_y = ey / s;
  base.p_z = ez / s;
  base.tau_x = std::exp(v(2));
  base.tau_y = std::exp(v(3));
  base.tau_z = std::exp(v(4));
  return base;
}

inline FitVector pack(const TripletKinetics& k) {
  const double floor = 1e-12;
  const double pz = std::max(k.p_z, floor);
  FitVector v;
  v << std::log(std::max(k.p_x, floor) / pz), std::log(std::max(k.p_y, floor) / pz),
      std::log(k.tau_x), std::log(k.tau_y), std::log(k.tau_z);
  return v;
}

struct Evaluation {
  Eigen::VectorXd residual;
  std::vector<double> scales;
};

// Residuals with each trace's scale profiled out in closed form.
inline Evaluation evaluate(const FitVector& v, const TripletKinetics& base,
                           const std::vector<TraceData>& traces) {
  const TripletKinetics k = unpack(v, base);
  std::size_t total = 0;
  for (const auto& t : traces) total += t.times.size();
  Evaluation out;
  out.residual.resize(static_cast<Eigen::Index>(total));
  Eigen::Index row = 0;
  for (const auto& t : traces) {
    const auto model = raw_trace(sublevel_mixing(with_geometry(k, t)), t);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < model.size(); ++i) {
      num += model[i] * t.amplitudes[i];
      den += model[i] * model[i];
    }
    const double c = den > 0.0 ? num / den : 0.0;
    out.scales.push_back(c);
    for (std::size_t i = 0; i < model.size(); ++i) out.residual(row++) = c * model[i] - t.amplitudes[i];
  }
  return out;
}

}  // namespace detail

/// Levenberg-Marquardt fit of shared populations and lifetimes to several
/// traces, each with its own field geometry and scale factor.
inline FitResult fit_traces(const std::vector<TraceData>& traces, const TripletKinetics& initial,
                            const FitOptions& opt = {}) {
  if (traces.size() < 2) throw ConfigError("fit_traces: need at least two traces");
  initial.validate();
  for (const auto& t : traces) {
    t.validate();
    if (t.amplitudes.size() != t.times.size()) throw ConfigError("fit_traces: amplitudes/times size mismatch");
  }

  using detail::FitVector;
  FitVector v = detail::pack(initial);
  auto ev = detail::evaluate(v, initial, traces);
  double cost = ev.residual.squaredNorm();
  double lambda = 1e-3;
  Eigen::MatrixXd jac;

  FitResult res;
  res.objective_log.push_back(cost);

  const auto jacobian = [&](const FitVector& x, const Eigen::VectorXd& r0) {
    Eigen::MatrixXd j(r0.size(), 5);
    for (int c = 0; c < 5; ++c) {
      FitVector xp = x;
      const double h = opt.fd_step * std::max(1.0, std::abs(x(c)));
      xp(c) += h;
      j.col(c) = (detail::evaluate(xp, initial, traces).residual - r0) / h;
    }
    return j;
  };

  bool converged = false;
  int it = 0;
  jac = jacobian(v, ev.residual);
  for (; it < opt.max_iterations; ++it) {
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd g = jac.transpose() * ev.residual;
    if (g.cwiseAbs().maxCoeff() < 1e-14 || cost < 1e-30) {
      converged = true;
      break;
    }
    bool accepted = false;
    for (int tries = 0; tries < 30; ++tries) {
      Eigen::MatrixXd a = jtj;
      a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
      const FitVector step = a.ldlt().solve(-g);
      const FitVector trial = v + step;
      detail::Evaluation ev_trial;
      double c_trial = std::numeric_limits<double>::infinity();
      try {
        ev_trial = detail::evaluate(trial, initial, traces);
        c_trial = ev_trial.residual.squaredNorm();
      } catch (const ConfigError&) {
        // step left the representable parameter range; treat as rejected
      }
      if (std::isfinite(c_trial) && c_trial <= cost) {
        const double rel = (cost - c_trial) / std::max(cost, 1e-300);
        v = trial;
        ev = std::move(ev_trial);
        cost = c_trial;
        res.objective_log.push_back(cost);
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
        if (rel < opt.tolerance || step.norm() < 1e-12) converged = true;
        break;
      }
      lambda *= 4.0;
    }
    if (!accepted) {
      converged = true;  // no descent direction left at machine precision
      break;
    }
    jac = jacobian(v, ev.residual);
    if (converged) break;
  }

  res.params = detail::unpack(v, initial);
  res.residual_norm = std::sqrt(cost);
  res.scales = ev.scales;
  res.iterations = it;
  {
    Eigen::Index row = 0;
    for (const auto& t : traces) {
      res.residuals.emplace_back(ev.residual.data() + row, ev.residual.data() + row + t.times.size());
      row += static_cast<Eigen::Index>(t.times.size());
    }
  }

  // Confidence from the Jacobian, propagated to physical parameters.
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac, Eigen::ComputeThinV);
  const Eigen::VectorXd sv = svd.singularValues();
  res.rcond = sv(0) > 0.0 ? sv(sv.size() - 1) / sv(0) : 0.0;
  res.near_singular = res.rcond < opt.singular_rcond;
  const Eigen::Index dof = std::max<Eigen::Index>(1, ev.residual.size() - 5 - static_cast<Eigen::Index>(traces.size()));
  const double sigma2 = cost / static_cast<double>(dof);
  Eigen::MatrixXd jtj_pinv = Eigen::MatrixXd::Zero(5, 5);
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > 1e-12 * sv(0))
      jtj_pinv += svd.matrixV().col(i) * svd.matrixV().col(i).transpose() / (sv(i) * sv(i));
  const Eigen::MatrixXd cov = sigma2 * jtj_pinv;

  // d(physical)/d(v): softmax for populations, exp for lifetimes.
  Eigen::Matrix<double, 6, 5> dp = Eigen::Matrix<double, 6, 5>::Zero();
  const std::array<double, 3> p{res.params.p_x, res.params.p_y, res.params.p_z};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) dp(i, j) = p[i] * ((i == j ? 1.0 : 0.0) - p[j]);
  dp(3, 2) = res.params.tau_x;
  dp(4, 3) = res.params.tau_y;
  dp(5, 4) = res.params.tau_z;
  const Eigen::Matrix<double, 6, 6> pcov = dp * cov * dp.transpose();
  for (int i = 0; i < 6; ++i) res.stderrs[i] = std::sqrt(std::max(0.0, pcov(i, i)));

  if (!converged) throw ConvergenceError("fit_traces: no convergence within max_iterations", res);
  return res;
}

}  // namespace tgate

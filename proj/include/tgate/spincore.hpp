#pragma once

#include "tgate/core.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <tuple>

namespace tgate {

/// Electron sublevels of the excited triplet, in basis order.
enum class Sublevel { plus = 0, zero = 1, minus = 2 };

inline constexpr std::array<Sublevel, 3> all_sublevels{Sublevel::plus, Sublevel::zero,
                                                       Sublevel::minus};

constexpr int index_of(Sublevel s) noexcept { return static_cast<int>(s); }

constexpr const char* name_of(Sublevel s) noexcept {
  switch (s) {
    case Sublevel::plus: return "plus";
    case Sublevel::zero: return "zero";
    case Sublevel::minus: return "minus";
  }
  return "?";
}

struct SpinOps {
  Operator x, y, z;

  Operator raising() const { return x + I * y; }
  Operator lowering() const { return x - I * y; }
};

/// Spin-1/2 matrices in the [up, down] ordering; Sz = diag(+1/2, -1/2).
inline SpinOps spin_half_ops() {
  SpinOps s{Operator::Zero(2, 2), Operator::Zero(2, 2), Operator::Zero(2, 2)};
  s.x << 0.0, 0.5, 0.5, 0.0;
  s.y << 0.0, -0.5 * I, 0.5 * I, 0.0;
  s.z << 0.5, 0.0, 0.0, -0.5;
  return s;
}

/// Spin-1 matrices in the [T+, T0, T-] ordering.
inline SpinOps spin_one_ops() {
  const double r = 1.0 / std::sqrt(2.0);
  SpinOps s{Operator::Zero(3, 3), Operator::Zero(3, 3), Operator::Zero(3, 3)};
  s.x << 0.0, r, 0.0, r, 0.0, r, 0.0, r, 0.0;
  s.y << 0.0, -I * r, 0.0, I * r, 0.0, -I * r, 0.0, I * r, 0.0;
  s.z << 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0;
  return s;
}

enum class Slot { electron, nucleus_n, nucleus_nprime };

/// Which Hilbert space an embedded operator lives on.
enum class Space { full, excited };

/// Composite basis: electron level in [ground, T+, T0, T-], each nucleus in
/// [up, down]; index = electron * 4 + n * 2 + n'.
struct BasisLayout {
  static constexpr int full_dim = 16;
  static constexpr int excited_dim = 12;
  static constexpr int ground_dim = 4;
  static constexpr int nuclear_dim = 4;

  static constexpr int ground = 0;
  static constexpr int up = 0;
  static constexpr int down = 1;

  static constexpr int compose(int electron, int n, int nprime) {
    return electron * 4 + n * 2 + nprime;
  }

  static constexpr std::tuple<int, int, int> decompose(int index) {
    return {index / 4, (index / 2) % 2, index % 2};
  }

  /// Electron level (1..3) of a triplet sublevel.
  static constexpr int electron_level(Sublevel s) { return index_of(s) + 1; }

  /// Position of |T_s, n, n'> inside the 12-dim excited manifold.
  static constexpr int excited_index(Sublevel s, int n, int nprime) {
    return index_of(s) * 4 + n * 2 + nprime;
  }

  static constexpr int dim(Space space) { return space == Space::full ? full_dim : excited_dim; }
};

/// Lifts a single-particle operator onto the composite space. Electron
/// operators are 3x3 (triplet manifold only) and act as zero on the ground
/// manifold of the full space; nuclear operators are 2x2 and act on both
/// manifolds.
inline Operator embed(const Operator& op, Slot slot, Space space = Space::excited) {
  const int expected = slot == Slot::electron ? 3 : 2;
  if (op.rows() != expected || op.cols() != expected)
    throw std::invalid_argument("embed: operator dimension does not match slot");

  const Operator id2 = Operator::Identity(2, 2);
  Operator electron_part;
  Operator nuclear_part;
  switch (slot) {
    case Slot::electron:
      electron_part = op;
      nuclear_part = Operator::Identity(4, 4);
      break;
    case Slot::nucleus_n:
      electron_part = Operator::Identity(3, 3);
      nuclear_part = linalg::kron(op, id2);
      break;
    case Slot::nucleus_nprime:
      electron_part = Operator::Identity(3, 3);
      nuclear_part = linalg::kron(id2, op);
      break;
  }

  const Operator excited = linalg::kron(electron_part, nuclear_part);
  if (space == Space::excited) return excited;

  Operator full = Operator::Zero(BasisLayout::full_dim, BasisLayout::full_dim);
  full.bottomRightCorner(12, 12) = excited;
  if (slot != Slot::electron) full.topLeftCorner(4, 4) = nuclear_part;
  return full;
}

/// Projector onto the excited manifold of the full space.
inline Operator excited_projector() {
  Operator p = Operator::Zero(16, 16);
  p.bottomRightCorner(12, 12).setIdentity();
  return p;
}

}  // namespace tgate

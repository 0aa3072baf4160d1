#pragma once

// Staggered one-dimensional grid and its summation-by-parts calculus.
//
// Heights live at the N cell centres x_i = (i + 1/2) dx, fluxes at the N + 1
// faces x_f = f dx. Face 0 and face N are the walls of Omega = (0, L). With
// this layout
//
//   sum_f grad(u)_f j_f dx = - sum_i u_i div(j)_i dx
//
// holds exactly for every flux-typed j (zero wall entries), and the
// discrete continuity equation telescopes, so mass is conserved exactly.

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Core>

#include "tfilm/errors.hpp"

namespace tfilm {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Cell-centred field of length N (film height, chemical potential, ...).
template <typename Scalar = double>
using CellField = Vector<Scalar>;

/// Face-centred field of length N + 1. A flux-typed face field has
/// values[0] == values[N] == 0.
template <typename Scalar = double>
using FaceField = Vector<Scalar>;

class Grid {
 public:
  Grid(double length, Index cells) : length_(length), cells_(cells) {
    if (!(length > 0.0) || !std::isfinite(length)) {
      throw ParameterError("grid length must be positive and finite");
    }
    if (cells < 4) {
      throw ParameterError("grid needs at least 4 cells");
    }
  }

  double length() const { return length_; }
  Index cells() const { return cells_; }
  Index faces() const { return cells_ + 1; }
  double dx() const { return length_ / static_cast<double>(cells_); }

  double cell_center(Index i) const {
    return (static_cast<double>(i) + 0.5) * dx();
  }
  double face_position(Index f) const { return static_cast<double>(f) * dx(); }

  Vector<double> cell_centers() const {
    Vector<double> x(cells_);
    for (Index i = 0; i < cells_; ++i) x[i] = cell_center(i);
    return x;
  }

  bool operator==(const Grid&) const = default;

 private:
  double length_;
  Index cells_;
};

namespace detail {

inline void require_length(Index actual, Index expected, const char* what) {
  if (actual != expected) {
    throw StructureError(std::string(what) + ": expected length " +
                         std::to_string(expected) + ", got " +
                         std::to_string(actual));
  }
}

}  // namespace detail

template <typename Derived>
void require_cell_field(const Grid& g, const Eigen::MatrixBase<Derived>& u) {
  detail::require_length(u.size(), g.cells(), "cell field");
}

template <typename Derived>
void require_face_field(const Grid& g, const Eigen::MatrixBase<Derived>& j) {
  detail::require_length(j.size(), g.faces(), "face field");
}

/// Discrete divergence (j_{i+1} - j_i) / dx.
template <typename Derived>
Vector<typename Derived::Scalar> divergence(const Grid& g,
                                            const Eigen::MatrixBase<Derived>& j) {
  using Scalar = typename Derived::Scalar;
  require_face_field(g, j);
  const Index n = g.cells();
  const Scalar inv_dx = Scalar(1) / Scalar(g.dx());
  Vector<Scalar> out(n);
  for (Index i = 0; i < n; ++i) out[i] = (j[i + 1] - j[i]) * inv_dx;
  return out;
}

/// Discrete gradient on faces with the homogeneous Neumann condition encoded
/// as zero wall entries.
template <typename Derived>
Vector<typename Derived::Scalar> gradient(const Grid& g,
                                          const Eigen::MatrixBase<Derived>& u) {
  using Scalar = typename Derived::Scalar;
  require_cell_field(g, u);
  const Index n = g.cells();
  const Scalar inv_dx = Scalar(1) / Scalar(g.dx());
  Vector<Scalar> out = Vector<Scalar>::Zero(n + 1);
  for (Index f = 1; f < n; ++f) out[f] = (u[f] - u[f - 1]) * inv_dx;
  return out;
}

template <typename Derived>
Vector<typename Derived::Scalar> laplacian_neumann(
    const Grid& g, const Eigen::MatrixBase<Derived>& u) {
  return divergence(g, gradient(g, u));
}

/// Eigenvalue of -laplacian_neumann for the mode cos(k pi x / L).
inline double neumann_eigenvalue(const Grid& g, int k) {
  const double s = 2.0 / g.dx() * std::sin(k * std::numbers::pi * g.dx() / (2.0 * g.length()));
  return s * s;
}

namespace detail {

// Neumaier-compensated sum; keeps mass diagnostics at round-off level even
// for long runs.
template <typename Derived>
typename Derived::Scalar compensated_sum(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  using std::abs;
  Scalar sum(0);
  Scalar carry(0);
  for (Index i = 0; i < v.size(); ++i) {
    const Scalar x = v[i];
    const Scalar t = sum + x;
    if (abs(sum) >= abs(x)) {
      carry += (sum - t) + x;
    } else {
      carry += (x - t) + sum;
    }
    sum = t;
  }
  return sum + carry;
}

}  // namespace detail

/// Midpoint quadrature sum_i f_i dx.
template <typename Derived>
typename Derived::Scalar integrate(const Grid& g,
                                   const Eigen::MatrixBase<Derived>& f) {
  using Scalar = typename Derived::Scalar;
  require_cell_field(g, f);
  return detail::compensated_sum(f) * Scalar(g.dx());
}

/// Quadrature over the interior faces, sum_{f=1}^{N-1} v_f dx.
template <typename Derived>
typename Derived::Scalar integrate_faces(const Grid& g,
                                         const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  require_face_field(g, v);
  return detail::compensated_sum(v.segment(1, g.cells() - 1)) * Scalar(g.dx());
}

}  // namespace tfilm

#pragma once

// Mobilities, potentials, the barrier-modified potential G_sigma, the power
// nonlinearity Psi and the discrete energy E^sigma.

#include <cmath>
#include <compare>
#include <limits>
#include <string>

#include "tfilm/grid.hpp"

namespace tfilm {

/// A real number or +infinity. Energies of non-positive heights are
/// infinite; they are carried as a flag so that no arithmetic ever
/// overflows.
template <typename Scalar>
class Extended {
 public:
  Extended() = default;
  explicit Extended(Scalar value) : value_(value) {}

  static Extended infinity() {
    Extended e;
    e.infinite_ = true;
    return e;
  }

  bool is_finite() const { return !infinite_; }
  bool is_infinite() const { return infinite_; }

  /// The finite value. Calling this on infinity is a logic error.
  const Scalar& value() const {
    if (infinite_) throw PreconditionError("value() of an infinite energy");
    return value_;
  }

  double to_double() const {
    return infinite_ ? std::numeric_limits<double>::infinity()
                     : static_cast<double>(value_);
  }

  friend Extended operator+(const Extended& a, const Extended& b) {
    if (a.infinite_ || b.infinite_) return infinity();
    return Extended(a.value_ + b.value_);
  }

  friend bool operator==(const Extended& a, const Extended& b) {
    if (a.infinite_ || b.infinite_) return a.infinite_ == b.infinite_;
    return a.value_ == b.value_;
  }

  friend bool operator<(const Extended& a, const Extended& b) {
    if (a.infinite_) return false;
    if (b.infinite_) return true;
    return a.value_ < b.value_;
  }
  friend bool operator>(const Extended& a, const Extended& b) { return b < a; }
  friend bool operator<=(const Extended& a, const Extended& b) {
    return !(b < a);
  }
  friend bool operator>=(const Extended& a, const Extended& b) {
    return !(a < b);
  }

 private:
  Scalar value_{0};
  bool infinite_ = false;
};

// ---------------------------------------------------------------------------
// Mobility

struct MobilitySpec {
  enum class Kind { power, navier_slip, constant_one };

  Kind kind = Kind::power;
  double exponent = 3.0;  // n for power
  double slip = 0.0;      // lambda for navier_slip
  double alpha = 1.0;     // rheology exponent entering navier_slip

  static MobilitySpec power(double n) {
    if (!(n > 0.0)) throw ParameterError("mobility exponent n must be > 0");
    return {Kind::power, n, 0.0, 1.0};
  }
  static MobilitySpec navier_slip(double lambda, double alpha) {
    if (!(lambda > 0.0)) throw ParameterError("slip length must be > 0");
    if (!(alpha > 0.0)) throw ParameterError("alpha must be > 0");
    return {Kind::navier_slip, 0.0, lambda, alpha};
  }
  /// m = 1 everywhere. Only meaningful as a test oracle.
  static MobilitySpec constant_one() { return {Kind::constant_one, 0.0, 0.0, 1.0}; }

  template <typename Scalar>
  Scalar operator()(const Scalar& s) const {
    using std::pow;
    switch (kind) {
      case Kind::constant_one:
        return Scalar(1);
      case Kind::power:
        return s > Scalar(0) ? Scalar(pow(s, Scalar(exponent))) : Scalar(0);
      case Kind::navier_slip:
        return s > Scalar(0) ? Scalar(Scalar(slip) * pow(s, Scalar(alpha + 1.0)) +
                                      pow(s, Scalar(alpha + 2.0)))
                             : Scalar(0);
    }
    return Scalar(0);
  }

  /// Large-height growth exponent (m(s) ~ s^k).
  double growth_exponent() const {
    switch (kind) {
      case Kind::constant_one: return 0.0;
      case Kind::power: return exponent;
      case Kind::navier_slip: return alpha + 2.0;
    }
    return 0.0;
  }
};

/// Arithmetic face average m((u_{f-1} + u_f) / 2) on interior faces; wall
/// faces copy the adjacent cell.
template <typename Derived>
Vector<typename Derived::Scalar> mobility_face(
    const MobilitySpec& m, const Eigen::MatrixBase<Derived>& u, const Grid& g) {
  using Scalar = typename Derived::Scalar;
  require_cell_field(g, u);
  const Index n = g.cells();
  Vector<Scalar> out(n + 1);
  for (Index f = 1; f < n; ++f) out[f] = m(Scalar((u[f - 1] + u[f]) / Scalar(2)));
  out[0] = m(Scalar(u[0]));
  out[n] = m(Scalar(u[n - 1]));
  return out;
}

// ---------------------------------------------------------------------------
// Potential

struct PotentialSpec {
  enum class Kind { zero, quadratic, strong_singular };

  Kind kind = Kind::zero;
  double coefficient = 0.0;

  static PotentialSpec zero() { return {Kind::zero, 0.0}; }
  /// G(s) = a s^2 / 2 for s > 0, 0 otherwise.
  static PotentialSpec quadratic(double a) {
    if (!(a >= 0.0)) throw ParameterError("quadratic coefficient must be >= 0");
    return {Kind::quadratic, a};
  }
  /// G(s) = A s^{-2} for s > 0.
  static PotentialSpec strong_singular(double A) {
    if (!(A >= 0.0)) throw ParameterError("singular coefficient must be >= 0");
    return {Kind::strong_singular, A};
  }

  // Values on (0, inf).
  template <typename Scalar>
  Scalar value(const Scalar& s) const {
    const Scalar c(coefficient);
    switch (kind) {
      case Kind::zero: return Scalar(0);
      case Kind::quadratic: return c * s * s / Scalar(2);
      case Kind::strong_singular: return c / (s * s);
    }
    return Scalar(0);
  }
  template <typename Scalar>
  Scalar d1(const Scalar& s) const {
    const Scalar c(coefficient);
    switch (kind) {
      case Kind::zero: return Scalar(0);
      case Kind::quadratic: return c * s;
      case Kind::strong_singular: return Scalar(-2) * c / (s * s * s);
    }
    return Scalar(0);
  }
  template <typename Scalar>
  Scalar d2(const Scalar& s) const {
    const Scalar c(coefficient);
    switch (kind) {
      case Kind::zero: return Scalar(0);
      case Kind::quadratic: return c;
      case Kind::strong_singular: return Scalar(6) * c / (s * s * s * s);
    }
    return Scalar(0);
  }
  /// value(s + ds) - value(s) without cancellation.
  template <typename Scalar>
  Scalar difference(const Scalar& s, const Scalar& ds) const {
    const Scalar c(coefficient);
    switch (kind) {
      case Kind::zero: return Scalar(0);
      case Kind::quadratic: return c * ds * (s + ds / Scalar(2));
      case Kind::strong_singular: {
        const Scalar t = s + ds;
        return -c * ds * (Scalar(2) * s + ds) / (s * s * t * t);
      }
    }
    return Scalar(0);
  }
};

/// G_sigma(s) = G(s) + phi_sigma(s) on (0, inf), +inf for s <= 0, where
///
///   phi_sigma(s) = sigma^2/s^2 + a s^2 + b s + c   on (0, 2 sigma),
///   phi_sigma(s) = 0                               on [2 sigma, inf),
///
/// a = -3/(16 sigma^2), b = 1/sigma, c = -3/2. The three coefficients make
/// phi, phi' and phi'' vanish at 2 sigma, so G_sigma is C^2, convex, equal
/// to G above 2 sigma and bounded below by sigma^2/s^2 - 3/2 below sigma.
template <typename Scalar = double>
class ModifiedPotential {
 public:
  ModifiedPotential(PotentialSpec base, double sigma)
      : base_(base), sigma_(sigma) {
    if (!(sigma > 0.0 && sigma < 1.0)) {
      throw ParameterError("sigma must be in (0,1)");
    }
    const Scalar s(sigma);
    a_ = Scalar(-3) / (Scalar(16) * s * s);
    b_ = Scalar(1) / s;
    c_ = Scalar(-3) / Scalar(2);
  }

  const PotentialSpec& base() const { return base_; }
  double sigma() const { return sigma_; }
  Scalar glue_a() const { return a_; }
  Scalar glue_b() const { return b_; }
  Scalar glue_c() const { return c_; }

  Extended<Scalar> operator()(const Scalar& s) const {
    if (!(s > Scalar(0))) return Extended<Scalar>::infinity();
    return Extended<Scalar>(base_.value(s) + barrier(s));
  }

  /// Finite value for s > 0.
  Scalar value(const Scalar& s) const { return base_.value(s) + barrier(s); }
  Scalar d1(const Scalar& s) const { return base_.d1(s) + barrier_d1(s); }
  Scalar d2(const Scalar& s) const { return base_.d2(s) + barrier_d2(s); }

  /// G_sigma(s + ds) - G_sigma(s) for s, s + ds > 0, evaluated without the
  /// cancellation a direct subtraction would suffer for small ds.
  Scalar difference(const Scalar& s, const Scalar& ds) const {
    return base_.difference(s, ds) + barrier_difference(s, ds);
  }

  Scalar barrier(const Scalar& s) const {
    if (s >= knot()) return Scalar(0);
    const Scalar sg(sigma_);
    return sg * sg / (s * s) + (a_ * s + b_) * s + c_;
  }
  Scalar barrier_d1(const Scalar& s) const {
    if (s >= knot()) return Scalar(0);
    const Scalar sg(sigma_);
    return Scalar(-2) * sg * sg / (s * s * s) + Scalar(2) * a_ * s + b_;
  }
  Scalar barrier_d2(const Scalar& s) const {
    if (s >= knot()) return Scalar(0);
    const Scalar sg(sigma_);
    return Scalar(6) * sg * sg / (s * s * s * s) + Scalar(2) * a_;
  }

 private:
  Scalar knot() const { return Scalar(2) * Scalar(sigma_); }

  Scalar barrier_difference(const Scalar& s, const Scalar& ds) const {
    const Scalar t = s + ds;
    const Scalar k = knot();
    if (s >= k && t >= k) return Scalar(0);
    if (s < k && t < k) {
      const Scalar sg(sigma_);
      const Scalar inv = -sg * sg * ds * (Scalar(2) * s + ds) / (s * s * t * t);
      return inv + a_ * ds * (Scalar(2) * s + ds) + b_ * ds;
    }
    return barrier(t) - barrier(s);
  }

  PotentialSpec base_;
  double sigma_;
  Scalar a_{}, b_{}, c_{};
};

// ---------------------------------------------------------------------------

struct ModelParams {
  double alpha = 1.0;
  MobilitySpec mobility = MobilitySpec::power(3.0);
  PotentialSpec potential = PotentialSpec::zero();
  double sigma = 0.01;

  void validate() const {
    if (!(alpha > 0.0)) throw ParameterError("alpha must be > 0");
    if (!(sigma > 0.0 && sigma < 1.0)) throw ParameterError("sigma must be in (0,1)");
  }

  template <typename Scalar = double>
  ModifiedPotential<Scalar> modified_potential() const {
    return ModifiedPotential<Scalar>(potential, sigma);
  }
};

/// Psi(s) = |s|^{alpha-1} s with Psi(0) = 0.
template <typename Scalar>
Scalar psi(double alpha, const Scalar& s) {
  using std::abs;
  using std::pow;
  if (s == Scalar(0)) return Scalar(0);
  if (alpha == 1.0) return s;
  return pow(abs(s), Scalar(alpha - 1.0)) * s;
}

/// Psi^{-1}(s) = |s|^{1/alpha - 1} s.
template <typename Scalar>
Scalar psi_inverse(double alpha, const Scalar& s) {
  return psi(1.0 / alpha, s);
}

template <typename Scalar>
struct EnergyBreakdown {
  Scalar dirichlet{0};
  Extended<Scalar> potential;
  Extended<Scalar> total;
};

/// E^sigma[u] = 1/2 sum_f |grad u|^2 dx + sum_i G_sigma(u_i) dx.
template <typename Derived>
EnergyBreakdown<typename Derived::Scalar> energy(
    const Grid& g, const Eigen::MatrixBase<Derived>& u,
    const ModifiedPotential<typename Derived::Scalar>& mp) {
  using Scalar = typename Derived::Scalar;
  require_cell_field(g, u);
  EnergyBreakdown<Scalar> e;
  const Vector<Scalar> du = gradient(g, u);
  e.dirichlet = integrate_faces(g, du.cwiseProduct(du)) / Scalar(2);
  Vector<Scalar> pot(g.cells());
  for (Index i = 0; i < g.cells(); ++i) {
    if (!(u[i] > Scalar(0))) {
      e.potential = Extended<Scalar>::infinity();
      e.total = Extended<Scalar>::infinity();
      return e;
    }
    pot[i] = mp.value(Scalar(u[i]));
  }
  e.potential = Extended<Scalar>(integrate(g, pot));
  e.total = Extended<Scalar>(e.dirichlet) + e.potential;
  return e;
}

/// Unmodified energy E[u] = 1/2 sum |grad u|^2 dx + sum G(u_i) dx with G
/// taken as 0 on non-positive heights.
template <typename Derived>
typename Derived::Scalar base_energy(const Grid& g,
                                     const Eigen::MatrixBase<Derived>& u,
                                     const PotentialSpec& G) {
  using Scalar = typename Derived::Scalar;
  const Vector<Scalar> du = gradient(g, u);
  Vector<Scalar> pot(g.cells());
  for (Index i = 0; i < g.cells(); ++i) {
    pot[i] = u[i] > Scalar(0) ? G.value(Scalar(u[i])) : Scalar(0);
  }
  return integrate_faces(g, du.cwiseProduct(du)) / Scalar(2) + integrate(g, pot);
}

}  // namespace tfilm

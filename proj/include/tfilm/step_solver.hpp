#pragma once

// One minimising-movement step.
//
// Given the previous height u*, the step minimises
//
//   F(u, j) = E^sigma[u] + h a/(a+1) sum_f |j_f|^p / m_f(u*)^{1/a} dx,
//   p = (a+1)/a,
//
// over pairs that satisfy the discrete continuity equation
// u = u* - h div(j) with j = 0 on the walls. The constraint is solved
// exactly, leaving an unconstrained strictly convex problem in the N - 1
// interior fluxes. It is minimised by damped Newton on a pentadiagonal
// Hessian with Armijo backtracking, a fraction-to-boundary cap that keeps
// every cell positive, and (for p < 2) continuation in a smoothing
// parameter eps of the p-power:
//
//   psi_eps(s) = (s^2 + eps^2)^{p/2} - eps^p.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "tfilm/banded.hpp"
#include "tfilm/grid.hpp"
#include "tfilm/models.hpp"

namespace tfilm {

struct StepParams {
  double h = 1e-4;
  double eps0 = 1e-2;
  double eps_min = 1e-10;
  double rho = 0.1;
  double tol_grad = 1e-9;
  int max_newton = 200;
  double armijo_c = 1e-4;
  double tau_boundary = 0.9;

  void validate() const {
    if (!(h > 0.0)) throw ParameterError("h must be > 0");
    if (!(eps_min > 0.0 && eps_min <= eps0)) {
      throw ParameterError("need 0 < eps_min <= eps0");
    }
    if (!(rho > 0.0 && rho < 1.0)) throw ParameterError("rho must be in (0,1)");
    if (!(tol_grad > 0.0)) throw ParameterError("tol_grad must be > 0");
    if (max_newton < 1) throw ParameterError("max_newton must be >= 1");
    if (!(armijo_c > 0.0 && armijo_c < 0.5)) {
      throw ParameterError("armijo_c must be in (0,1/2)");
    }
    if (!(tau_boundary > 0.0 && tau_boundary < 1.0)) {
      throw ParameterError("tau_boundary must be in (0,1)");
    }
  }

  /// Per-step slack allowed in the one-step energy-dissipation inequality.
  double audit_tolerance(double alpha, double domain_length) const {
    const double p = (alpha + 1.0) / alpha;
    return std::pow(eps_min, p) * domain_length + 10.0 * tol_grad;
  }
};

inline double dissipation_exponent(double alpha) { return (alpha + 1.0) / alpha; }

/// Newton ran out of iterations (or could not make progress).
class NonConvergenceError : public Error {
 public:
  NonConvergenceError(const std::string& what, int iterations, double grad_norm,
                      std::vector<double> last_flux)
      : Error(what),
        iterations_(iterations),
        grad_norm_(grad_norm),
        last_flux_(std::move(last_flux)) {}

  int iterations() const { return iterations_; }
  double grad_norm() const { return grad_norm_; }
  const std::vector<double>& last_flux() const { return last_flux_; }

 private:
  int iterations_;
  double grad_norm_;
  std::vector<double> last_flux_;
};

template <typename Scalar = double>
struct StepResult {
  CellField<Scalar> u_next;
  FaceField<Scalar> j;
  int newton_iters = 0;
  Scalar final_grad_norm{0};
  Scalar el_residual_norm{0};
  Scalar energy_before{0};
  Scalar energy_after{0};
  /// sum_f |j_f|^p / m_f(u*)^{1/a} dx (exact power, no smoothing).
  Scalar dissipation_flux_term{0};
  /// sum_f m_f(u*) |grad mu_f|^{a+1} dx with mu the chemical potential of
  /// u_next; the strong-form dissipation.
  Scalar dissipation_strong_term{0};
  /// - sum_f grad(mu)_f j_f dx, the power pairing of force and flux.
  Scalar force_flux_pairing{0};
  /// Objective at the final flux and at j = 0 (= E^sigma[u*]).
  Scalar objective_end{0};
  Scalar objective_at_rest{0};
  /// Objective change of every accepted Newton step (all <= 0).
  std::vector<Scalar> accepted_changes;
};

/// psi_eps and its first two derivatives.
template <typename Scalar>
struct SmoothedPower {
  double p = 2.0;
  Scalar eps{0};

  Scalar value(const Scalar& s) const {
    using std::abs;
    using std::pow;
    if (eps == Scalar(0)) return pow(abs(s), Scalar(p));
    return pow(s * s + eps * eps, Scalar(p / 2.0)) - pow(eps, Scalar(p));
  }
  Scalar d1(const Scalar& s) const {
    using std::abs;
    using std::pow;
    if (eps == Scalar(0)) {
      if (s == Scalar(0)) return Scalar(0);
      return Scalar(p) * pow(abs(s), Scalar(p - 2.0)) * s;
    }
    return Scalar(p) * s * pow(s * s + eps * eps, Scalar(p / 2.0 - 1.0));
  }
  Scalar d2(const Scalar& s) const {
    using std::abs;
    using std::pow;
    if (eps == Scalar(0)) {
      if (p == 2.0) return Scalar(2);
      if (s == Scalar(0)) return p > 2.0 ? Scalar(0) : Scalar(INFINITY);
      return Scalar(p * (p - 1.0)) * pow(abs(s), Scalar(p - 2.0));
    }
    const Scalar r = s * s + eps * eps;
    return Scalar(p) * pow(r, Scalar(p / 2.0 - 2.0)) *
           (Scalar(p - 1.0) * s * s + eps * eps);
  }
  /// value(s + ds) - value(s), cancellation-free.
  Scalar difference(const Scalar& s, const Scalar& ds) const {
    using std::expm1;
    using std::log1p;
    using std::pow;
    const Scalar before = s * s + eps * eps;
    const Scalar t = s + ds;
    const Scalar after = t * t + eps * eps;
    if (before == Scalar(0)) return pow(after, Scalar(p / 2.0));
    if (after == Scalar(0)) return -pow(before, Scalar(p / 2.0));
    const Scalar rel = ds * (Scalar(2) * s + ds) / before;
    return pow(before, Scalar(p / 2.0)) *
           expm1(Scalar(p / 2.0) * log1p(rel));
  }
};

/// The reduced objective j -> F(u* - h div j, j) and its derivatives. All
/// derivative quantities are divided by h dx so that the gradient reads
///
///   g_f = grad(mu)_f + a/(a+1) w_f psi_eps'(j_f),  mu = -lap(u) + G_sigma'(u),
///
/// with w_f = m_f(u*)^{-1/a}.
template <typename Scalar = double>
class StepObjective {
 public:
  StepObjective(const Grid& grid, const CellField<Scalar>& u_star,
                const ModelParams& model, double h)
      : grid_(grid),
        u_star_(u_star),
        model_(model),
        potential_(model.modified_potential<Scalar>()),
        h_(h) {
    using std::pow;
    require_cell_field(grid, u_star);
    for (Index i = 0; i < u_star.size(); ++i) {
      if (!(u_star[i] > Scalar(0))) {
        throw PreconditionError("u_star must be strictly positive");
      }
    }
    mobility_ = mobility_face(model.mobility, u_star, grid);
    weights_ = FaceField<Scalar>::Zero(grid.faces());
    for (Index f = 1; f < grid.cells(); ++f) {
      weights_[f] = pow(mobility_[f], Scalar(-1.0 / model.alpha));
    }
    power_.p = dissipation_exponent(model.alpha);
    kappa_ = Scalar(model.alpha / (model.alpha + 1.0));
  }

  const Grid& grid() const { return grid_; }
  const ModelParams& model() const { return model_; }
  const ModifiedPotential<Scalar>& potential() const { return potential_; }
  const FaceField<Scalar>& mobility() const { return mobility_; }
  const FaceField<Scalar>& weights() const { return weights_; }
  const CellField<Scalar>& u_star() const { return u_star_; }
  double h() const { return h_; }
  Scalar smoothing() const { return power_.eps; }
  void set_smoothing(const Scalar& eps) { power_.eps = eps; }

  CellField<Scalar> height(const FaceField<Scalar>& j) const {
    return u_star_ - Scalar(h_) * divergence(grid_, j);
  }

  /// sum_f w_f psi_eps(j_f) dx.
  Scalar dissipation(const FaceField<Scalar>& j) const {
    FaceField<Scalar> terms = FaceField<Scalar>::Zero(grid_.faces());
    for (Index f = 1; f < grid_.cells(); ++f) {
      terms[f] = weights_[f] * power_.value(j[f]);
    }
    return integrate_faces(grid_, terms);
  }

  Extended<Scalar> value(const FaceField<Scalar>& j) const {
    const auto e = energy(grid_, height(j), potential_);
    return e.total + Extended<Scalar>(Scalar(h_) * kappa_ * dissipation(j));
  }

  CellField<Scalar> chemical_potential(const CellField<Scalar>& u) const {
    CellField<Scalar> mu = -laplacian_neumann(grid_, u);
    for (Index i = 0; i < u.size(); ++i) mu[i] += potential_.d1(u[i]);
    return mu;
  }

  FaceField<Scalar> gradient_at(const FaceField<Scalar>& j) const {
    const CellField<Scalar> u = height(j);
    FaceField<Scalar> g = tfilm::gradient(grid_, chemical_potential(u));
    for (Index f = 1; f < grid_.cells(); ++f) {
      g[f] += kappa_ * weights_[f] * power_.d1(j[f]);
    }
    return g;
  }

  /// Pentadiagonal Hessian on interior faces (index f - 1 for face f).
  SymmetricBandMatrix<Scalar> hessian_at(const FaceField<Scalar>& j) const {
    const CellField<Scalar> u = height(j);
    const Index n = grid_.cells();
    const Scalar inv_dx(1.0 / grid_.dx());
    const Scalar inv_dx2 = inv_dx * inv_dx;

    // A = -lap + diag(G_sigma''(u)) on cells.
    auto a_entry = [&](Index i, Index k) -> Scalar {
      if (i < 0 || k < 0 || i >= n || k >= n) return Scalar(0);
      if (i == k) {
        const Scalar nbrs((i > 0 ? 1 : 0) + (i < n - 1 ? 1 : 0));
        return nbrs * inv_dx2 + potential_.d2(u[i]);
      }
      if (i - k == 1 || k - i == 1) return -inv_dx2;
      return Scalar(0);
    };
    // div matrix column f: +1/dx at row f-1, -1/dx at row f.
    auto b_entry = [&](Index i, Index f) -> Scalar {
      if (i == f - 1) return inv_dx;
      if (i == f) return -inv_dx;
      return Scalar(0);
    };

    SymmetricBandMatrix<Scalar> hess(n - 1, 2);
    const Scalar hs(h_);
    for (Index f = 1; f < n; ++f) {
      for (Index g = f; g <= std::min<Index>(f + 2, n - 1); ++g) {
        Scalar s(0);
        for (Index i = f - 1; i <= f; ++i) {
          for (Index k = g - 1; k <= g; ++k) {
            s += b_entry(i, f) * a_entry(i, k) * b_entry(k, g);
          }
        }
        hess.at(g - 1, f - 1) = hs * s;
      }
      hess.diagonal(f - 1) += kappa_ * weights_[f] * power_.d2(j[f]);
    }
    if (power_.p > 2.0) {
      using std::abs;
      for (Index f = 0; f < n - 1; ++f) {
        hess.diagonal(f) += Scalar(1e-12) * (Scalar(1) + abs(hess.diagonal(f)));
      }
    }
    return hess;
  }

  /// F(j + s) - F(j), computed term by term so that changes far below the
  /// round-off of F itself are still resolved. Infinite if a cell of
  /// u(j + s) is non-positive.
  Extended<Scalar> change(const FaceField<Scalar>& j,
                          const FaceField<Scalar>& s) const {
    const CellField<Scalar> u = height(j);
    const CellField<Scalar> du = -Scalar(h_) * divergence(grid_, s);
    for (Index i = 0; i < u.size(); ++i) {
      if (!(u[i] + du[i] > Scalar(0))) return Extended<Scalar>::infinity();
    }
    const FaceField<Scalar> gu = tfilm::gradient(grid_, u);
    const FaceField<Scalar> gdu = tfilm::gradient(grid_, du);
    FaceField<Scalar> face_terms = FaceField<Scalar>::Zero(grid_.faces());
    const Scalar diss_scale = Scalar(h_) * kappa_;
    for (Index f = 1; f < grid_.cells(); ++f) {
      face_terms[f] = gdu[f] * (gu[f] + gdu[f] / Scalar(2)) +
                      diss_scale * weights_[f] * power_.difference(j[f], s[f]);
    }
    CellField<Scalar> cell_terms(grid_.cells());
    for (Index i = 0; i < u.size(); ++i) {
      cell_terms[i] = potential_.difference(u[i], du[i]);
    }
    return Extended<Scalar>(integrate_faces(grid_, face_terms) +
                            integrate(grid_, cell_terms));
  }

  /// Largest t <= 1 such that u(j + t d) >= (1 - tau) u(j) cellwise.
  Scalar boundary_step(const FaceField<Scalar>& j, const FaceField<Scalar>& d,
                       double tau) const {
    const CellField<Scalar> u = height(j);
    const CellField<Scalar> du = -Scalar(h_) * divergence(grid_, d);
    Scalar t(1);
    for (Index i = 0; i < u.size(); ++i) {
      if (du[i] < Scalar(0)) {
        const Scalar cap = Scalar(tau) * u[i] / (-du[i]);
        if (cap < t) t = cap;
      }
    }
    return t;
  }

  Scalar norm(const FaceField<Scalar>& g) const {
    using std::sqrt;
    return sqrt(integrate_faces(grid_, g.cwiseProduct(g)));
  }

 private:
  Grid grid_;
  CellField<Scalar> u_star_;
  ModelParams model_;
  ModifiedPotential<Scalar> potential_;
  double h_;
  FaceField<Scalar> mobility_;
  FaceField<Scalar> weights_;
  SmoothedPower<Scalar> power_;
  Scalar kappa_{};
};

/// F(u* - h div j, j) at smoothing eps; infinite when u has a non-positive
/// cell.
template <typename Scalar>
Extended<Scalar> reduced_objective(const Grid& grid, const FaceField<Scalar>& j,
                                   const CellField<Scalar>& u_star,
                                   const ModelParams& model,
                                   const StepParams& sp, const Scalar& eps) {
  StepObjective<Scalar> obj(grid, u_star, model, sp.h);
  obj.set_smoothing(eps);
  require_face_field(grid, j);
  return obj.value(j);
}

/// Residual of the Euler-Lagrange relation j = m(u*) Psi(-grad mu(u_next))
/// on interior faces, measured in the dx-weighted l^{a+1} norm.
template <typename Scalar>
Scalar el_residual(const Grid& grid, const StepResult<Scalar>& res,
                   const CellField<Scalar>& u_star, const ModelParams& model) {
  using std::abs;
  using std::pow;
  StepObjective<Scalar> obj(grid, u_star, model, 1.0);
  const FaceField<Scalar> gmu =
      gradient(grid, obj.chemical_potential(res.u_next));
  const FaceField<Scalar>& m = obj.mobility();
  const double q = model.alpha + 1.0;
  FaceField<Scalar> terms = FaceField<Scalar>::Zero(grid.faces());
  for (Index f = 1; f < grid.cells(); ++f) {
    const Scalar r = res.j[f] - m[f] * psi(model.alpha, Scalar(-gmu[f]));
    terms[f] = pow(abs(r), Scalar(q));
  }
  return pow(integrate_faces(grid, terms), Scalar(1.0 / q));
}

namespace detail {

inline std::vector<double> smoothing_schedule(const StepParams& sp, double p) {
  if (p >= 2.0) return {0.0};
  std::vector<double> eps;
  for (double e = sp.eps0; e > sp.eps_min; e *= sp.rho) eps.push_back(e);
  eps.push_back(sp.eps_min);
  return eps;
}

template <typename Scalar>
std::vector<double> to_doubles(const Vector<Scalar>& v) {
  std::vector<double> out(static_cast<size_t>(v.size()));
  for (Index i = 0; i < v.size(); ++i) out[static_cast<size_t>(i)] = static_cast<double>(v[i]);
  return out;
}

}  // namespace detail

/// Solves one step from u*. `initial_flux` seeds the first Newton stage
/// (default: zero flux, which makes objective_end <= objective_at_rest hold
/// by construction).
template <typename Scalar>
StepResult<Scalar> solve_step(const Grid& grid, const CellField<Scalar>& u_star,
                              const ModelParams& model, const StepParams& sp,
                              const std::optional<FaceField<Scalar>>& initial_flux =
                                  std::nullopt) {
  using std::abs;
  using std::pow;
  model.validate();
  sp.validate();
  StepObjective<Scalar> obj(grid, u_star, model, sp.h);
  const Index n = grid.cells();
  const double p = dissipation_exponent(model.alpha);
  const Scalar zero(0);

  StepResult<Scalar> res;
  const FaceField<Scalar> rest = FaceField<Scalar>::Zero(grid.faces());
  const auto e0 = energy(grid, u_star, obj.potential());
  if (e0.total.is_infinite()) {
    throw PreconditionError("u_star has infinite energy");
  }
  res.energy_before = e0.total.value();

  FaceField<Scalar> j = rest;
  if (initial_flux) {
    require_face_field(grid, *initial_flux);
    j = *initial_flux;
    j[0] = zero;
    j[n] = zero;
  }

  const Scalar tol(sp.tol_grad);
  int iters = 0;
  Scalar gnorm(0);
  const auto schedule = detail::smoothing_schedule(sp, p);
  for (size_t stage = 0; stage < schedule.size(); ++stage) {
    obj.set_smoothing(Scalar(schedule[stage]));
    if (stage > 0 || !initial_flux) {
      if (obj.value(j) > obj.value(rest)) j = rest;
    } else if (obj.value(j).is_infinite()) {
      j = rest;
    }
    for (;;) {
      const FaceField<Scalar> g = obj.gradient_at(j);
      gnorm = obj.norm(g);
      if (gnorm <= tol) break;
      if (iters >= sp.max_newton) {
        throw NonConvergenceError("Newton iteration cap reached", iters,
                                  static_cast<double>(gnorm),
                                  detail::to_doubles(j));
      }
      ++iters;

      const auto hess = obj.hessian_at(j);
      Vector<Scalar> rhs(n - 1);
      for (Index f = 1; f < n; ++f) rhs[f - 1] = -g[f];
      const Vector<Scalar> step = BandLDLT<Scalar>(hess).solve(rhs);
      FaceField<Scalar> d = FaceField<Scalar>::Zero(grid.faces());
      d.segment(1, n - 1) = step;

      const Scalar slope = Scalar(sp.h) * integrate_faces(grid, g.cwiseProduct(d));
      if (!(slope < zero)) {
        throw NonConvergenceError("Newton direction is not a descent direction",
                                  iters, static_cast<double>(gnorm),
                                  detail::to_doubles(j));
      }

      Scalar t = obj.boundary_step(j, d, sp.tau_boundary);
      bool accepted = false;
      for (int bt = 0; bt < 80; ++bt) {
        const auto dF = obj.change(j, FaceField<Scalar>(t * d));
        if (dF.is_finite() && dF.value() <= Scalar(sp.armijo_c) * t * slope) {
          j += t * d;
          res.accepted_changes.push_back(dF.value());
          accepted = true;
          break;
        }
        t /= Scalar(2);
      }
      if (!accepted) {
        throw NonConvergenceError("line search failed to decrease the objective",
                                  iters, static_cast<double>(gnorm),
                                  detail::to_doubles(j));
      }
    }
  }

  res.j = j;
  res.u_next = obj.height(j);
  res.newton_iters = iters;
  res.final_grad_norm = gnorm;
  const auto e1 = energy(grid, res.u_next, obj.potential());
  res.energy_after = e1.total.value();
  res.objective_end = obj.value(j).value();
  res.objective_at_rest = obj.value(rest).value();

  const FaceField<Scalar> gmu =
      gradient(grid, obj.chemical_potential(res.u_next));
  const FaceField<Scalar>& m = obj.mobility();
  const FaceField<Scalar>& w = obj.weights();
  FaceField<Scalar> flux_terms = FaceField<Scalar>::Zero(grid.faces());
  FaceField<Scalar> strong_terms = FaceField<Scalar>::Zero(grid.faces());
  FaceField<Scalar> pairing = FaceField<Scalar>::Zero(grid.faces());
  for (Index f = 1; f < n; ++f) {
    flux_terms[f] = w[f] * pow(abs(j[f]), Scalar(p));
    strong_terms[f] = m[f] * pow(abs(gmu[f]), Scalar(model.alpha + 1.0));
    pairing[f] = -gmu[f] * j[f];
  }
  res.dissipation_flux_term = integrate_faces(grid, flux_terms);
  res.dissipation_strong_term = integrate_faces(grid, strong_terms);
  res.force_flux_pairing = integrate_faces(grid, pairing);
  res.el_residual_norm = el_residual(grid, res, u_star, model);
  return res;
}

}  // namespace tfilm

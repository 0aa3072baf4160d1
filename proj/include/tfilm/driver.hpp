#pragma once

// Time stepping, per-step diagnostics, the discrete energy-dissipation audit,
// sigma continuation and the Hoelder quotient.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <numbers>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "tfilm/step_solver.hpp"

namespace tfilm {

struct InitialDataSpec {
  enum class Kind { constant, cosine, parabola, parabola_lifted, random, bump, values };

  Kind kind = Kind::constant;
  double mass = 1.0;       // mean height M (or M of the parabola)
  double amplitude = 0.0;  // cosine / random
  int mode = 1;            // cosine
  int modes = 6;           // random
  double delta = 0.0;      // parabola_lifted
  double center = 0.0;     // bump
  double width = 0.1;      // bump
  std::uint64_t seed = 0;  // random
  std::vector<double> values;

  static InitialDataSpec constant(double m) {
    InitialDataSpec s;
    s.kind = Kind::constant;
    s.mass = m;
    return s;
  }
  static InitialDataSpec cosine(double m, double a, int k) {
    InitialDataSpec s;
    s.kind = Kind::cosine;
    s.mass = m;
    s.amplitude = a;
    s.mode = k;
    return s;
  }
  static InitialDataSpec parabola(double m) {
    InitialDataSpec s;
    s.kind = Kind::parabola;
    s.mass = m;
    return s;
  }
  static InitialDataSpec parabola_lifted(double m, double delta) {
    InitialDataSpec s;
    s.kind = Kind::parabola_lifted;
    s.mass = m;
    s.delta = delta;
    return s;
  }
  /// M + a random cosine series rescaled to sup norm a M.
  static InitialDataSpec random(double m, double a, int modes, std::uint64_t seed) {
    InitialDataSpec s;
    s.kind = Kind::random;
    s.mass = m;
    s.amplitude = a;
    s.modes = modes;
    s.seed = seed;
    return s;
  }
  /// Background level b plus a Gaussian a exp(-((x - c)/w)^2).
  static InitialDataSpec bump(double b, double a, double c, double w) {
    InitialDataSpec s;
    s.kind = Kind::bump;
    s.mass = b;
    s.amplitude = a;
    s.center = c;
    s.width = w;
    return s;
  }
  static InitialDataSpec from_values(std::vector<double> v) {
    InitialDataSpec s;
    s.kind = Kind::values;
    s.values = std::move(v);
    return s;
  }

  template <typename Scalar = double>
  CellField<Scalar> build(const Grid& g) const {
    using std::cos;
    const Index n = g.cells();
    CellField<Scalar> u(n);
    auto parabola_at = [&](Index i) {
      if (std::abs(g.length() - 1.0) > 1e-12) {
        throw ParameterError("parabola initial data requires L = 1");
      }
      const Scalar x = (Scalar(i) + Scalar(0.5)) / Scalar(n);
      return Scalar(1.5) * Scalar(mass) * (Scalar(1) - x * x);
    };
    switch (kind) {
      case Kind::constant:
        u.setConstant(Scalar(mass));
        break;
      case Kind::cosine:
        for (Index i = 0; i < n; ++i) {
          const Scalar x = (Scalar(i) + Scalar(0.5)) / Scalar(n);
          u[i] = Scalar(mass) + Scalar(amplitude) * cos(Scalar(mode) * cosine_pi<Scalar>() * x);
        }
        break;
      case Kind::parabola:
        for (Index i = 0; i < n; ++i) u[i] = parabola_at(i);
        break;
      case Kind::parabola_lifted:
        for (Index i = 0; i < n; ++i) {
          u[i] = Scalar(delta) + (Scalar(1) - Scalar(delta) / Scalar(mass)) * parabola_at(i);
        }
        break;
      case Kind::random: {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> d(-1.0, 1.0);
        Vector<double> w = Vector<double>::Zero(n);
        for (int k = 1; k <= modes; ++k) {
          const double c = d(rng) / k;
          for (Index i = 0; i < n; ++i) {
            w[i] += c * std::cos(k * std::numbers::pi * g.cell_center(i) / g.length());
          }
        }
        const double peak = w.cwiseAbs().maxCoeff();
        if (peak > 0.0) w *= amplitude * mass / peak;
        for (Index i = 0; i < n; ++i) u[i] = Scalar(mass + w[i]);
        break;
      }
      case Kind::bump:
        if (!(width > 0.0)) throw ParameterError("bump width must be > 0");
        for (Index i = 0; i < n; ++i) {
          const double z = (g.cell_center(i) - center) / width;
          u[i] = Scalar(mass + amplitude * std::exp(-z * z));
        }
        break;
      case Kind::values:
        if (static_cast<Index>(values.size()) != n) {
          throw StructureError("initial values do not match the grid");
        }
        for (Index i = 0; i < n; ++i) u[i] = Scalar(values[static_cast<size_t>(i)]);
        break;
    }
    return u;
  }

 private:
  template <typename Scalar>
  static Scalar cosine_pi() {
    using std::acos;
    return acos(Scalar(-1));
  }
};

struct RunConfig {
  Grid grid{1.0, 128};
  ModelParams model;
  StepParams step;
  double T = 0.1;
  int record_every = 1;
  InitialDataSpec initial = InitialDataSpec::constant(1.0);

  int steps() const {
    return static_cast<int>(std::ceil(T / step.h - 1e-9));
  }

  void validate() const {
    model.validate();
    step.validate();
    if (!(T >= step.h)) throw ParameterError("T must be >= h");
    if (record_every < 1) throw ParameterError("record_every must be >= 1");
  }

  double audit_tolerance() const {
    return step.audit_tolerance(model.alpha, grid.length());
  }
};

struct StepDiagnostics {
  double t = 0.0;
  double mass = 0.0;
  double min_u = 0.0;
  double max_u = 0.0;
  double E_dirichlet = 0.0;
  double E_potential = 0.0;
  double E_total = 0.0;
  double diss_flux = 0.0;
  double diss_strong = 0.0;
  double ede_slack = 0.0;
  double el_residual = 0.0;
  int newton_iters = 0;
  /// - sum grad(mu) j dx of the step.
  double force_flux = 0.0;
  /// E(u_k) - E(u_{k+1}) - <DE(u_{k+1}), u_k - u_{k+1}> >= 0 by convexity.
  double bregman = 0.0;
};

template <typename Scalar = double>
struct Snapshot {
  int step = 0;
  double t = 0.0;
  CellField<Scalar> u;
};

template <typename Scalar = double>
struct TimeSeries {
  RunConfig config;
  std::vector<StepDiagnostics> diagnostics;
  std::vector<Snapshot<Scalar>> snapshots;
  /// Steps whose ede_slack fell below -tol_audit.
  int edi_violations = 0;
  double tol_audit = 0.0;
};

/// Solver failure at a known step of a run.
class RunError : public NonConvergenceError {
 public:
  RunError(const NonConvergenceError& e, int step)
      : NonConvergenceError("step " + std::to_string(step) + ": " + e.what(),
                            e.iterations(), e.grad_norm(), e.last_flux()),
        step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

namespace detail {

template <typename Scalar>
StepDiagnostics state_diagnostics(const Grid& g, double t, const CellField<Scalar>& u,
                                  const ModifiedPotential<Scalar>& mp) {
  StepDiagnostics d;
  d.t = t;
  d.mass = static_cast<double>(integrate(g, u));
  d.min_u = static_cast<double>(u.minCoeff());
  d.max_u = static_cast<double>(u.maxCoeff());
  const auto e = energy(g, u, mp);
  d.E_dirichlet = static_cast<double>(e.dirichlet);
  d.E_potential = e.potential.to_double();
  d.E_total = e.total.to_double();
  return d;
}

template <typename Scalar>
Scalar bregman_gap(const Grid& g, const CellField<Scalar>& before,
                   const CellField<Scalar>& after, const ModifiedPotential<Scalar>& mp) {
  // Exact for the quadratic Dirichlet part: 1/2 |grad(before - after)|^2.
  const FaceField<Scalar> gd = gradient(g, CellField<Scalar>(before - after));
  Scalar total = integrate_faces(g, gd.cwiseProduct(gd)) / Scalar(2);
  CellField<Scalar> pot(g.cells());
  for (Index i = 0; i < g.cells(); ++i) {
    const Scalar ds = before[i] - after[i];
    pot[i] = mp.difference(after[i], ds) - mp.d1(after[i]) * ds;
  }
  return total + integrate(g, pot);
}

}  // namespace detail

/// Runs ceil(T/h) steps from the configured initial data. Row 0 of the
/// diagnostics is the initial state; snapshots are taken at row 0, every
/// record_every steps, and at the final step.
template <typename Scalar = double>
TimeSeries<Scalar> run(const RunConfig& cfg,
                       const std::optional<CellField<Scalar>>& initial = std::nullopt) {
  cfg.validate();
  const Grid& g = cfg.grid;
  const auto mp = cfg.model.modified_potential<Scalar>();
  CellField<Scalar> u = initial ? *initial : cfg.initial.build<Scalar>(g);
  require_cell_field(g, u);
  if (!(u.minCoeff() > Scalar(0))) {
    throw PreconditionError("initial height must be strictly positive");
  }
  if (energy(g, u, mp).total.is_infinite()) {
    throw PreconditionError("initial height has infinite energy");
  }

  TimeSeries<Scalar> ts;
  ts.config = cfg;
  ts.tol_audit = cfg.audit_tolerance();
  const int steps = cfg.steps();
  ts.diagnostics.reserve(static_cast<size_t>(steps) + 1);
  ts.diagnostics.push_back(detail::state_diagnostics(g, 0.0, u, mp));
  ts.snapshots.push_back({0, 0.0, u});

  const Scalar h(cfg.step.h);
  for (int k = 1; k <= steps; ++k) {
    StepResult<Scalar> res;
    try {
      res = solve_step(g, u, cfg.model, cfg.step);
    } catch (const NonConvergenceError& e) {
      throw RunError(e, k);
    }
    const double t = k * cfg.step.h;
    StepDiagnostics d = detail::state_diagnostics(g, t, res.u_next, mp);
    d.diss_flux = static_cast<double>(res.dissipation_flux_term);
    d.diss_strong = static_cast<double>(res.dissipation_strong_term);
    d.ede_slack = static_cast<double>(res.energy_before - res.energy_after -
                                      h * res.dissipation_flux_term);
    d.el_residual = static_cast<double>(res.el_residual_norm);
    d.newton_iters = res.newton_iters;
    d.force_flux = static_cast<double>(res.force_flux_pairing);
    d.bregman = static_cast<double>(detail::bregman_gap(g, u, res.u_next, mp));
    if (d.ede_slack < -ts.tol_audit) ++ts.edi_violations;
    ts.diagnostics.push_back(d);
    u = std::move(res.u_next);
    if (k % cfg.record_every == 0 || k == steps) ts.snapshots.push_back({k, t, u});
  }
  return ts;
}

struct AuditReport {
  int s_idx = 0;
  int t_idx = 0;
  /// E(t) + sum h [a/(a+1) D_flux + 1/(a+1) D_strong] - E(s); <= 0 up to
  /// tolerance.
  double balance = 0.0;
  double tolerance = 0.0;
  bool inequality_holds = true;
  /// sum h [a/(a+1) D_flux + 1/(a+1) D_strong - force_flux]: vanishes when
  /// the step equations hold exactly, so it isolates solver error.
  double equality_defect = 0.0;
  /// sum of convexity gaps; the O(h) part of the balance that time
  /// discretisation, not the solver, accounts for.
  double bregman_sum = 0.0;
};

template <typename Scalar>
AuditReport audit_ede(const TimeSeries<Scalar>& series, int s_idx, int t_idx) {
  const int rows = static_cast<int>(series.diagnostics.size());
  if (s_idx < 0 || t_idx >= rows || s_idx >= t_idx) {
    throw StructureError("audit_ede needs 0 <= s_idx < t_idx < rows");
  }
  const double a = series.config.model.alpha;
  const double h = series.config.step.h;
  const double wf = a / (a + 1.0), ws = 1.0 / (a + 1.0);
  AuditReport r;
  r.s_idx = s_idx;
  r.t_idx = t_idx;
  double diss = 0.0, defect = 0.0, breg = 0.0;
  for (int k = s_idx + 1; k <= t_idx; ++k) {
    const auto& d = series.diagnostics[static_cast<size_t>(k)];
    const double step_diss = h * (wf * d.diss_flux + ws * d.diss_strong);
    diss += step_diss;
    defect += step_diss - h * d.force_flux;
    breg += d.bregman;
  }
  r.balance = series.diagnostics[static_cast<size_t>(t_idx)].E_total + diss -
              series.diagnostics[static_cast<size_t>(s_idx)].E_total;
  r.tolerance = series.tol_audit * (t_idx - s_idx);
  r.inequality_holds = r.balance <= r.tolerance;
  r.equality_defect = defect;
  r.bregman_sum = breg;
  return r;
}

/// Maps fn over items on up to `threads` workers; results keep input order.
template <typename T, typename Fn>
auto parallel_map(const std::vector<T>& items, Fn fn, int threads)
    -> std::vector<decltype(fn(items.front()))> {
  using R = decltype(fn(items.front()));
  std::vector<std::optional<R>> slots(items.size());
  std::vector<std::exception_ptr> errors(items.size());
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (size_t i = next++; i < items.size(); i = next++) {
      try {
        slots[i].emplace(fn(items[i]));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const size_t count =
      std::min<size_t>(items.size(), static_cast<size_t>(std::max(threads, 1)));
  std::vector<std::thread> pool;
  for (size_t w = 1; w < count; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  std::vector<R> out;
  out.reserve(items.size());
  for (size_t i = 0; i < items.size(); ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    out.push_back(std::move(*slots[i]));
  }
  return out;
}

struct ContinuationRun {
  double sigma = 0.0;
  double mass_drift = 0.0;
  double min_u = 0.0;
  bool positive = true;
  /// E(t) + int_0^t D_strong - E(0) with the unmodified energy; <= tolerance.
  double limit_edi_balance = 0.0;
  double limit_edi_tolerance = 0.0;
  TimeSeries<double> series;
};

struct ContinuationReport {
  std::vector<ContinuationRun> runs;
  /// Sup distance between consecutive sigma solutions, maximised over the
  /// shared snapshot times (mass-normalised).
  std::vector<double> sup_distances;
  bool distances_decrease = true;
  bool limit_edi_holds = true;
  bool all_positive = true;
};

/// Unmodified energy with the potential counted where u >= 2 sigma.
inline double limit_energy(const Grid& g, const CellField<double>& u,
                           const PotentialSpec& G, double sigma) {
  const FaceField<double> du = gradient(g, u);
  CellField<double> pot(g.cells());
  for (Index i = 0; i < g.cells(); ++i) {
    pot[i] = u[i] >= 2.0 * sigma ? G.value(u[i]) : 0.0;
  }
  return integrate_faces(g, du.cwiseProduct(du)) / 2.0 + integrate(g, pot);
}

inline ContinuationReport sigma_continuation(const CellField<double>& u0_nonneg,
                                             const std::vector<double>& sigmas,
                                             const RunConfig& tmpl, int threads = 1) {
  require_cell_field(tmpl.grid, u0_nonneg);
  if (sigmas.empty()) throw ParameterError("need at least one sigma");
  if (u0_nonneg.minCoeff() < 0.0) throw PreconditionError("u0 must be non-negative");
  for (size_t i = 1; i < sigmas.size(); ++i) {
    if (!(sigmas[i] < sigmas[i - 1])) throw ParameterError("sigmas must decrease");
  }
  const Grid& g = tmpl.grid;
  auto one = [&](double sigma) {
    ContinuationRun r;
    r.sigma = sigma;
    RunConfig cfg = tmpl;
    cfg.model.sigma = sigma;
    const CellField<double> u0 = u0_nonneg.array() + 2.0 * sigma;
    r.mass_drift = 2.0 * sigma * g.length();
    r.series = run<double>(cfg, u0);
    r.min_u = INFINITY;
    for (const auto& d : r.series.diagnostics) r.min_u = std::min(r.min_u, d.min_u);
    r.positive = r.min_u > 0.0;
    const auto& last = r.series.snapshots.back();
    double strong = 0.0;
    for (size_t k = 1; k < r.series.diagnostics.size(); ++k) {
      strong += cfg.step.h * r.series.diagnostics[k].diss_strong;
    }
    r.limit_edi_balance = limit_energy(g, last.u, cfg.model.potential, sigma) + strong -
                          limit_energy(g, u0, cfg.model.potential, sigma);
    r.limit_edi_tolerance = r.series.tol_audit * cfg.steps();
    return r;
  };
  ContinuationReport rep;
  rep.runs = parallel_map(sigmas, one, threads);
  for (const auto& r : rep.runs) {
    rep.all_positive = rep.all_positive && r.positive;
    rep.limit_edi_holds =
        rep.limit_edi_holds && r.limit_edi_balance <= r.limit_edi_tolerance;
  }
  for (size_t i = 1; i < rep.runs.size(); ++i) {
    const auto& a = rep.runs[i - 1].series.snapshots;
    const auto& b = rep.runs[i].series.snapshots;
    const double shift = 2.0 * (rep.runs[i - 1].sigma - rep.runs[i].sigma);
    double worst = 0.0;
    for (size_t s = 0; s < std::min(a.size(), b.size()); ++s) {
      // Remove the mean offset introduced by the lift.
      worst = std::max(worst, (a[s].u.array() - shift - b[s].u.array()).abs().maxCoeff());
    }
    rep.sup_distances.push_back(worst);
    if (i > 1) {
      rep.distances_decrease =
          rep.distances_decrease && worst < rep.sup_distances[i - 2];
    }
  }
  return rep;
}

/// max over snapshot pairs and cells of |u(t) - u(s)| / |t - s|^{1/(5a+3)}.
template <typename Scalar>
double holder_quotient(const TimeSeries<Scalar>& series, double alpha) {
  const auto& snaps = series.snapshots;
  if (snaps.size() < 2) throw PreconditionError("holder_quotient needs two snapshots");
  const double gamma = 1.0 / (5.0 * alpha + 3.0);
  double worst = 0.0;
  for (size_t a = 0; a < snaps.size(); ++a) {
    for (size_t b = a + 1; b < snaps.size(); ++b) {
      const double dt = std::abs(snaps[b].t - snaps[a].t);
      if (dt <= 0.0) continue;
      double diff = 0.0;
      for (Index i = 0; i < snaps[a].u.size(); ++i) {
        using std::abs;
        diff = std::max(diff, static_cast<double>(abs(snaps[b].u[i] - snaps[a].u[i])));
      }
      worst = std::max(worst, diff / std::pow(dt, gamma));
    }
  }
  return worst;
}

}  // namespace tfilm

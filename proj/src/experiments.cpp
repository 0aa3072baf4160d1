#include "tfilm/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <boost/math/quadrature/gauss.hpp>

namespace tfilm {

namespace {

void require_unit_interval(const Grid& g, const char* what) {
  if (std::abs(g.length() - 1.0) > 1e-12) {
    throw ParameterError(std::string(what) + " requires the domain (0,1)");
  }
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

LinearFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw PreconditionError("least_squares needs two or more points");
  }
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

// ---------------------------------------------------------------------------

ParabolaProfile build_parabola_v(double M, const Grid& g) {
  require_unit_interval(g, "build_parabola_v");
  ParabolaProfile p;
  p.v = InitialDataSpec::parabola(M).build(g);
  p.mass = integrate(g, p.v);
  const FaceField<double> dv = gradient(g, p.v);
  p.gradient_norm_sq = integrate_faces(g, dv.cwiseProduct(dv));
  p.nominal_E0 = 4.5 * M * M;
  return p;
}

LiftoffReport liftoff_sweep(const std::vector<double>& deltas, double M, double n,
                            double alpha, const RunConfig& tmpl, int threads,
                            double return_tolerance) {
  if (!(2.0 * (alpha + 1.0) > n)) {
    throw ParameterError("lift-off requires 2(alpha+1) > n");
  }
  if (deltas.empty()) throw ParameterError("need at least one delta");
  for (double d : deltas) {
    if (!(d > 0.0 && d < M)) throw ParameterError("each delta must lie in (0, M)");
  }
  require_unit_interval(tmpl.grid, "liftoff_sweep");

  LiftoffReport rep;
  rep.M = M;
  rep.n = n;
  rep.alpha = alpha;
  rep.sigma = *std::min_element(deltas.begin(), deltas.end()) / 10.0;
  const auto v = build_parabola_v(M, tmpl.grid);
  rep.energy_v = 0.5 * v.gradient_norm_sq;
  rep.nominal_E0 = v.nominal_E0;

  RunConfig cfg = tmpl;
  cfg.model.alpha = alpha;
  cfg.model.mobility = MobilitySpec::power(n);
  cfg.model.potential = PotentialSpec::zero();
  cfg.model.sigma = rep.sigma;

  auto one = [&](double delta) {
    LiftoffRun r;
    r.delta = delta;
    RunConfig c = cfg;
    c.initial = InitialDataSpec::parabola_lifted(M, delta);
    const CellField<double> u0 = c.initial.build(c.grid);
    const FaceField<double> du = gradient(c.grid, u0);
    r.initial_energy = 0.5 * integrate_faces(c.grid, du.cwiseProduct(du));
    const auto ts = run<double>(c);
    const double m0 = ts.diagnostics.front().mass;
    for (const auto& d : ts.diagnostics) {
      r.t.push_back(d.t);
      r.min_u.push_back(d.min_u);
      r.max_mass_drift = std::max(r.max_mass_drift, std::abs(d.mass - m0) / m0);
    }
    for (size_t k = 0; k < r.t.size(); ++k) {
      if (r.min_u[k] >= 0.5 * M) {
        r.reached = true;
        r.t_half = r.t[k];
        r.min_after_half = *std::min_element(r.min_u.begin() + static_cast<long>(k),
                                             r.min_u.end());
        r.stays_above = r.min_after_half >= 0.5 * M - return_tolerance * M;
        break;
      }
    }
    return r;
  };
  rep.runs = parallel_map(deltas, one, threads);

  rep.all_reached = true;
  rep.all_stay_above = true;
  std::vector<double> halves;
  for (const auto& r : rep.runs) {
    rep.energies_below_threshold =
        rep.energies_below_threshold && r.initial_energy < rep.energy_v;
    rep.all_reached = rep.all_reached && r.reached;
    rep.all_stay_above = rep.all_stay_above && r.stays_above;
    halves.push_back(r.t_half);
  }
  if (rep.all_reached) {
    rep.t0_hat = *std::max_element(halves.begin(), halves.end());
    rep.median_t_half = median(halves);
    rep.uniform = rep.t0_hat <= 2.0 * rep.median_t_half;
  }
  return rep;
}

// ---------------------------------------------------------------------------

double w_l_second(double l, double x) {
  const double y = std::abs(x - 0.5);
  return -1.0 + std::max(0.0, 1.0 - y / l) / l;
}

double w_l_first(double l, double x) {
  const double y = x - 0.5;
  const double a = std::abs(y);
  const double mag = a <= l ? -a + (a - a * a / (2.0 * l)) / l : 0.5 - a;
  return y < 0.0 ? -mag : mag;
}

double w_l_value(double l, double x) {
  const double a = std::abs(x - 0.5);
  if (a <= l) return -a * a / 2.0 + (a * a / 2.0 - a * a * a / (6.0 * l)) / l;
  const double at_l = -l * l / 2.0 + l / 3.0;
  return at_l - (a * a - l * l) / 2.0 + (a - l) / 2.0;
}

namespace {

double w_l_beta(double l) {
  const double a = 0.5 - l;
  const double at_l = -l * l / 2.0 + l / 3.0;
  const double inner = l * l / 8.0 - l * l * l / 6.0;
  const double outer = at_l * a - 0.5 * (1.0 / 24.0 - l * l / 2.0 + 2.0 * l * l * l / 3.0) +
                       a * a / 4.0;
  return 2.0 * (inner + outer);
}

}  // namespace

WLProfile build_w_l(double l, const Grid& g) {
  if (!(l > 0.0 && l <= 0.5)) throw ParameterError("l must be in (0, 1/2]");
  require_unit_interval(g, "build_w_l");
  const Index n = g.cells();
  const double dx = g.dx();

  // Cumulative trapezoid integration of w'' over the faces, then of w'.
  Vector<double> d2(n + 1), d1(n + 1), w_face(n + 1);
  for (Index f = 0; f <= n; ++f) d2[f] = w_l_second(l, g.face_position(f));
  d1[0] = 0.0;
  for (Index f = 1; f <= n; ++f) d1[f] = d1[f - 1] + 0.5 * dx * (d2[f - 1] + d2[f]);
  w_face[0] = 0.0;
  for (Index f = 1; f <= n; ++f) w_face[f] = w_face[f - 1] + 0.5 * dx * (d1[f - 1] + d1[f]);

  // Impose w(1/2) = w'(1/2) = 0 by linear interpolation at x = 1/2.
  const double pos = 0.5 / dx;
  const Index f0 = std::min<Index>(static_cast<Index>(std::floor(pos)), n - 1);
  const double th = pos - static_cast<double>(f0);
  const double d1_mid = (1 - th) * d1[f0] + th * d1[f0 + 1];
  d1.array() -= d1_mid;
  for (Index f = 0; f <= n; ++f) w_face[f] -= d1_mid * g.face_position(f);
  const double w_mid = (1 - th) * w_face[f0] + th * w_face[f0 + 1];
  w_face.array() -= w_mid;

  WLProfile p;
  p.l = l;
  p.w.resize(n);
  for (Index i = 0; i < n; ++i) {
    // Midpoint value from the left face plus half a cell of w'.
    const double d1_center = 0.5 * (d1[i] + d1[i + 1]);
    p.w[i] = w_face[i] + 0.25 * dx * (d1[i] + d1_center);
  }
  p.beta = integrate(g, p.w);
  p.slope_left = d1[0];
  p.slope_right = d1[n];
  p.min_value = p.w.minCoeff();
  return p;
}

double bump_dissipation(double delta, double M, double n, double alpha, const Grid& g) {
  require_unit_interval(g, "bump_dissipation");
  const double l = delta;
  const double scale = (M - delta) / w_l_beta(l);
  CellField<double> terms(g.cells());
  for (Index i = 0; i < g.cells(); ++i) {
    const double a = g.face_position(i), b = g.face_position(i + 1);
    const double third = (w_l_second(l, b) - w_l_second(l, a)) / g.dx();
    if (third == 0.0) {
      terms[i] = 0.0;
      continue;
    }
    const double u = delta + scale * w_l_value(l, g.cell_center(i));
    terms[i] = std::pow(u, n) * std::pow(std::abs(scale * third), alpha + 1.0);
  }
  return integrate(g, terms);
}

DissipationScalingReport dissipation_scaling_fit(const std::vector<double>& deltas,
                                                 double M, double n, double alpha,
                                                 const Grid& g) {
  require_unit_interval(g, "dissipation_scaling_fit");
  if (deltas.size() < 4) throw ParameterError("need at least 4 deltas");
  for (size_t i = 0; i < deltas.size(); ++i) {
    if (!(deltas[i] > 0.0 && deltas[i] < M / 2.0)) {
      throw ParameterError("each delta must lie in (0, M/2)");
    }
    if (i > 0 && !(deltas[i] < deltas[i - 1])) {
      throw ParameterError("deltas must be decreasing");
    }
  }
  if (deltas.front() / deltas.back() < 100.0 * (1.0 - 1e-9)) {
    throw ParameterError("deltas must span at least two decades");
  }
  const double needed = std::ceil(32.0 / deltas.back());
  if (static_cast<double>(g.cells()) < needed) {
    std::ostringstream os;
    os << "insufficient resolution: need N >= " << static_cast<long long>(needed);
    throw ParameterError(os.str());
  }

  DissipationScalingReport rep;
  rep.M = M;
  rep.n = n;
  rep.alpha = alpha;
  rep.cells = g.cells();
  rep.deltas = deltas;
  rep.target_exponent = n - 1.0 - 2.0 * alpha;
  std::vector<double> lx, ly;
  rep.c_lower = std::numeric_limits<double>::infinity();
  for (double d : deltas) {
    const double D = bump_dissipation(d, M, n, alpha, g);
    const double f = std::min(1.0, std::pow(d, rep.target_exponent)) /
                     std::pow(std::log(M / d), alpha + 1.0);
    rep.dissipation.push_back(D);
    rep.lower_profile.push_back(f);
    rep.c_lower = std::min(rep.c_lower, D / f);
    lx.push_back(std::log(d));
    ly.push_back(std::log(D));
  }
  const auto fit = least_squares(lx, ly);
  rep.slope = fit.slope;
  rep.r2 = fit.r2;
  rep.fit_points = static_cast<int>(lx.size());
  rep.lower_bound_holds = rep.c_lower > 0.0 && std::isfinite(rep.c_lower);
  for (size_t i = 0; i < deltas.size(); ++i) {
    rep.lower_bound_holds =
        rep.lower_bound_holds && rep.dissipation[i] >= rep.c_lower * rep.lower_profile[i];
  }
  return rep;
}

// ---------------------------------------------------------------------------

PointWitness point_lemma_check(const CellField<double>& u, const Grid& g) {
  require_cell_field(g, u);
  if (!(u.minCoeff() > 0.0)) throw PreconditionError("u must be strictly positive");
  PointWitness w;
  w.min_u = u.minCoeff();
  w.max_u = u.maxCoeff();
  const FaceField<double> du = gradient(g, u);
  const CellField<double> d2u = laplacian_neumann(g, u);
  w.hamiltonian.resize(g.cells());
  for (Index i = 0; i < g.cells(); ++i) {
    const double s2 = 0.5 * (du[i] * du[i] + du[i + 1] * du[i + 1]);
    w.hamiltonian[i] = 0.5 * s2 + std::log(u[i]);
  }
  const double spread = w.max_u - w.min_u;
  if (spread <= 0.0) {
    w.found = true;
    w.trivial = true;
    return w;
  }
  w.slope_bound = spread / 2.0;
  w.curvature_bound = spread * spread / (4.0 * std::log(w.max_u / w.min_u));
  w.tol_fd = 5.0 * g.dx() * w.curvature_bound;
  double best = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < g.cells(); ++i) {
    const double slope = std::max(std::abs(du[i]), std::abs(du[i + 1]));
    if (slope < w.slope_bound) continue;
    const double margin = u[i] * d2u[i] - (w.curvature_bound - w.tol_fd);
    if (margin >= 0.0 && margin > best) {
      best = margin;
      w.found = true;
      w.cell = i;
      w.x0 = g.cell_center(i);
      w.slope_at_witness = slope;
      w.curvature_at_witness = u[i] * d2u[i];
    }
  }
  return w;
}

EnergyMinCheck energy_vs_min_check(const CellField<double>& u, const Grid& g) {
  require_cell_field(g, u);
  const double M = integrate(g, u) / g.length();
  const double delta = u.minCoeff();
  const auto v = build_parabola_v(M, g);
  const FaceField<double> du = gradient(g, u);
  EnergyMinCheck c;
  c.lhs = integrate_faces(g, du.cwiseProduct(du));
  const double shrink = 1.0 - delta / M;
  c.rhs = shrink * shrink * v.gradient_norm_sq;
  c.slack = 2.0 * g.dx() * c.rhs;
  c.holds = c.lhs >= c.rhs - c.slack;
  return c;
}

CellField<double> random_neumann_profile(const Grid& g, std::mt19937_64& rng, int modes,
                                         double min_value) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  CellField<double> w = CellField<double>::Zero(g.cells());
  while (w.maxCoeff() - w.minCoeff() <= 0.0) {
    for (int k = 1; k <= modes; ++k) {
      const double c = d(rng) / k;
      for (Index i = 0; i < g.cells(); ++i) {
        w[i] += c * std::cos(k * std::numbers::pi * g.cell_center(i) / g.length());
      }
    }
  }
  const double lo = w.minCoeff(), range = w.maxCoeff() - lo;
  return ((w.array() - lo) / range + min_value).matrix();
}

// ---------------------------------------------------------------------------

std::string to_string(DecayClass c) {
  switch (c) {
    case DecayClass::exponential: return "exponential";
    case DecayClass::algebraic: return "algebraic";
    case DecayClass::finite_time: return "finite-time";
    case DecayClass::inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

RateReport rate_fit(const TimeSeries<double>& series, double alpha, const RateOptions& opt) {
  RateReport r;
  const auto& diag = series.diagnostics;
  if (diag.size() < 2) {
    r.note = "series too short";
    return r;
  }
  const double T = diag.back().t;

  if (alpha < 1.0) {
    for (size_t k = 0; k < diag.size(); ++k) {
      if (diag[k].E_total <= opt.tol_extinct) {
        r.t_extinct = diag[k].t;
        r.stays_extinct = true;
        for (size_t m = k; m < diag.size(); ++m) {
          r.stays_extinct = r.stays_extinct && diag[m].E_total <= opt.tol_extinct;
        }
        break;
      }
    }
    if (std::isfinite(r.t_extinct) && r.stays_extinct) {
      r.classification = DecayClass::finite_time;
    } else {
      r.note = "energy did not reach the extinction tolerance and stay there";
    }
    return r;
  }

  std::vector<double> t, logt, logE;
  for (const auto& d : diag) {
    if (d.t >= opt.tail_start_fraction * T && d.t > 0.0 && d.E_total > opt.noise_floor) {
      t.push_back(d.t);
      logt.push_back(std::log(d.t));
      logE.push_back(std::log(d.E_total));
    }
  }
  r.window_points = static_cast<int>(t.size());
  if (r.window_points < opt.min_points) {
    r.note = "window too short or energy below noise floor";
    return r;
  }
  r.window_start = t.front();
  r.window_end = t.back();
  const auto ex = least_squares(t, logE);
  const auto al = least_squares(logt, logE);
  r.r2_exponential = ex.r2;
  r.r2_algebraic = al.r2;
  if (alpha == 1.0) {
    r.classification = DecayClass::exponential;
    r.rate = -ex.slope;
    r.r2 = ex.r2;
  } else {
    r.classification = DecayClass::algebraic;
    r.rate = al.slope;
    r.r2 = al.r2;
  }
  return r;
}

double modal_energy_rate(const Grid& g, int k, double h) {
  const double lam = neumann_eigenvalue(g, k);
  return 2.0 * std::log1p(h * lam * lam) / h;
}

// ---------------------------------------------------------------------------

namespace {

double overlap(double a, double b, double c, double d) {
  return std::max(0.0, std::min(b, d) - std::max(a, c));
}

struct Piece {
  double start;
  double end;
  double height;
};

// Cell averages of delta + sum of pieces, each a box of the given height on
// [centre - r, centre + r].
void add_boxes(const Grid& g, const std::vector<double>& centres,
               const std::vector<double>& heights, double r, CellField<double>& u) {
  const double dx = g.dx();
  for (size_t p = 0; p < centres.size(); ++p) {
    const double a = centres[p] - r, b = centres[p] + r;
    const Index i0 = std::max<Index>(0, static_cast<Index>(std::floor(a / dx)));
    const Index i1 = std::min<Index>(g.cells() - 1, static_cast<Index>(std::floor(b / dx)));
    for (Index i = i0; i <= i1; ++i) {
      u[i] += heights[p] * overlap(a, b, g.face_position(i), g.face_position(i + 1)) / dx;
    }
  }
}

// sum_f |j_f|^p / m(u_f)^{1/a} dx.
double action_density(const Grid& g, const CellField<double>& u, const FaceField<double>& j,
                      const MobilitySpec& m, double alpha) {
  const double p = (alpha + 1.0) / alpha;
  const FaceField<double> mf = mobility_face(m, u, g);
  FaceField<double> terms = FaceField<double>::Zero(g.faces());
  for (Index f = 1; f < g.cells(); ++f) {
    if (j[f] != 0.0) terms[f] = std::pow(std::abs(j[f]), p) / std::pow(mf[f], 1.0 / alpha);
  }
  return integrate_faces(g, terms);
}

// j_f = - sum_{i < f} dudt_i dx.
FaceField<double> flux_from_rate(const Grid& g, const CellField<double>& dudt,
                                 double& defect) {
  FaceField<double> j(g.faces());
  j[0] = 0.0;
  for (Index f = 1; f <= g.cells(); ++f) j[f] = j[f - 1] - dudt[f - 1] * g.dx();
  const double scale = dudt.cwiseAbs().maxCoeff() * g.dx() * static_cast<double>(g.cells());
  defect = std::max(defect, std::abs(j[g.cells()]) / std::max(scale, 1e-300));
  j[g.cells()] = 0.0;
  const CellField<double> div = divergence(g, j);
  defect = std::max(defect, ((div + dudt).cwiseAbs().maxCoeff()) /
                                std::max(dudt.cwiseAbs().maxCoeff(), 1e-300));
  return j;
}

template <typename F>
double integrate_time(F integrand, double t0, double t1, const BBQuadrature& q) {
  using Gauss = boost::math::quadrature::gauss<double, 7>;
  const auto& nodes = Gauss::abscissa();
  const auto& weights = Gauss::weights();
  double total = 0.0;
  const double w = (t1 - t0) / q.time_panels;
  for (int k = 0; k < q.time_panels; ++k) {
    const double a = t0 + k * w, mid = a + w / 2;
    // Odd-order rule: node 0 is the midpoint, the rest come in pairs.
    total += weights[0] * integrand(mid);
    for (size_t i = 1; i < nodes.size(); ++i) {
      total += weights[i] * (integrand(mid - nodes[i] * w / 2) + integrand(mid + nodes[i] * w / 2));
    }
  }
  return total * w / 2;
}

}  // namespace

BBActionReport bb_action_demo(const CellField<double>& u0_in, const CellField<double>& u1_in,
                              double eta, const std::vector<double>& M_sweep, double n,
                              double alpha, const Grid& g, const BBQuadrature& q,
                              int threads) {
  require_cell_field(g, u0_in);
  require_cell_field(g, u1_in);
  if (!(u0_in.minCoeff() > 0.0 && u1_in.minCoeff() > 0.0)) {
    throw PreconditionError("u0 and u1 must be strictly positive");
  }
  if (!(eta > 0.0 && eta <= g.length() / 2)) throw ParameterError("eta out of range");
  if (!(alpha > 0.0)) throw ParameterError("alpha must be > 0");
  for (double M : M_sweep) {
    if (!(M >= 2.0)) throw ParameterError("concentration factors must be >= 2");
  }
  const double mass0 = integrate(g, u0_in), mass1 = integrate(g, u1_in);
  if (std::abs(mass0 - mass1) > 1e-2 * mass0) {
    throw PreconditionError("u0 and u1 must have equal mass");
  }
  const CellField<double> u0 = u0_in;
  const CellField<double> u1 = u1_in * (mass0 / mass1);

  BBActionReport rep;
  rep.eta = eta;
  rep.n = n;
  rep.alpha = alpha;
  rep.cells = g.cells();
  rep.mass = mass0;
  rep.M_sweep = M_sweep;
  rep.degeneracy_expected = n > 1.0;
  rep.delta = 0.5 * std::min(u0.minCoeff(), u1.minCoeff());
  const double delta = rep.delta;
  const MobilitySpec mob = MobilitySpec::power(n);

  // Atoms at the centres of an eta-partition; nearest-point lumping.
  const int atoms = static_cast<int>(std::floor(g.length() / eta + 1e-9));
  std::vector<double> z(static_cast<size_t>(atoms)), a0(z.size(), 0.0), a1(z.size(), 0.0);
  for (int k = 0; k < atoms; ++k) z[static_cast<size_t>(k)] = (k + 0.5) * eta;
  for (Index i = 0; i < g.cells(); ++i) {
    const int k = std::min(atoms - 1, static_cast<int>(g.cell_center(i) / eta));
    a0[static_cast<size_t>(k)] += (u0[i] - delta) * g.dx();
    a1[static_cast<size_t>(k)] += (u1[i] - delta) * g.dx();
  }
  const double total = std::accumulate(a0.begin(), a0.end(), 0.0);

  struct Stages {
    double s1, s2, s3, defect;
  };
  auto one = [&](double M) {
    Stages s{0, 0, 0, 0};
    const double r = eta / M;
    std::vector<double> h0(z.size()), h1(z.size());
    for (size_t k = 0; k < z.size(); ++k) {
      h0[k] = a0[k] * M / (2 * eta);
      h1[k] = a1[k] * M / (2 * eta);
    }
    CellField<double> b0 = CellField<double>::Constant(g.cells(), delta);
    CellField<double> b1 = b0;
    add_boxes(g, z, h0, r, b0);
    add_boxes(g, z, h1, r, b1);

    // Stages 1 and 3: linear morphs over a third of unit time.
    auto morph = [&](const CellField<double>& from, const CellField<double>& to) {
      const CellField<double> rate = 3.0 * (to - from);
      const FaceField<double> j = flux_from_rate(g, rate, s.defect);
      return integrate_time(
          [&](double t) {
            const CellField<double> u = from + t * (to - from);
            return action_density(g, u, j, mob, alpha);
          },
          0.0, 1.0, q) / 3.0;
    };
    s.s1 = morph(u0, b0);
    s.s3 = morph(b1, u1);

    // Stage 2: each coupled pair moves at constant speed from z to z'.
    std::vector<double> start, speed, height;
    for (size_t k = 0; k < z.size(); ++k) {
      for (size_t m = 0; m < z.size(); ++m) {
        const double weight = a0[k] * a1[m] / total;
        if (weight <= 0.0) continue;
        start.push_back(z[k]);
        speed.push_back(3.0 * (z[m] - z[k]));
        height.push_back(weight * M / (2 * eta));
      }
    }
    double defect = 0.0;
    s.s2 = integrate_time(
        [&](double s01) {
          const double t = s01 / 3.0;
          CellField<double> u = CellField<double>::Constant(g.cells(), delta);
          CellField<double> rate = CellField<double>::Zero(g.cells());
          std::vector<double> centres(start.size());
          for (size_t p = 0; p < start.size(); ++p) centres[p] = start[p] + speed[p] * t;
          add_boxes(g, centres, height, r, u);
          const double dx = g.dx();
          for (size_t p = 0; p < start.size(); ++p) {
            if (speed[p] == 0.0) continue;
            const double lo = centres[p] - r, hi = centres[p] + r;
            const Index ilo = std::min<Index>(g.cells() - 1, static_cast<Index>(lo / dx));
            const Index ihi = std::min<Index>(g.cells() - 1, static_cast<Index>(hi / dx));
            rate[ihi] += height[p] * speed[p] / dx;
            rate[ilo] -= height[p] * speed[p] / dx;
          }
          const FaceField<double> j = flux_from_rate(g, rate, defect);
          return action_density(g, u, j, mob, alpha);
        },
        0.0, 1.0, q) / 3.0;
    s.defect = std::max(s.defect, defect);
    return s;
  };
  // Identical endpoints: the constant path is admissible and costs nothing.
  if (u0 == u1) {
    rep.constant_path = true;
    rep.stage1.assign(M_sweep.size(), 0.0);
    rep.stage2 = rep.stage3 = rep.action = rep.stage1;
    return rep;
  }
  const auto stages = parallel_map(M_sweep, one, threads);
  for (const auto& s : stages) {
    rep.stage1.push_back(s.s1);
    rep.stage2.push_back(s.s2);
    rep.stage3.push_back(s.s3);
    rep.action.push_back(s.s1 + s.s2 + s.s3);
    rep.continuity_defect = std::max(rep.continuity_defect, s.defect);
  }
  rep.monotone_decreasing = !rep.action.empty();
  for (size_t i = 1; i < rep.action.size(); ++i) {
    rep.monotone_decreasing = rep.monotone_decreasing && rep.action[i] < rep.action[i - 1];
  }
  if (!rep.action.empty() && rep.action.front() > 0.0) {
    rep.final_over_initial = rep.action.back() / rep.action.front();
  }
  return rep;
}

}  // namespace tfilm

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include <doctest.h>

#include "tfilm/experiments.hpp"

using tfilm::CellField;
using tfilm::Grid;
using tfilm::Index;

TEST_CASE("parabola v: mass, Dirichlet integral and contact") {
  const double M = 1.3;
  double previous_gap = INFINITY;
  for (Index n : {250, 1000, 4000}) {
    const Grid g(1.0, n);
    const auto p = tfilm::build_parabola_v(M, g);
    CHECK(std::abs(p.mass - M) <= 2.0 * M * g.dx() * g.dx());
    // int_0^1 (3 M x)^2 dx = 3 M^2.
    const double gap = std::abs(p.gradient_norm_sq - 3.0 * M * M);
    CHECK(gap < previous_gap);
    previous_gap = gap;
    CHECK(p.nominal_E0 == doctest::Approx(4.5 * M * M));
    CHECK(p.v[n - 1] <= 3.0 * M * g.dx());
  }
  CHECK(previous_gap < 1e-2);
  CHECK_THROWS_AS(tfilm::build_parabola_v(1.0, Grid(2.0, 64)), tfilm::ParameterError);
}

TEST_CASE("w_l: Neumann slopes, third derivative and beta") {
  const Grid g(1.0, 4000);
  for (double l : {0.5, 0.2, 0.05}) {
    const auto p = tfilm::build_w_l(l, g);
    CHECK(std::abs(p.slope_left) < 1e-6);
    CHECK(std::abs(p.slope_right) < 1e-6);
    CHECK(p.min_value >= -g.dx() * g.dx());
    // Discrete third difference of w'' at faces: 1/l^2 inside, 0 outside.
    for (double x : {0.5 - 0.6 * l, 0.5 + 0.3 * l, 0.5 - 1.2 * l, 0.5 + 1.5 * l}) {
      if (x <= 0.0 || x >= 1.0) continue;
      const double h = 1e-6;
      const double third = std::abs(tfilm::w_l_second(l, x + h) - tfilm::w_l_second(l, x)) / h;
      const bool inside = std::abs(x - 0.5) < l;
      CHECK(third == doctest::Approx(inside ? 1.0 / (l * l) : 0.0).epsilon(1e-6));
    }
  }
  // l = 1/2: w'' = 1 - 4|y| gives w = y^2/2 - 2|y|^3/3 and beta = 1/48.
  const auto half = tfilm::build_w_l(0.5, g);
  CHECK(half.beta == doctest::Approx(1.0 / 48.0).epsilon(1e-6));
  for (double y : {0.0, 0.1, 0.37}) {
    CHECK(tfilm::w_l_value(0.5, 0.5 + y) ==
          doctest::Approx(y * y / 2 - 2 * y * y * y / 3).epsilon(1e-12));
  }
  CHECK_THROWS_AS(tfilm::build_w_l(0.7, g), tfilm::ParameterError);
  CHECK_THROWS_AS(tfilm::build_w_l(0.0, g), tfilm::ParameterError);
}

TEST_CASE("dissipation fit refuses coarse grids and checks the sweep") {
  std::vector<double> d{1e-1, 3e-2, 1e-2, 3e-3, 1e-3};
  try {
    tfilm::dissipation_scaling_fit(d, 1.0, 2.0, 1.0, Grid(1.0, 1000));
    FAIL("expected a refusal");
  } catch (const tfilm::ParameterError& e) {
    CHECK(std::string(e.what()).find("need N >= 32000") != std::string::npos);
  }
  CHECK_THROWS_AS(tfilm::dissipation_scaling_fit({1e-1, 5e-2, 2e-2, 1.5e-2}, 1.0, 2.0, 1.0,
                                                 Grid(1.0, 4000)),
                  tfilm::ParameterError);
  CHECK_THROWS_AS(tfilm::dissipation_scaling_fit({1e-1, 1e-2, 1e-3}, 1.0, 2.0, 1.0,
                                                 Grid(1.0, 40000)),
                  tfilm::ParameterError);
}

TEST_CASE("dissipation scaling: n = 4, alpha = 1 has exponent 1") {
  std::vector<double> d;
  for (int k = 0; k <= 8; ++k) d.push_back(std::pow(10.0, -1.0 - k / 4.0));
  const auto r = tfilm::dissipation_scaling_fit(d, 1.0, 4.0, 1.0, Grid(1.0, 32000));
  CHECK(r.target_exponent == 1.0);
  CHECK(r.slope_within(0.15));
  CHECK(r.lower_bound_holds);
}

TEST_CASE("point lemma: constant profile is trivial, bump has a witness") {
  const Grid g(1.0, 512);
  const auto flat = tfilm::point_lemma_check(CellField<double>::Constant(512, 1.0), g);
  CHECK(flat.found);
  CHECK(flat.trivial);
  CHECK(flat.slope_bound == 0.0);

  const auto w = tfilm::build_w_l(0.5, g);
  const double delta = 0.1;
  const CellField<double> u = (delta + (1.0 - delta) * w.w.array() / w.beta).matrix();
  const auto p = tfilm::point_lemma_check(u, g);
  CHECK(p.found);
  CHECK_FALSE(p.trivial);
  CHECK(p.slope_at_witness >= p.slope_bound);
  CHECK(p.curvature_at_witness >= p.curvature_bound - p.tol_fd);
  // H = |u'|^2/2 + log u on cells.
  CHECK(p.hamiltonian.size() == 512);
}

TEST_CASE("energy versus minimum holds on random profiles") {
  const Grid g(1.0, 512);
  std::mt19937_64 rng(3);
  for (int k = 0; k < 20; ++k) {
    const auto u = tfilm::random_neumann_profile(g, rng, 5, 0.02 + 0.04 * k);
    CHECK(u.minCoeff() == doctest::Approx(0.02 + 0.04 * k));
    CHECK(u.maxCoeff() - u.minCoeff() == doctest::Approx(1.0));
    CHECK(tfilm::energy_vs_min_check(u, g).holds);
  }
}

namespace {

tfilm::TimeSeries<double> synthetic(double (*energy)(double), double T, int rows) {
  tfilm::TimeSeries<double> ts;
  for (int k = 0; k < rows; ++k) {
    tfilm::StepDiagnostics d;
    d.t = T * k / (rows - 1);
    d.E_total = energy(d.t);
    ts.diagnostics.push_back(d);
  }
  return ts;
}

}  // namespace

TEST_CASE("rate_fit on synthetic energies") {
  const auto ex = tfilm::rate_fit(synthetic([](double t) { return std::exp(-3.0 * t); }, 4, 200),
                                  1.0);
  CHECK(ex.classification == tfilm::DecayClass::exponential);
  CHECK(ex.rate == doctest::Approx(3.0));
  CHECK(ex.r2 > 0.999);

  const auto al = tfilm::rate_fit(
      synthetic([](double t) { return 1.0 / ((1.0 + t) * (1.0 + t)); }, 1000, 400), 2.0);
  CHECK(al.classification == tfilm::DecayClass::algebraic);
  CHECK(al.rate == doctest::Approx(-2.0).epsilon(0.02));
  CHECK(al.r2 > 0.99);

  const auto ft = tfilm::rate_fit(
      synthetic([](double t) { return t < 0.5 ? (0.5 - t) * (0.5 - t) : 0.0; }, 1, 101), 0.5);
  CHECK(ft.classification == tfilm::DecayClass::finite_time);
  CHECK(ft.t_extinct <= 0.5 + 1e-12);
  CHECK(ft.stays_extinct);

  const auto none = tfilm::rate_fit(synthetic([](double) { return 1.0; }, 1, 50), 0.5);
  CHECK(none.classification == tfilm::DecayClass::inconclusive);

  const auto shortrun = tfilm::rate_fit(synthetic([](double t) { return std::exp(-t); }, 1, 4),
                                        1.0);
  CHECK(shortrun.classification == tfilm::DecayClass::inconclusive);
}

TEST_CASE("modal energy rate and Neumann eigenvalue") {
  const Grid g(1.0, 64);
  const double lam = (2 - 2 * std::cos(3 * std::numbers::pi / 64)) * 64 * 64;
  CHECK(tfilm::neumann_eigenvalue(g, 3) == doctest::Approx(lam).epsilon(1e-13));
  CHECK(tfilm::modal_energy_rate(g, 3, 1e-5) ==
        doctest::Approx(2 * std::log(1 + 1e-5 * lam * lam) / 1e-5).epsilon(1e-12));
}

TEST_CASE("BB action: identical endpoints give the constant path") {
  const Grid g(1.0, 512);
  const auto u0 = tfilm::InitialDataSpec::cosine(1.0, 0.5, 1).build(g);
  const auto same = tfilm::bb_action_demo(u0, u0, 0.125, {2, 4}, 2.0, 1.0, g);
  CHECK(same.constant_path);
  for (double a : same.action) CHECK(a == 0.0);
}

TEST_CASE("BB action: constructed paths are conservative and positive") {
  const Grid g(1.0, 512);
  const auto u0 = tfilm::InitialDataSpec::cosine(1.0, 0.5, 1).build(g);
  const auto u1 = tfilm::InitialDataSpec::cosine(1.0, -0.5, 1).build(g);
  const auto r = tfilm::bb_action_demo(u0, u1, 0.125, {2, 4, 8}, 2.0, 1.0, g);
  CHECK_FALSE(r.constant_path);
  CHECK(r.continuity_defect < 1e-10);
  CHECK(r.degeneracy_expected);
  CHECK(r.delta == doctest::Approx(0.25));
  for (double a : r.action) CHECK(a > 0.0);

  const auto lin = tfilm::bb_action_demo(u0, u1, 0.125, {2, 4}, 1.0, 1.0, g);
  CHECK_FALSE(lin.degeneracy_expected);

  const CellField<double> heavier = 1.1 * u1;
  CHECK_THROWS_AS(tfilm::bb_action_demo(u0, heavier, 0.125, {2}, 2.0, 1.0, g),
                  tfilm::PreconditionError);
  // Within the 1% tolerance u1 is rescaled to the mass of u0.
  const CellField<double> close = 1.005 * u1;
  CHECK(tfilm::bb_action_demo(u0, close, 0.125, {2}, 2.0, 1.0, g).mass ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("lift-off sweep: hypothesis and trivial threshold") {
  tfilm::RunConfig cfg;
  cfg.grid = Grid(1.0, 64);
  cfg.step.h = 1e-4;
  cfg.T = 2e-4;
  CHECK_THROWS_AS(tfilm::liftoff_sweep({0.1}, 1.0, 5.0, 1.0, cfg), tfilm::ParameterError);
  const auto r = tfilm::liftoff_sweep({0.5}, 1.0, 2.0, 1.0, cfg);
  REQUIRE(r.runs.size() == 1);
  CHECK(r.runs[0].reached);
  CHECK(r.runs[0].t_half == 0.0);
  CHECK(r.runs[0].max_mass_drift <= 1e-13);
  CHECK(r.runs[0].initial_energy < r.energy_v);
}

TEST_CASE("least squares recovers a line") {
  const auto f = tfilm::least_squares({0, 1, 2, 3}, {1, 3, 5, 7});
  CHECK(f.slope == doctest::Approx(2.0));
  CHECK(f.intercept == doctest::Approx(1.0));
  CHECK(f.r2 == doctest::Approx(1.0));
}

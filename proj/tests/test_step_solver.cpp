#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "tfilm/step_solver.hpp"

using tfilm::CellField;
using tfilm::FaceField;
using tfilm::Grid;
using tfilm::ModelParams;
using tfilm::MobilitySpec;
using tfilm::PotentialSpec;
using tfilm::StepParams;

namespace {

ModelParams biharmonic_model() {
  ModelParams m;
  m.alpha = 1.0;
  m.mobility = MobilitySpec::constant_one();
  m.potential = PotentialSpec::zero();
  m.sigma = 1e-3;
  return m;
}

CellField<> cosine(const Grid& g, double mean, double amp, int k) {
  CellField<> u(g.cells());
  for (tfilm::Index i = 0; i < g.cells(); ++i) {
    u[i] = mean + amp * std::cos(k * std::numbers::pi * g.cell_center(i) / g.length());
  }
  return u;
}

CellField<> random_positive(const Grid& g, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  CellField<> u(g.cells());
  // Smooth-ish: a few random cosine modes.
  u.setConstant(0.5 * (lo + hi));
  for (int k = 1; k <= 4; ++k) {
    const double c = 0.15 * (hi - lo) * (2 * d(rng) - lo - hi) / (hi - lo) / k;
    u += cosine(g, 0.0, c, k);
  }
  return u;
}

}  // namespace

TEST_CASE("smoothed power") {
  tfilm::SmoothedPower<double> sp{1.5, 1e-2};
  for (double s = -3; s <= 3; s += 0.01) {
    CHECK(std::abs(sp.value(s) - std::pow(std::abs(s), 1.5)) <= std::pow(1e-2, 1.5) + 1e-15);
    const double fd = (sp.value(s + 1e-6) - sp.value(s - 1e-6)) / 2e-6;
    CHECK(fd == doctest::Approx(sp.d1(s)).epsilon(1e-5).scale(1.0));
    CHECK(sp.difference(s, 0.1) == doctest::Approx(sp.value(s + 0.1) - sp.value(s)).scale(1.0));
  }
  tfilm::SmoothedPower<double> quad{2.0, 0.0};
  CHECK(quad.value(-3.0) == doctest::Approx(9.0));
  CHECK(quad.d2(0.0) == 2.0);
  CHECK(quad.difference(0.0, 2.0) == doctest::Approx(4.0));
}

TEST_CASE("reduced objective") {
  Grid g(1.0, 16);
  ModelParams m = biharmonic_model();
  StepParams sp;
  sp.h = 1e-3;
  const CellField<> u = cosine(g, 1.0, 0.2, 1);
  const FaceField<> zero = FaceField<>::Zero(17);
  const auto e = tfilm::energy(g, u, m.modified_potential());
  CHECK(tfilm::reduced_objective(g, zero, u, m, sp, 0.0).value() == e.total.value());

  FaceField<> j = zero;
  for (int f = 1; f < 16; ++f) j[f] = std::sin(f * 0.3);
  const CellField<> uj = u - sp.h * tfilm::divergence(g, j);
  const double expected = tfilm::energy(g, uj, m.modified_potential()).total.value() +
                          sp.h * 0.5 * tfilm::integrate_faces(g, j.cwiseProduct(j));
  CHECK(tfilm::reduced_objective(g, j, u, m, sp, 0.0).value() == doctest::Approx(expected));

  CHECK(tfilm::reduced_objective(g, FaceField<>(1e6 * j), u, m, sp, 0.0).is_infinite());
  CHECK_THROWS_AS(tfilm::reduced_objective(g, zero, CellField<>(CellField<>::Zero(16)), m, sp, 0.0),
                  tfilm::PreconditionError);
}

TEST_CASE("objective derivatives match finite differences") {
  Grid g(1.0, 24);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (double alpha : {0.5, 1.0, 2.0}) {
    ModelParams m;
    m.alpha = alpha;
    m.mobility = MobilitySpec::power(2.0);
    m.potential = PotentialSpec::quadratic(1.0);
    m.sigma = 0.2;
    const CellField<> u = cosine(g, 0.5, 0.2, 2);
    tfilm::StepObjective<double> obj(g, u, m, 1e-3);
    obj.set_smoothing(0.05);
    FaceField<> j = FaceField<>::Zero(25);
    for (int f = 1; f < 24; ++f) j[f] = 0.3 * d(rng);

    const FaceField<> grad = obj.gradient_at(j);
    const auto hess = obj.hessian_at(j);
    const double scale = obj.h() * g.dx();
    for (int f = 1; f < 24; f += 3) {
      const double step = 1e-5;
      FaceField<> e = FaceField<>::Zero(25);
      e[f] = step;
      const double fd = (obj.change(j, e).value() - obj.change(j, FaceField<>(-e)).value()) /
                        (2 * step * scale);
      CHECK(fd == doctest::Approx(grad[f]).epsilon(1e-5).scale(1.0));

      const FaceField<> gp = obj.gradient_at(FaceField<>(j + e));
      const FaceField<> gm = obj.gradient_at(FaceField<>(j - e));
      for (int k = std::max(1, f - 2); k <= std::min(23, f + 2); ++k) {
        const double h_fd = (gp[k] - gm[k]) / (2 * step);
        CHECK(h_fd == doctest::Approx(hess.at(k - 1, f - 1)).epsilon(1e-5).scale(1.0));
      }
    }

    // Cancellation-free change agrees with direct subtraction.
    FaceField<> s = FaceField<>::Zero(25);
    for (int f = 1; f < 24; ++f) s[f] = 0.01 * d(rng);
    CHECK(obj.change(j, s).value() ==
          doctest::Approx(obj.value(j + s).value() - obj.value(j).value()).epsilon(1e-8));
  }
}

TEST_CASE("constant height is a fixed point") {
  Grid g(1.0, 32);
  for (double alpha : {0.5, 1.0, 2.0}) {
    ModelParams m;
    m.alpha = alpha;
    m.mobility = MobilitySpec::power(3.0);
    m.potential = PotentialSpec::quadratic(1.0);
    m.sigma = 0.01;
    StepParams sp;
    const CellField<> u = CellField<>::Constant(32, 0.7);
    const auto res = tfilm::solve_step(g, u, m, sp);
    CHECK(res.newton_iters == 0);
    CHECK(res.j.isZero(0.0));
    CHECK(res.u_next == u);
    CHECK(res.el_residual_norm == 0.0);
  }
}

TEST_CASE("biharmonic oracle") {
  Grid g(1.0, 64);
  const ModelParams m = biharmonic_model();
  StepParams sp;
  sp.h = 1e-4;
  sp.tol_grad = 1e-10;
  const int k = 2;
  const double lambda = (2 - 2 * std::cos(k * std::numbers::pi / 64)) / (g.dx() * g.dx());
  const double amp = 0.3;
  const auto res = tfilm::solve_step(g, cosine(g, 1.0, amp, k), m, sp);
  const CellField<> expected = cosine(g, 1.0, amp / (1 + sp.h * lambda * lambda), k);
  CHECK((res.u_next - expected).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(res.el_residual_norm < 1e-9);
}

TEST_CASE("step invariants on random data") {
  std::mt19937_64 rng(8);
  Grid g(1.0, 48);
  for (double alpha : {0.5, 1.0, 2.0}) {
    for (double n : {1.0, 2.0, 3.0}) {
      ModelParams m;
      m.alpha = alpha;
      m.mobility = MobilitySpec::power(n);
      m.potential = PotentialSpec::quadratic(0.5);
      m.sigma = 0.02;
      StepParams sp;
      sp.h = 1e-4;
      sp.tol_grad = 1e-8;
      const CellField<> u = random_positive(g, rng, 0.2, 1.0);
      const auto res = tfilm::solve_step(g, u, m, sp);
      const double mass0 = tfilm::integrate(g, u);
      CHECK(std::abs(tfilm::integrate(g, res.u_next) - mass0) <= 1e-14 * mass0);
      CHECK(res.j[0] == 0.0);
      CHECK(res.j[48] == 0.0);
      CHECK(res.u_next.minCoeff() > 0.0);
      CHECK(res.objective_end <= res.objective_at_rest);
      for (double c : res.accepted_changes) CHECK(c <= 0.0);

      double smoothed = 0.0;
      {
        tfilm::StepObjective<double> obj(g, u, m, sp.h);
        obj.set_smoothing(tfilm::dissipation_exponent(alpha) < 2 ? sp.eps_min : 0.0);
        smoothed = obj.dissipation(res.j);
      }
      const double slack = res.energy_before - res.energy_after - sp.h * smoothed;
      CHECK(slack >= -sp.audit_tolerance(alpha, 1.0));

      const double p = tfilm::dissipation_exponent(alpha);
      CHECK(res.el_residual_norm <= 100 * (sp.tol_grad + std::pow(sp.eps_min, p - 1)));

      // Uniqueness: start from a random feasible flux.
      FaceField<> j0 = FaceField<>::Zero(49);
      std::uniform_real_distribution<double> d(-1.0, 1.0);
      for (int f = 1; f < 48; ++f) j0[f] = 10.0 * d(rng);
      const auto again = tfilm::solve_step(g, u, m, sp, std::optional<FaceField<>>(j0));
      CHECK((again.j - res.j).cwiseAbs().maxCoeff() <= 10 * sp.tol_grad);
    }
  }
}

TEST_CASE("tightening tol_grad reduces the EL residual") {
  Grid g(1.0, 32);
  ModelParams m;
  m.alpha = 1.0;
  m.mobility = MobilitySpec::power(2.0);
  m.potential = PotentialSpec::zero();
  m.sigma = 0.01;
  const CellField<> u = cosine(g, 0.6, 0.3, 1);
  double previous = INFINITY;
  for (double tol : {1e-2, 1e-3, 1e-4, 1e-5}) {
    StepParams sp;
    sp.h = 1e-3;
    sp.tol_grad = tol;
    const auto res = tfilm::solve_step(g, u, m, sp);
    CHECK(res.el_residual_norm <= previous);
    previous = res.el_residual_norm;
  }
}

TEST_CASE("parameter validation") {
  StepParams sp;
  sp.h = 0.0;
  CHECK_THROWS_AS(sp.validate(), tfilm::ParameterError);
  sp = StepParams{};
  sp.eps_min = 2 * sp.eps0;
  CHECK_THROWS_AS(sp.validate(), tfilm::ParameterError);
  sp = StepParams{};
  sp.max_newton = 1;
  Grid g(1.0, 16);
  ModelParams m;
  m.alpha = 0.5;
  CHECK_THROWS_AS(tfilm::solve_step(g, cosine(g, 1.0, 0.5, 1), m, sp),
                  tfilm::NonConvergenceError);
}

#include <doctest.h>

#include <cmath>
#include <random>

#include "tfilm/models.hpp"

using tfilm::CellField;
using tfilm::Grid;
using tfilm::MobilitySpec;
using tfilm::ModifiedPotential;
using tfilm::PotentialSpec;

TEST_CASE("mobility") {
  Grid g(1.0, 8);
  const auto cube = MobilitySpec::power(3.0);
  const auto face = tfilm::mobility_face(cube, CellField<>::Constant(8, 2.0), g);
  for (int f = 1; f < 8; ++f) CHECK(face[f] == doctest::Approx(8.0));

  CellField<> u = CellField<>::Constant(8, 1.0);
  u[3] = -3.0;
  const auto cut = tfilm::mobility_face(cube, u, g);
  CHECK(cut[3] == 0.0);
  CHECK(cut[4] == 0.0);
  CHECK(cut[2] == doctest::Approx(1.0));

  const auto one = tfilm::mobility_face(MobilitySpec::constant_one(), u, g);
  CHECK(one.isOnes(0.0));

  const auto slip = MobilitySpec::navier_slip(0.5, 2.0);
  CHECK(slip(2.0) == doctest::Approx(0.5 * 8.0 + 16.0));
  CHECK(slip(-1.0) == 0.0);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> d(1e-3, 2.0);
  for (auto& x : u) x = d(rng);
  const auto pos = tfilm::mobility_face(cube, u, g);
  for (int f = 1; f < 8; ++f) CHECK(pos[f] > 0.0);

  CHECK_THROWS_AS(MobilitySpec::power(0.0), tfilm::ParameterError);
}

TEST_CASE("modified potential glue") {
  const double sigma = 0.05;
  ModifiedPotential<> gs(PotentialSpec::zero(), sigma);
  CHECK(gs.value(3 * sigma) == 0.0);

  // Closed forms at the knot.
  const double s = 2 * sigma;
  const double a = -3.0 / (16 * sigma * sigma), b = 1.0 / sigma, c = -1.5;
  CHECK(std::abs(sigma * sigma / (s * s) + a * s * s + b * s + c) < 1e-14);
  CHECK(std::abs(-2 * sigma * sigma / (s * s * s) + 2 * a * s + b) < 1e-12);
  CHECK(std::abs(6 * sigma * sigma / (s * s * s * s) + 2 * a) < 1e-10);
  CHECK(gs.glue_a() == doctest::Approx(a));

  for (double t : {1e-3, 1e-4, 1e-6}) {
    const double x = t * sigma;
    CHECK(gs.value(x) * x * x / (sigma * sigma) == doctest::Approx(1.0).epsilon(2 * t));
  }

  CHECK_THROWS_WITH_AS(ModifiedPotential<>(PotentialSpec::zero(), 1.5),
                       "sigma must be in (0,1)", tfilm::ParameterError);
  CHECK_THROWS_AS(ModifiedPotential<>(PotentialSpec::zero(), 0.0), tfilm::ParameterError);
}

TEST_CASE("modified potential properties") {
  for (const auto& base : {PotentialSpec::zero(), PotentialSpec::quadratic(2.0),
                           PotentialSpec::strong_singular(1e-3)}) {
    const double sigma = 0.1;
    ModifiedPotential<> gs(base, sigma);
    CHECK(gs(0.0).is_infinite());
    CHECK(gs(-1.0).is_infinite());
    CHECK(gs(1.0).is_finite());

    for (double s = 1e-3; s < 10.0; s *= 1.07) {
      CHECK(gs.d2(s) >= 0.0);
      const double fd = (gs.d1(s * (1 + 1e-6)) - gs.d1(s * (1 - 1e-6))) / (2e-6 * s);
      CHECK(fd == doctest::Approx(gs.d2(s)).epsilon(1e-5).scale(1.0));
      CHECK(gs.difference(s, 0.3 * s) ==
            doctest::Approx(gs.value(1.3 * s) - gs.value(s)).epsilon(1e-10).scale(1.0));
    }
    for (double s = sigma; s < 2 * sigma; s *= 1.01) {
      CHECK(gs.value(s) >= sigma * sigma / (s * s) - 1.5 + base.value(s) - 1e-14);
    }
    for (double s = 1e-3; s <= sigma; s *= 1.1) {
      CHECK(gs.value(s) >= 0.25 * sigma * sigma / (s * s));
    }
    for (double s = 2 * sigma; s < 5.0; s *= 1.3) {
      CHECK(gs.value(s) == doctest::Approx(base.value(s)));
    }

    const double k = 2 * sigma;
    const double lo = std::nextafter(k, 0.0);
    CHECK(gs.value(lo) == doctest::Approx(gs.value(k)).epsilon(1e-12).scale(1.0));
    CHECK(gs.d1(lo) == doctest::Approx(gs.d1(k)).epsilon(1e-12).scale(1.0));
  }
}

TEST_CASE("psi") {
  CHECK(tfilm::psi(1.0, -2.5) == -2.5);
  CHECK(tfilm::psi(2.0, -3.0) == doctest::Approx(-9.0));
  CHECK(tfilm::psi(0.5, 0.0) == 0.0);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(-5.0, 5.0);
  for (double a : {0.5, 1.0, 2.0}) {
    for (int i = 0; i < 50; ++i) {
      const double s = d(rng);
      CHECK(tfilm::psi_inverse(a, tfilm::psi(a, s)) == doctest::Approx(s).epsilon(1e-13));
    }
  }
}

TEST_CASE("energy") {
  Grid g(1.0, 64);
  ModifiedPotential<> gs(PotentialSpec::zero(), 0.01);
  const auto flat = tfilm::energy(g, CellField<>::Constant(64, 1.0), gs);
  CHECK(flat.total.value() == 0.0);

  CellField<> u = CellField<>::Constant(64, 1.0);
  u[10] = 0.0;
  CHECK(tfilm::energy(g, u, gs).total.is_infinite());

  // Dirichlet energy of (3/2)(1 - x^2) approaches (1/2) int 9 x^2 = 3/2.
  double previous_error = 1.0;
  for (int n : {64, 256, 1024}) {
    Grid gn(1.0, n);
    CellField<> v(n);
    for (int i = 0; i < n; ++i) {
      const double x = gn.cell_center(i);
      v[i] = 1.5 * (1 - x * x) + 0.5;
    }
    const double err = std::abs(tfilm::energy(gn, v, gs).dirichlet - 1.5);
    CHECK(err < previous_error);
    previous_error = err;
  }
  CHECK(previous_error < 1e-2);

  // Shift invariance above the knot when G = 0.
  CellField<> w(64);
  for (int i = 0; i < 64; ++i) w[i] = 0.5 + 0.3 * std::sin(3 * g.cell_center(i));
  CHECK(tfilm::energy(g, w, gs).total.value() ==
        doctest::Approx(tfilm::energy(g, CellField<>(w.array() + 0.7), gs).total.value()));
}

TEST_CASE("extended ordering") {
  using E = tfilm::Extended<double>;
  CHECK(E(1.0) < E::infinity());
  CHECK_FALSE(E::infinity() < E::infinity());
  CHECK(E::infinity() == E::infinity());
  CHECK((E(1.0) + E::infinity()).is_infinite());
  CHECK(E(2.0) > E(1.0));
  CHECK_THROWS_AS(E::infinity().value(), tfilm::PreconditionError);
}

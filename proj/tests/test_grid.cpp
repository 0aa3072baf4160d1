#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "tfilm/grid.hpp"

using tfilm::CellField;
using tfilm::FaceField;
using tfilm::Grid;

namespace {

FaceField<> random_flux(const Grid& g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  FaceField<> j = FaceField<>::Zero(g.faces());
  for (tfilm::Index f = 1; f < g.cells(); ++f) j[f] = d(rng);
  return j;
}

CellField<> random_cells(const Grid& g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  CellField<> u(g.cells());
  for (auto& x : u) x = d(rng);
  return u;
}

}  // namespace

TEST_CASE("grid geometry") {
  Grid g(2.0, 8);
  CHECK(g.dx() == doctest::Approx(0.25));
  CHECK(g.faces() == 9);
  CHECK(g.cell_center(0) == doctest::Approx(0.125));
  CHECK(g.face_position(8) == doctest::Approx(2.0));
  CHECK_THROWS_AS(Grid(1.0, 3), tfilm::ParameterError);
  CHECK_THROWS_AS(Grid(0.0, 8), tfilm::ParameterError);
}

TEST_CASE("divergence") {
  Grid g(1.0, 4);
  CHECK(tfilm::divergence(g, FaceField<>::Zero(5)).isZero(0.0));

  FaceField<> j(5);
  j << 0, 1, 1, 1, 0;
  CellField<> expected(4);
  expected << 4, 0, 0, -4;
  CHECK(tfilm::divergence(g, j) == expected);

  CHECK_THROWS_AS(tfilm::divergence(g, FaceField<>::Zero(4)), tfilm::StructureError);

  std::mt19937_64 rng(1);
  Grid big(1.0, 200);
  for (int trial = 0; trial < 20; ++trial) {
    const FaceField<> r = random_flux(big, rng);
    CHECK(std::abs(tfilm::integrate(big, tfilm::divergence(big, r))) < 1e-13);
  }
}

TEST_CASE("gradient") {
  Grid g(1.0, 4);
  CHECK(tfilm::gradient(g, CellField<>::Constant(4, 3.0)).isZero(0.0));

  const FaceField<> lin = tfilm::gradient(g, g.cell_centers());
  CHECK(lin[0] == 0.0);
  CHECK(lin[4] == 0.0);
  for (int f = 1; f < 4; ++f) CHECK(lin[f] == doctest::Approx(1.0));

  std::mt19937_64 rng(2);
  Grid big(1.7, 150);
  for (int trial = 0; trial < 20; ++trial) {
    const CellField<> u = random_cells(big, rng);
    const FaceField<> j = random_flux(big, rng);
    const double lhs = tfilm::integrate_faces(big, tfilm::gradient(big, u).cwiseProduct(j));
    const double rhs = -tfilm::integrate(big, u.cwiseProduct(tfilm::divergence(big, j)));
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("laplacian") {
  Grid g(1.0, 32);
  CHECK(tfilm::laplacian_neumann(g, CellField<>::Constant(32, -2.0)).isZero(0.0));

  const double pi = std::numbers::pi;
  for (int k : {1, 2, 5, 31}) {
    CellField<> u(32);
    for (int i = 0; i < 32; ++i) u[i] = std::cos(k * pi * g.cell_center(i) / g.length());
    const double lambda = (2.0 - 2.0 * std::cos(k * pi / 32)) / (g.dx() * g.dx());
    const CellField<> lu = tfilm::laplacian_neumann(g, u);
    CHECK((lu + lambda * u).cwiseAbs().maxCoeff() < 1e-9 * lambda);
  }

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const CellField<> u = random_cells(g, rng);
    const CellField<> w = random_cells(g, rng);
    const double a = tfilm::integrate(g, tfilm::laplacian_neumann(g, u).cwiseProduct(w));
    const double b = tfilm::integrate(g, u.cwiseProduct(tfilm::laplacian_neumann(g, w)));
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
    CHECK(tfilm::integrate(g, tfilm::laplacian_neumann(g, u).cwiseProduct(u)) <= 0.0);
  }
}

TEST_CASE("integrate") {
  Grid g(1.0, 16);
  CHECK(tfilm::integrate(g, CellField<>::Constant(16, 2.0)) == doctest::Approx(2.0));
  CHECK(tfilm::integrate(g, CellField<>::Zero(16)) == 0.0);
  CHECK(tfilm::integrate(g, g.cell_centers()) == doctest::Approx(0.5).epsilon(1e-15));
}

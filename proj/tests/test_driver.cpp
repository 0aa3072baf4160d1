#include <doctest.h>

#include <cmath>
#include <numbers>

#include "tfilm/driver.hpp"

using tfilm::CellField;
using tfilm::Grid;
using tfilm::InitialDataSpec;
using tfilm::MobilitySpec;
using tfilm::PotentialSpec;
using tfilm::RunConfig;

namespace {

RunConfig small_config() {
  RunConfig cfg;
  cfg.grid = Grid(1.0, 32);
  cfg.model.alpha = 1.0;
  cfg.model.mobility = MobilitySpec::power(2.0);
  cfg.model.potential = PotentialSpec::zero();
  cfg.model.sigma = 0.01;
  cfg.step.h = 1e-4;
  cfg.step.tol_grad = 1e-9;
  cfg.T = 2e-3;
  cfg.record_every = 5;
  cfg.initial = InitialDataSpec::cosine(0.6, 0.3, 1);
  return cfg;
}

}  // namespace

TEST_CASE("constant run") {
  RunConfig cfg = small_config();
  cfg.initial = InitialDataSpec::constant(0.8);
  const auto ts = tfilm::run(cfg);
  CHECK(ts.diagnostics.size() == static_cast<size_t>(cfg.steps()) + 1);
  for (const auto& d : ts.diagnostics) {
    CHECK(d.E_total == ts.diagnostics[0].E_total);
    CHECK(d.diss_flux == 0.0);
  }
  const auto audit = tfilm::audit_ede(ts, 0, cfg.steps());
  CHECK(audit.balance == 0.0);
  CHECK(audit.equality_defect == 0.0);
  CHECK(tfilm::holder_quotient(ts, 1.0) == 0.0);
}

TEST_CASE("run invariants") {
  RunConfig cfg = small_config();
  cfg.initial = InitialDataSpec::random(0.7, 0.5, 6, 42);
  const auto ts = tfilm::run(cfg);
  CHECK(ts.edi_violations == 0);
  const double m0 = ts.diagnostics[0].mass;
  for (size_t k = 1; k < ts.diagnostics.size(); ++k) {
    const auto& d = ts.diagnostics[k];
    CHECK(std::abs(d.mass - m0) <= 1e-13 * m0);
    CHECK(d.E_total <= ts.diagnostics[k - 1].E_total);
    CHECK(d.min_u > 0.0);
    CHECK(d.bregman >= 0.0);
    CHECK(d.t > ts.diagnostics[k - 1].t);
  }
  CHECK(ts.snapshots.front().step == 0);
  CHECK(ts.snapshots.back().step == cfg.steps());
  const auto audit = tfilm::audit_ede(ts, 0, cfg.steps());
  CHECK(audit.inequality_holds);
  CHECK_THROWS_AS(tfilm::audit_ede(ts, 3, 3), tfilm::StructureError);
}

TEST_CASE("biharmonic energy follows the modal factor") {
  RunConfig cfg;
  cfg.grid = Grid(1.0, 64);
  cfg.model.alpha = 1.0;
  cfg.model.mobility = MobilitySpec::constant_one();
  cfg.model.sigma = 1e-3;
  cfg.step.h = 1e-4;
  cfg.step.tol_grad = 1e-10;
  cfg.T = 20 * cfg.step.h;
  cfg.initial = InitialDataSpec::cosine(1.0, 0.2, 2);
  const auto ts = tfilm::run(cfg);
  const double lambda = (2 - 2 * std::cos(2 * std::numbers::pi / 64)) * 64 * 64;
  const double factor = 1.0 / (1 + cfg.step.h * lambda * lambda);
  for (size_t k = 1; k < ts.diagnostics.size(); ++k) {
    CHECK(ts.diagnostics[k].E_dirichlet ==
          doctest::Approx(ts.diagnostics[0].E_dirichlet * std::pow(factor, 2.0 * k))
              .epsilon(1e-9));
  }
}

TEST_CASE("equality defect shrinks with smoothing and tolerance") {
  RunConfig cfg = small_config();
  cfg.model.alpha = 2.0;
  cfg.step.eps0 = 1e-1;
  cfg.step.tol_grad = 1e-5;
  cfg.step.eps_min = 1e-3;
  const auto coarse = tfilm::audit_ede(tfilm::run(cfg), 0, cfg.steps());
  cfg.step.tol_grad /= 2;
  cfg.step.eps_min /= 2;
  const auto fine = tfilm::audit_ede(tfilm::run(cfg), 0, cfg.steps());
  CHECK(std::abs(fine.equality_defect) < std::abs(coarse.equality_defect));
}

TEST_CASE("parallel map keeps order") {
  std::vector<int> items(37);
  for (int i = 0; i < 37; ++i) items[static_cast<size_t>(i)] = i;
  const auto out = tfilm::parallel_map(items, [](int x) { return x * x; }, 4);
  for (int i = 0; i < 37; ++i) CHECK(out[static_cast<size_t>(i)] == i * i);
  CHECK_THROWS_AS(tfilm::parallel_map(items,
                                      [](int x) -> int {
                                        if (x == 5) throw tfilm::Error("boom");
                                        return x;
                                      },
                                      3),
                  tfilm::Error);
}

TEST_CASE("sigma continuation") {
  RunConfig cfg = small_config();
  cfg.grid = Grid(1.0, 32);
  const CellField<double> u0 = InitialDataSpec::cosine(0.6, 0.3, 1).build(cfg.grid);
  const auto one = tfilm::sigma_continuation(u0, {0.01}, cfg);
  CHECK(one.runs.size() == 1);
  CHECK(one.sup_distances.empty());

  const auto rep = tfilm::sigma_continuation(u0, {0.04, 0.02, 0.01}, cfg, 2);
  CHECK(rep.all_positive);
  CHECK(rep.limit_edi_holds);
  CHECK(rep.sup_distances.size() == 2);
  CHECK(rep.distances_decrease);
}

TEST_CASE("initial data") {
  Grid g(1.0, 100);
  const auto v = InitialDataSpec::parabola(1.0).build(g);
  CHECK(tfilm::integrate(g, v) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(v[99] < 0.02);
  CHECK_THROWS_AS(InitialDataSpec::parabola(1.0).build(Grid(2.0, 10)), tfilm::ParameterError);
  const auto r = InitialDataSpec::random(1.0, 0.5, 5, 3).build(g);
  CHECK(r.minCoeff() >= 0.5 - 1e-12);
  CHECK(r == InitialDataSpec::random(1.0, 0.5, 5, 3).build(g));
}

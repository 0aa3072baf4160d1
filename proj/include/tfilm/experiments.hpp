#pragma once

// Lift-off, the energy-versus-minimum bound, dissipation scaling of the w_l
// family, the Hamiltonian point lemma, decay rates and the Benamou-Brenier
// action of concentrating paths.

#include <limits>
#include <string>
#include <vector>

#include "tfilm/driver.hpp"

namespace tfilm {

/// (3M/2)(1 - x^2) at the cell centres of a grid on (0, 1).
struct ParabolaProfile {
  CellField<double> v;
  double mass = 0.0;
  /// Discrete int |v'|^2 (twice the Dirichlet energy).
  double gradient_norm_sq = 0.0;
  /// The constant 9 M^2 / 2 quoted for int |v'|^2; reported, not used.
  double nominal_E0 = 0.0;
};

ParabolaProfile build_parabola_v(double M, const Grid& g);

// ---------------------------------------------------------------------------

struct LiftoffRun {
  double delta = 0.0;
  double initial_energy = 0.0;
  bool reached = false;
  /// First recorded time with min_u >= M/2 (infinity if never).
  double t_half = std::numeric_limits<double>::infinity();
  /// Smallest min_u after t_half.
  double min_after_half = std::numeric_limits<double>::quiet_NaN();
  bool stays_above = false;
  /// max_k |mass_k - mass_0| / mass_0 over the run.
  double max_mass_drift = 0.0;
  std::vector<double> t;
  std::vector<double> min_u;
};

struct LiftoffReport {
  double M = 1.0;
  double n = 2.0;
  double alpha = 1.0;
  double sigma = 0.0;
  /// Dirichlet energy of v on the run grid (the operative threshold).
  double energy_v = 0.0;
  double nominal_E0 = 0.0;
  std::vector<LiftoffRun> runs;
  double t0_hat = std::numeric_limits<double>::infinity();
  double median_t_half = std::numeric_limits<double>::infinity();
  bool energies_below_threshold = true;
  bool all_reached = false;
  bool all_stay_above = false;
  bool uniform = false;

  bool passed() const {
    return energies_below_threshold && all_reached && all_stay_above && uniform;
  }
};

/// Runs the scheme from delta + (1 - delta/M) v for each delta. The template
/// supplies grid, step parameters and T; mobility becomes u^n, G = 0 and
/// sigma = min(delta)/10.
LiftoffReport liftoff_sweep(const std::vector<double>& deltas, double M, double n,
                            double alpha, const RunConfig& tmpl, int threads = 1,
                            double return_tolerance = 1e-3);

// ---------------------------------------------------------------------------

/// w_l'' = -1 + (1/l)(1 - |x - 1/2|/l)_+ with w(1/2) = w'(1/2) = 0.
double w_l_second(double l, double x);
double w_l_first(double l, double x);
double w_l_value(double l, double x);

struct WLProfile {
  double l = 0.5;
  CellField<double> w;
  double beta = 0.0;
  double slope_left = 0.0;
  double slope_right = 0.0;
  double min_value = 0.0;
};

WLProfile build_w_l(double l, const Grid& g);

struct DissipationScalingReport {
  double M = 1.0;
  double n = 2.0;
  double alpha = 1.0;
  Index cells = 0;
  std::vector<double> deltas;
  std::vector<double> dissipation;
  std::vector<double> lower_profile;
  double target_exponent = 0.0;
  double slope = 0.0;
  double r2 = 0.0;
  int fit_points = 0;
  /// min over the sweep of D / f; the bound D >= c f holds with this c.
  double c_lower = 0.0;
  bool lower_bound_holds = false;

  bool slope_within(double tol) const { return std::abs(slope - target_exponent) <= tol; }
};

/// int u^n |u'''|^{a+1} dx for u_delta = delta + (M - delta) w_delta / beta.
double bump_dissipation(double delta, double M, double n, double alpha, const Grid& g);

/// Refuses (ParameterError naming the required N) unless N >= 32 / min(delta).
DissipationScalingReport dissipation_scaling_fit(const std::vector<double>& deltas,
                                                 double M, double n, double alpha,
                                                 const Grid& g);

// ---------------------------------------------------------------------------

struct PointWitness {
  bool found = false;
  bool trivial = false;
  Index cell = -1;
  double x0 = 0.0;
  double min_u = 0.0;
  double max_u = 0.0;
  double slope_bound = 0.0;
  double curvature_bound = 0.0;
  double tol_fd = 0.0;
  double slope_at_witness = 0.0;
  double curvature_at_witness = 0.0;
  CellField<double> hamiltonian;
};

PointWitness point_lemma_check(const CellField<double>& u, const Grid& g);

/// Discrete int |u'|^2 against (1 - delta/M)^2 int |v'|^2.
struct EnergyMinCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;
  bool holds = false;
};

EnergyMinCheck energy_vs_min_check(const CellField<double>& u, const Grid& g);

/// M + a truncated cosine series, shifted to a prescribed minimum.
CellField<double> random_neumann_profile(const Grid& g, std::mt19937_64& rng,
                                         int modes, double min_value);

// ---------------------------------------------------------------------------

enum class DecayClass { exponential, algebraic, finite_time, inconclusive };

std::string to_string(DecayClass c);

struct RateReport {
  DecayClass classification = DecayClass::inconclusive;
  /// exponential: -d log E / dt; algebraic: d log E / d log t.
  double rate = 0.0;
  double r2 = 0.0;
  double r2_exponential = 0.0;
  double r2_algebraic = 0.0;
  double window_start = 0.0;
  double window_end = 0.0;
  int window_points = 0;
  double t_extinct = std::numeric_limits<double>::infinity();
  bool stays_extinct = false;
  std::string note;
};

struct RateOptions {
  double tail_start_fraction = 0.25;
  double tol_extinct = 1e-10;
  double noise_floor = 1e-28;
  int min_points = 8;
};

RateReport rate_fit(const TimeSeries<double>& series, double alpha,
                    const RateOptions& opt = {});

/// Decay rate of the energy of mode k under the linear scheme (alpha = 1,
/// unit mobility, G = 0): each step multiplies it by (1 + h lambda_k^2)^{-2}.
double modal_energy_rate(const Grid& g, int k, double h);

// ---------------------------------------------------------------------------

struct BBActionReport {
  double eta = 0.125;
  double n = 2.0;
  double alpha = 1.0;
  Index cells = 0;
  double delta = 0.0;
  double mass = 0.0;
  std::vector<double> M_sweep;
  std::vector<double> action;
  std::vector<double> stage1;
  std::vector<double> stage2;
  std::vector<double> stage3;
  /// Largest |d_t u + div j| seen (continuity equation of the path).
  double continuity_defect = 0.0;
  bool degeneracy_expected = true;
  /// u0 == u1: the report describes the constant path, not the construction.
  bool constant_path = false;
  bool monotone_decreasing = false;
  double final_over_initial = 0.0;
};

struct BBQuadrature {
  /// Panels of a 7-point Gauss rule per stage.
  int time_panels = 48;
};

BBActionReport bb_action_demo(const CellField<double>& u0, const CellField<double>& u1,
                              double eta, const std::vector<double>& M_sweep, double n,
                              double alpha, const Grid& g, const BBQuadrature& q = {},
                              int threads = 1);

// ---------------------------------------------------------------------------

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

LinearFit least_squares(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace tfilm

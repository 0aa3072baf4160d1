#pragma once

// Configuration files, output directories and the CSV / JSON / SVG artifacts
// written by the command-line tool.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tfilm/driver.hpp"
#include "tfilm/experiments.hpp"

namespace tfilm {

enum class Command {
  simulate,
  sweep_liftoff,
  dissipation_bound,
  bb_action,
  rates,
  audit_ede,
  point_lemma
};

std::string to_string(Command c);
/// Throws ParameterError for an unknown name.
Command parse_command(const std::string& name);
const std::vector<Command>& all_commands();

struct LiftoffSettings {
  double M = 1.0;
  double n = 2.0;
  std::vector<double> deltas{1e-1, 1e-2, 1e-3};
  double return_tolerance = 1e-3;
};

struct DissipationSettings {
  double M = 1.0;
  /// (n, alpha) pairs.
  std::vector<std::pair<double, double>> cases{{2.0, 1.0}, {3.0, 1.0}, {2.0, 2.0}};
  /// Empty means 10^{-1 - k/4}, k = 0..8.
  std::vector<double> deltas;
  double slope_tolerance = 0.15;
};

struct BBSettings {
  double eta = 0.125;
  double n = 2.0;
  std::vector<double> M_sweep{2.0, 4.0, 8.0, 16.0, 32.0};
  InitialDataSpec u0 = InitialDataSpec::bump(0.02, 40.0, 0.0625, 0.01);
  InitialDataSpec u1 = InitialDataSpec::bump(0.02, 40.0, 0.9375, 0.01);
  int time_panels = 48;
  /// Required action(last) / action(first) when degeneracy is expected.
  double max_ratio = 0.2;
};

struct RatesSettings {
  /// Empty means the run's own alpha.
  std::vector<double> alphas;
  RateOptions options;
  double min_r2_exponential = 0.99;
  double min_r2_algebraic = 0.98;
};

struct AuditSettings {
  /// Row windows [s, t]; empty means the whole run.
  std::vector<std::pair<int, int>> windows;
};

struct PointLemmaSettings {
  int profiles = 50;
  int modes = 6;
  double min_low = 0.01;
  double min_high = 0.51;
};

/// Everything a command can read from a configuration file. The run part
/// is shared; each command reads its own section and ignores the others.
struct ExperimentConfig {
  RunConfig run;
  std::uint64_t seed = 0;
  LiftoffSettings liftoff;
  DissipationSettings dissipation;
  BBSettings bb;
  RatesSettings rates;
  AuditSettings audit;
  PointLemmaSettings point_lemma;
  /// Which optional sections were present in the file.
  bool has_liftoff = false;
  bool has_dissipation = false;
  bool has_bb = false;
  bool has_rates = false;
  bool has_audit = false;
  bool has_point_lemma = false;

  /// Throws ParameterError naming the field and the violated bound.
  void validate() const;
};

/// Parses and validates. Syntax errors and unknown keys raise ConfigError
/// (with line and column for syntax errors); bad values raise ParameterError.
ExperimentConfig parse_config_text(const std::string& text,
                                   const std::string& origin = "<config>");
ExperimentConfig parse_config(const std::filesystem::path& path);

nlohmann::json to_json(const ExperimentConfig& cfg);
nlohmann::json to_json(const InitialDataSpec& s);
nlohmann::json to_json(const StepDiagnostics& d);

/// JSON Schema (draft 2020-12) of the configuration format.
nlohmann::json config_schema();

/// %.17g: reads back to exactly the same double.
std::string format_double(double v);

/// Holds `<dir>/.tfilm.lock` for its lifetime; a second lock on the same
/// directory fails with IoError.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

  const std::filesystem::path& path() const { return lock_; }

 private:
  std::filesystem::path lock_;
};

inline constexpr const char* kDiagnosticsHeader =
    "t,mass,min_u,max_u,E_dirichlet,E_potential,E_total,diss_flux,diss_strong,"
    "ede_slack,el_residual,newton_iters";

void write_diagnostics_csv(const std::vector<StepDiagnostics>& rows,
                           const std::filesystem::path& file);

/// File name stem of a snapshot: u_t followed by t with ten decimals.
std::string snapshot_name(double t);

struct SvgSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// A line plot with axes and tick labels; log_y plots log10 of positive
/// values and drops the rest.
std::string svg_line_plot(const std::vector<SvgSeries>& series, const std::string& title,
                          const std::string& xlabel, const std::string& ylabel,
                          bool log_y = false);

/// diagnostics.csv, one u_t<stamp>.csv per snapshot, energy.svg, minu.svg
/// and summary.json (config echo, tolerances and `verdicts`).
void write_timeseries(const TimeSeries<double>& series, const std::filesystem::path& dir,
                      const nlohmann::json& config_echo, const nlohmann::json& verdicts);

void write_text(const std::filesystem::path& file, const std::string& text);
void write_json(const std::filesystem::path& file, const nlohmann::json& j);

}  // namespace tfilm

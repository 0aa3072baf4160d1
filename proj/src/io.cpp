#include "tfilm/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <fcntl.h>
#include <unistd.h>

namespace tfilm {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::vector<std::pair<Command, std::string>>& command_names() {
  static const std::vector<std::pair<Command, std::string>> names{
      {Command::simulate, "simulate"},
      {Command::sweep_liftoff, "sweep-liftoff"},
      {Command::dissipation_bound, "dissipation-bound"},
      {Command::bb_action, "bb-action"},
      {Command::rates, "rates"},
      {Command::audit_ede, "audit-ede"},
      {Command::point_lemma, "point-lemma"},
  };
  return names;
}

// --- reading helpers -------------------------------------------------------

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& item : obj.items()) {
    if (!ok.count(item.key())) {
      throw ConfigError(where + ": unknown key '" + item.key() + "'");
    }
  }
}

std::string field(const std::string& where, const std::string& key) {
  return where.empty() ? key : where + "." + key;
}

double read_number(const json& obj, const char* key, double fallback,
                   const std::string& where) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(field(where, key) + ": expected a number");
  return v.get<double>();
}

long long read_integer(const json& obj, const char* key, long long fallback,
                       const std::string& where) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (v.is_number_integer() || v.is_number_unsigned()) return v.get<long long>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d == std::floor(d) && std::abs(d) < 9e15) return static_cast<long long>(d);
  }
  throw ConfigError(field(where, key) + ": expected an integer");
}

std::vector<double> read_numbers(const json& obj, const char* key,
                                 std::vector<double> fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_array()) throw ConfigError(field(where, key) + ": expected an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw ConfigError(field(where, key) + ": expected an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

std::string read_kind(const json& v, const std::string& where) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_object() && v.contains("kind") && v.at("kind").is_string()) {
    return v.at("kind").get<std::string>();
  }
  throw ConfigError(where + ": expected a name or an object with a 'kind'");
}

MobilitySpec read_mobility(const json& v, double alpha) {
  const std::string where = "mobility";
  const std::string kind = read_kind(v, where);
  const json obj = v.is_object() ? v : json::object();
  if (kind == "power") {
    check_keys(obj, {"kind", "n"}, where);
    if (!obj.contains("n")) throw ConfigError("mobility.n: required for power");
    return MobilitySpec::power(read_number(obj, "n", 0.0, where));
  }
  if (kind == "navier_slip") {
    check_keys(obj, {"kind", "lambda"}, where);
    if (!obj.contains("lambda")) throw ConfigError("mobility.lambda: required for navier_slip");
    return MobilitySpec::navier_slip(read_number(obj, "lambda", 0.0, where), alpha);
  }
  if (kind == "constant_one") {
    check_keys(obj, {"kind"}, where);
    return MobilitySpec::constant_one();
  }
  throw ConfigError("mobility.kind: unknown mobility '" + kind + "'");
}

PotentialSpec read_potential(const json& v) {
  const std::string where = "potential";
  const std::string kind = read_kind(v, where);
  const json obj = v.is_object() ? v : json::object();
  if (kind == "zero") {
    check_keys(obj, {"kind"}, where);
    return PotentialSpec::zero();
  }
  if (kind == "quadratic") {
    check_keys(obj, {"kind", "a"}, where);
    return PotentialSpec::quadratic(read_number(obj, "a", 1.0, where));
  }
  if (kind == "strong_singular") {
    check_keys(obj, {"kind", "A"}, where);
    return PotentialSpec::strong_singular(read_number(obj, "A", 1.0, where));
  }
  throw ConfigError("potential.kind: unknown potential '" + kind + "'");
}

InitialDataSpec read_initial(const json& v, const std::string& where) {
  const std::string kind = read_kind(v, where);
  const json obj = v.is_object() ? v : json::object();
  using K = InitialDataSpec::Kind;
  InitialDataSpec s;
  if (kind == "constant") {
    check_keys(obj, {"kind", "mass"}, where);
    s.kind = K::constant;
  } else if (kind == "cosine") {
    check_keys(obj, {"kind", "mass", "amplitude", "mode"}, where);
    s.kind = K::cosine;
  } else if (kind == "parabola") {
    check_keys(obj, {"kind", "mass"}, where);
    s.kind = K::parabola;
  } else if (kind == "parabola_lifted") {
    check_keys(obj, {"kind", "mass", "delta"}, where);
    s.kind = K::parabola_lifted;
  } else if (kind == "random") {
    check_keys(obj, {"kind", "mass", "amplitude", "modes", "seed"}, where);
    s.kind = K::random;
  } else if (kind == "bump") {
    check_keys(obj, {"kind", "background", "amplitude", "center", "width"}, where);
    s.kind = K::bump;
    s.mass = read_number(obj, "background", 0.0, where);
  } else if (kind == "values") {
    check_keys(obj, {"kind", "values"}, where);
    s.kind = K::values;
    s.values = read_numbers(obj, "values", {}, where);
    return s;
  } else {
    throw ConfigError(where + ".kind: unknown initial data '" + kind + "'");
  }
  if (s.kind != K::bump) s.mass = read_number(obj, "mass", 1.0, where);
  s.amplitude = read_number(obj, "amplitude", 0.0, where);
  s.mode = static_cast<int>(read_integer(obj, "mode", 1, where));
  s.modes = static_cast<int>(read_integer(obj, "modes", 6, where));
  s.delta = read_number(obj, "delta", 0.0, where);
  s.seed = static_cast<std::uint64_t>(read_integer(obj, "seed", 0, where));
  s.center = read_number(obj, "center", 0.0, where);
  s.width = read_number(obj, "width", 0.1, where);
  return s;
}

void read_solver(const json& obj, StepParams& sp) {
  const std::string w = "solver";
  check_keys(obj, {"eps0", "eps_min", "rho", "tol_grad", "max_newton", "armijo_c",
                   "tau_boundary"},
             w);
  sp.eps0 = read_number(obj, "eps0", sp.eps0, w);
  sp.eps_min = read_number(obj, "eps_min", sp.eps_min, w);
  sp.rho = read_number(obj, "rho", sp.rho, w);
  sp.tol_grad = read_number(obj, "tol_grad", sp.tol_grad, w);
  sp.max_newton = static_cast<int>(read_integer(obj, "max_newton", sp.max_newton, w));
  sp.armijo_c = read_number(obj, "armijo_c", sp.armijo_c, w);
  sp.tau_boundary = read_number(obj, "tau_boundary", sp.tau_boundary, w);
}

std::vector<std::pair<double, double>> read_pairs(const json& obj, const char* key,
                                                  std::vector<std::pair<double, double>> fb,
                                                  const std::string& where) {
  if (!obj.contains(key)) return fb;
  const json& v = obj.at(key);
  const std::string name = field(where, key);
  if (!v.is_array()) throw ConfigError(name + ": expected an array of pairs");
  std::vector<std::pair<double, double>> out;
  for (const auto& e : v) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number()) {
      throw ConfigError(name + ": expected an array of pairs");
    }
    out.emplace_back(e[0].get<double>(), e[1].get<double>());
  }
  return out;
}

// Line and column (1-based) of a byte offset.
std::pair<std::size_t, std::size_t> locate(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  const std::size_t end = std::min(byte, text.size());
  for (std::size_t i = 0; i + 1 < end; ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

// --- writing helpers -------------------------------------------------------

json mobility_json(const MobilitySpec& m) {
  switch (m.kind) {
    case MobilitySpec::Kind::power:
      return {{"kind", "power"}, {"n", m.exponent}};
    case MobilitySpec::Kind::navier_slip:
      return {{"kind", "navier_slip"}, {"lambda", m.slip}};
    case MobilitySpec::Kind::constant_one:
      return {{"kind", "constant_one"}};
  }
  return {};
}

json potential_json(const PotentialSpec& p) {
  switch (p.kind) {
    case PotentialSpec::Kind::zero:
      return {{"kind", "zero"}};
    case PotentialSpec::Kind::quadratic:
      return {{"kind", "quadratic"}, {"a", p.coefficient}};
    case PotentialSpec::Kind::strong_singular:
      return {{"kind", "strong_singular"}, {"A", p.coefficient}};
  }
  return {};
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string to_string(Command c) {
  for (const auto& [cmd, name] : command_names()) {
    if (cmd == c) return name;
  }
  return "?";
}

Command parse_command(const std::string& name) {
  for (const auto& [cmd, n] : command_names()) {
    if (n == name) return cmd;
  }
  throw ParameterError("unknown command '" + name + "'");
}

const std::vector<Command>& all_commands() {
  static const std::vector<Command> cmds = [] {
    std::vector<Command> v;
    for (const auto& p : command_names()) v.push_back(p.first);
    return v;
  }();
  return cmds;
}

void ExperimentConfig::validate() const {
  run.validate();
  if (run.initial.kind == InitialDataSpec::Kind::values &&
      static_cast<Index>(run.initial.values.size()) != run.grid.cells()) {
    throw ParameterError("initial.values: length must equal N");
  }
  if (has_liftoff) {
    const double a = run.model.alpha;
    if (!(2.0 * (a + 1.0) > liftoff.n)) {
      throw ParameterError("liftoff.n: lift-off requires 2(alpha+1) > n (alpha = " +
                           format_double(a) + ", n = " + format_double(liftoff.n) + ")");
    }
    if (!(liftoff.M > 0.0)) throw ParameterError("liftoff.M: must be > 0");
    if (liftoff.deltas.empty()) throw ParameterError("liftoff.deltas: must not be empty");
    for (double d : liftoff.deltas) {
      if (!(d > 0.0 && d < liftoff.M)) {
        throw ParameterError("liftoff.deltas: each delta must be in (0, M)");
      }
    }
    if (!(liftoff.return_tolerance >= 0.0)) {
      throw ParameterError("liftoff.return_tolerance: must be >= 0");
    }
  }
  if (has_dissipation) {
    if (!(dissipation.M > 0.0)) throw ParameterError("dissipation.M: must be > 0");
    for (const auto& [n, a] : dissipation.cases) {
      if (!(n > 0.0 && a > 0.0)) {
        throw ParameterError("dissipation.cases: need n > 0 and alpha > 0");
      }
    }
    if (!(dissipation.slope_tolerance > 0.0)) {
      throw ParameterError("dissipation.slope_tolerance: must be > 0");
    }
  }
  if (has_bb) {
    if (!(bb.eta > 0.0 && bb.eta < run.grid.length())) {
      throw ParameterError("bb.eta: must be in (0, L)");
    }
    if (!(bb.n > 0.0)) throw ParameterError("bb.n: must be > 0");
    if (bb.M_sweep.empty()) throw ParameterError("bb.M_sweep: must not be empty");
    for (double m : bb.M_sweep) {
      if (!(m >= 2.0)) throw ParameterError("bb.M_sweep: each M must be >= 2");
    }
    if (bb.time_panels < 1) throw ParameterError("bb.time_panels: must be >= 1");
  }
  if (has_rates) {
    for (double a : rates.alphas) {
      if (!(a > 0.0)) throw ParameterError("rates.alphas: each alpha must be > 0");
    }
  }
  if (has_audit) {
    for (const auto& [s, t] : audit.windows) {
      if (!(s >= 0 && t > s && t <= run.steps())) {
        throw ParameterError("audit.windows: need 0 <= s < t <= steps");
      }
    }
  }
  if (has_point_lemma) {
    if (point_lemma.profiles < 1) throw ParameterError("point_lemma.profiles: must be >= 1");
    if (point_lemma.modes < 1) throw ParameterError("point_lemma.modes: must be >= 1");
    if (!(point_lemma.min_low > 0.0 && point_lemma.min_low <= point_lemma.min_high &&
          point_lemma.min_high < 1.0)) {
      throw ParameterError("point_lemma: need 0 < min_low <= min_high < 1");
    }
  }
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = locate(text, e.byte);
    throw ConfigError(origin + ":" + std::to_string(line) + ":" + std::to_string(col) +
                      ": parse error: " + e.what());
  }
  check_keys(root,
             {"L", "N", "h", "T", "alpha", "mobility", "potential", "sigma", "record_every",
              "solver", "initial", "seed", "liftoff", "dissipation", "bb", "rates", "audit",
              "point_lemma"},
             origin);

  ExperimentConfig cfg;
  RunConfig& rc = cfg.run;
  const double L = read_number(root, "L", 1.0, "");
  const long long N = read_integer(root, "N", 128, "");
  rc.grid = Grid(L, static_cast<Index>(N));
  rc.step.h = read_number(root, "h", rc.step.h, "");
  rc.T = read_number(root, "T", rc.T, "");
  rc.model.alpha = read_number(root, "alpha", rc.model.alpha, "");
  if (!(rc.model.alpha > 0.0)) throw ParameterError("alpha: must be > 0");
  if (root.contains("mobility")) rc.model.mobility = read_mobility(root["mobility"], rc.model.alpha);
  if (root.contains("potential")) rc.model.potential = read_potential(root["potential"]);
  rc.model.sigma = read_number(root, "sigma", rc.model.sigma, "");
  rc.record_every = static_cast<int>(read_integer(root, "record_every", 1, ""));
  if (root.contains("solver")) read_solver(root["solver"], rc.step);
  if (root.contains("initial")) rc.initial = read_initial(root["initial"], "initial");
  const long long seed = read_integer(root, "seed", 0, "");
  if (seed < 0) throw ParameterError("seed: must be >= 0");
  cfg.seed = static_cast<std::uint64_t>(seed);

  if (root.contains("liftoff")) {
    const json& o = root["liftoff"];
    const std::string w = "liftoff";
    check_keys(o, {"M", "n", "deltas", "return_tolerance"}, w);
    cfg.has_liftoff = true;
    cfg.liftoff.M = read_number(o, "M", cfg.liftoff.M, w);
    cfg.liftoff.n = read_number(o, "n", cfg.liftoff.n, w);
    cfg.liftoff.deltas = read_numbers(o, "deltas", cfg.liftoff.deltas, w);
    cfg.liftoff.return_tolerance =
        read_number(o, "return_tolerance", cfg.liftoff.return_tolerance, w);
  }
  if (root.contains("dissipation")) {
    const json& o = root["dissipation"];
    const std::string w = "dissipation";
    check_keys(o, {"M", "cases", "deltas", "slope_tolerance"}, w);
    cfg.has_dissipation = true;
    cfg.dissipation.M = read_number(o, "M", cfg.dissipation.M, w);
    cfg.dissipation.cases = read_pairs(o, "cases", cfg.dissipation.cases, w);
    cfg.dissipation.deltas = read_numbers(o, "deltas", cfg.dissipation.deltas, w);
    cfg.dissipation.slope_tolerance =
        read_number(o, "slope_tolerance", cfg.dissipation.slope_tolerance, w);
  }
  if (root.contains("bb")) {
    const json& o = root["bb"];
    const std::string w = "bb";
    check_keys(o, {"eta", "n", "M_sweep", "u0", "u1", "time_panels", "max_ratio"}, w);
    cfg.has_bb = true;
    cfg.bb.eta = read_number(o, "eta", cfg.bb.eta, w);
    cfg.bb.n = read_number(o, "n", cfg.bb.n, w);
    cfg.bb.M_sweep = read_numbers(o, "M_sweep", cfg.bb.M_sweep, w);
    if (o.contains("u0")) cfg.bb.u0 = read_initial(o["u0"], "bb.u0");
    if (o.contains("u1")) cfg.bb.u1 = read_initial(o["u1"], "bb.u1");
    cfg.bb.time_panels = static_cast<int>(read_integer(o, "time_panels", cfg.bb.time_panels, w));
    cfg.bb.max_ratio = read_number(o, "max_ratio", cfg.bb.max_ratio, w);
  }
  if (root.contains("rates")) {
    const json& o = root["rates"];
    const std::string w = "rates";
    check_keys(o, {"alphas", "tail_start_fraction", "tol_extinct", "noise_floor", "min_points",
                   "min_r2_exponential", "min_r2_algebraic"},
               w);
    cfg.has_rates = true;
    auto& r = cfg.rates;
    r.alphas = read_numbers(o, "alphas", r.alphas, w);
    r.options.tail_start_fraction =
        read_number(o, "tail_start_fraction", r.options.tail_start_fraction, w);
    r.options.tol_extinct = read_number(o, "tol_extinct", r.options.tol_extinct, w);
    r.options.noise_floor = read_number(o, "noise_floor", r.options.noise_floor, w);
    r.options.min_points = static_cast<int>(read_integer(o, "min_points", r.options.min_points, w));
    r.min_r2_exponential = read_number(o, "min_r2_exponential", r.min_r2_exponential, w);
    r.min_r2_algebraic = read_number(o, "min_r2_algebraic", r.min_r2_algebraic, w);
  }
  if (root.contains("audit")) {
    const json& o = root["audit"];
    const std::string w = "audit";
    check_keys(o, {"windows"}, w);
    cfg.has_audit = true;
    for (const auto& [s, t] : read_pairs(o, "windows", {}, w)) {
      if (s != std::floor(s) || t != std::floor(t)) {
        throw ConfigError("audit.windows: row indices must be integers");
      }
      cfg.audit.windows.emplace_back(static_cast<int>(s), static_cast<int>(t));
    }
  }
  if (root.contains("point_lemma")) {
    const json& o = root["point_lemma"];
    const std::string w = "point_lemma";
    check_keys(o, {"profiles", "modes", "min_low", "min_high"}, w);
    cfg.has_point_lemma = true;
    auto& p = cfg.point_lemma;
    p.profiles = static_cast<int>(read_integer(o, "profiles", p.profiles, w));
    p.modes = static_cast<int>(read_integer(o, "modes", p.modes, w));
    p.min_low = read_number(o, "min_low", p.min_low, w);
    p.min_high = read_number(o, "min_high", p.min_high, w);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig parse_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path.string());
}

json to_json(const InitialDataSpec& s) {
  using K = InitialDataSpec::Kind;
  switch (s.kind) {
    case K::constant:
      return {{"kind", "constant"}, {"mass", s.mass}};
    case K::cosine:
      return {{"kind", "cosine"}, {"mass", s.mass}, {"amplitude", s.amplitude}, {"mode", s.mode}};
    case K::parabola:
      return {{"kind", "parabola"}, {"mass", s.mass}};
    case K::parabola_lifted:
      return {{"kind", "parabola_lifted"}, {"mass", s.mass}, {"delta", s.delta}};
    case K::random:
      return {{"kind", "random"}, {"mass", s.mass}, {"amplitude", s.amplitude},
              {"modes", s.modes}, {"seed", s.seed}};
    case K::bump:
      return {{"kind", "bump"}, {"background", s.mass}, {"amplitude", s.amplitude},
              {"center", s.center}, {"width", s.width}};
    case K::values:
      return {{"kind", "values"}, {"values", s.values}};
  }
  return {};
}

json to_json(const ExperimentConfig& cfg) {
  const RunConfig& rc = cfg.run;
  json j{
      {"L", rc.grid.length()},
      {"N", rc.grid.cells()},
      {"h", rc.step.h},
      {"T", rc.T},
      {"alpha", rc.model.alpha},
      {"mobility", mobility_json(rc.model.mobility)},
      {"potential", potential_json(rc.model.potential)},
      {"sigma", rc.model.sigma},
      {"record_every", rc.record_every},
      {"solver",
       {{"eps0", rc.step.eps0},
        {"eps_min", rc.step.eps_min},
        {"rho", rc.step.rho},
        {"tol_grad", rc.step.tol_grad},
        {"max_newton", rc.step.max_newton},
        {"armijo_c", rc.step.armijo_c},
        {"tau_boundary", rc.step.tau_boundary}}},
      {"initial", to_json(rc.initial)},
      {"seed", cfg.seed},
  };
  if (cfg.has_liftoff) {
    j["liftoff"] = {{"M", cfg.liftoff.M},
                    {"n", cfg.liftoff.n},
                    {"deltas", cfg.liftoff.deltas},
                    {"return_tolerance", cfg.liftoff.return_tolerance}};
  }
  if (cfg.has_dissipation) {
    json cases = json::array();
    for (const auto& [n, a] : cfg.dissipation.cases) cases.push_back({n, a});
    j["dissipation"] = {{"M", cfg.dissipation.M},
                        {"cases", cases},
                        {"deltas", cfg.dissipation.deltas},
                        {"slope_tolerance", cfg.dissipation.slope_tolerance}};
  }
  if (cfg.has_bb) {
    j["bb"] = {{"eta", cfg.bb.eta},
               {"n", cfg.bb.n},
               {"M_sweep", cfg.bb.M_sweep},
               {"u0", to_json(cfg.bb.u0)},
               {"u1", to_json(cfg.bb.u1)},
               {"time_panels", cfg.bb.time_panels},
               {"max_ratio", cfg.bb.max_ratio}};
  }
  if (cfg.has_rates) {
    const auto& r = cfg.rates;
    j["rates"] = {{"alphas", r.alphas},
                  {"tail_start_fraction", r.options.tail_start_fraction},
                  {"tol_extinct", r.options.tol_extinct},
                  {"noise_floor", r.options.noise_floor},
                  {"min_points", r.options.min_points},
                  {"min_r2_exponential", r.min_r2_exponential},
                  {"min_r2_algebraic", r.min_r2_algebraic}};
  }
  if (cfg.has_audit) {
    json w = json::array();
    for (const auto& [s, t] : cfg.audit.windows) w.push_back({s, t});
    j["audit"] = {{"windows", w}};
  }
  if (cfg.has_point_lemma) {
    const auto& p = cfg.point_lemma;
    j["point_lemma"] = {{"profiles", p.profiles},
                        {"modes", p.modes},
                        {"min_low", p.min_low},
                        {"min_high", p.min_high}};
  }
  return j;
}

json to_json(const StepDiagnostics& d) {
  return {{"t", d.t},
          {"mass", d.mass},
          {"min_u", d.min_u},
          {"max_u", d.max_u},
          {"E_dirichlet", d.E_dirichlet},
          {"E_potential", d.E_potential},
          {"E_total", d.E_total},
          {"diss_flux", d.diss_flux},
          {"diss_strong", d.diss_strong},
          {"ede_slack", d.ede_slack},
          {"el_residual", d.el_residual},
          {"newton_iters", d.newton_iters}};
}

json config_schema() {
  const json number{{"type", "number"}};
  const json positive{{"type", "number"}, {"exclusiveMinimum", 0}};
  const json integer{{"type", "integer"}};
  const json numbers{{"type", "array"}, {"items", number}};
  const json pairs{{"type", "array"},
                   {"items", {{"type", "array"}, {"items", number}, {"minItems", 2},
                              {"maxItems", 2}}}};
  auto closed = [](json props, std::vector<std::string> required = {}) {
    json o{{"type", "object"}, {"properties", std::move(props)}, {"additionalProperties", false}};
    if (!required.empty()) o["required"] = required;
    return o;
  };
  auto kind_is = [](const char* k) { return json{{"const", k}}; };

  const json initial{
      {"oneOf",
       json::array({
           closed({{"kind", kind_is("constant")}, {"mass", positive}}, {"kind"}),
           closed({{"kind", kind_is("cosine")}, {"mass", positive}, {"amplitude", number},
                   {"mode", integer}},
                  {"kind"}),
           closed({{"kind", kind_is("parabola")}, {"mass", positive}}, {"kind"}),
           closed({{"kind", kind_is("parabola_lifted")}, {"mass", positive}, {"delta", positive}},
                  {"kind"}),
           closed({{"kind", kind_is("random")}, {"mass", positive}, {"amplitude", number},
                   {"modes", integer}, {"seed", integer}},
                  {"kind"}),
           closed({{"kind", kind_is("bump")}, {"background", positive}, {"amplitude", number},
                   {"center", number}, {"width", positive}},
                  {"kind"}),
           closed({{"kind", kind_is("values")}, {"values", numbers}}, {"kind", "values"}),
       })}};
  const json mobility{
      {"oneOf", json::array({
                    {{"enum", {"constant_one"}}},
                    closed({{"kind", kind_is("power")}, {"n", positive}}, {"kind", "n"}),
                    closed({{"kind", kind_is("navier_slip")}, {"lambda", positive}},
                           {"kind", "lambda"}),
                    closed({{"kind", kind_is("constant_one")}}, {"kind"}),
                })}};
  const json potential{
      {"oneOf", json::array({
                    {{"enum", {"zero"}}},
                    closed({{"kind", kind_is("zero")}}, {"kind"}),
                    closed({{"kind", kind_is("quadratic")}, {"a", number}}, {"kind"}),
                    closed({{"kind", kind_is("strong_singular")}, {"A", number}}, {"kind"}),
                })}};
  json schema = closed({
      {"L", positive},
      {"N", {{"type", "integer"}, {"minimum", 4}}},
      {"h", positive},
      {"T", positive},
      {"alpha", positive},
      {"mobility", mobility},
      {"potential", potential},
      {"sigma", {{"type", "number"}, {"exclusiveMinimum", 0}, {"exclusiveMaximum", 1}}},
      {"record_every", {{"type", "integer"}, {"minimum", 1}}},
      {"seed", {{"type", "integer"}, {"minimum", 0}}},
      {"solver", closed({{"eps0", positive},
                         {"eps_min", positive},
                         {"rho", {{"type", "number"}, {"exclusiveMinimum", 0},
                                  {"exclusiveMaximum", 1}}},
                         {"tol_grad", positive},
                         {"max_newton", {{"type", "integer"}, {"minimum", 1}}},
                         {"armijo_c", {{"type", "number"}, {"exclusiveMinimum", 0},
                                       {"exclusiveMaximum", 0.5}}},
                         {"tau_boundary", {{"type", "number"}, {"exclusiveMinimum", 0},
                                           {"exclusiveMaximum", 1}}}})},
      {"initial", initial},
      {"liftoff", closed({{"M", positive}, {"n", positive}, {"deltas", numbers},
                          {"return_tolerance", number}})},
      {"dissipation", closed({{"M", positive}, {"cases", pairs}, {"deltas", numbers},
                              {"slope_tolerance", positive}})},
      {"bb", closed({{"eta", positive}, {"n", positive}, {"M_sweep", numbers},
                     {"u0", initial}, {"u1", initial}, {"time_panels", integer},
                     {"max_ratio", positive}})},
      {"rates", closed({{"alphas", numbers}, {"tail_start_fraction", number},
                        {"tol_extinct", positive}, {"noise_floor", positive},
                        {"min_points", integer}, {"min_r2_exponential", number},
                        {"min_r2_algebraic", number}})},
      {"audit", closed({{"windows", pairs}})},
      {"point_lemma", closed({{"profiles", integer}, {"modes", integer},
                              {"min_low", positive}, {"min_high", positive}})},
  });
  schema["$schema"] = "https://json-schema.org/draft/2020-12/schema";
  schema["title"] = "tfilm configuration";
  return schema;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------

DirectoryLock::DirectoryLock(const fs::path& dir) : lock_(dir / ".tfilm.lock") {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const int fd = ::open(lock_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    throw IoError("output directory " + dir.string() +
                  " is locked by another run (remove " + lock_.string() + " if stale)");
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto w = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

DirectoryLock::~DirectoryLock() {
  std::error_code ec;
  fs::remove(lock_, ec);
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out << text;
  if (!out) throw IoError("write failed: " + file.string());
}

void write_json(const fs::path& file, const json& j) { write_text(file, j.dump(2) + "\n"); }

void write_diagnostics_csv(const std::vector<StepDiagnostics>& rows, const fs::path& file) {
  std::string out = kDiagnosticsHeader;
  out += '\n';
  for (const auto& d : rows) {
    for (double v : {d.t, d.mass, d.min_u, d.max_u, d.E_dirichlet, d.E_potential, d.E_total,
                     d.diss_flux, d.diss_strong, d.ede_slack, d.el_residual}) {
      out += format_double(v);
      out += ',';
    }
    out += std::to_string(d.newton_iters);
    out += '\n';
  }
  write_text(file, out);
}

std::string snapshot_name(double t) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "u_t%.10f", t);
  return buf;
}

std::string svg_line_plot(const std::vector<SvgSeries>& series, const std::string& title,
                          const std::string& xlabel, const std::string& ylabel, bool log_y) {
  const double W = 640, H = 400, left = 80, right = 20, top = 40, bottom = 60;
  static const char* colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

  std::vector<std::vector<std::pair<double, double>>> pts;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    std::vector<std::pair<double, double>> p;
    for (size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      double y = s.y[i];
      if (log_y) {
        if (!(y > 0.0)) continue;
        y = std::log10(y);
      }
      if (!std::isfinite(y) || !std::isfinite(s.x[i])) continue;
      p.emplace_back(s.x[i], y);
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
    pts.push_back(std::move(p));
  }
  if (!(x0 <= x1)) x0 = 0, x1 = 1;
  if (!(y0 <= y1)) y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) {
    const double pad = y0 == 0.0 ? 1.0 : std::abs(y0) * 0.05;
    y0 -= pad;
    y1 += pad;
  }
  auto sx = [&](double x) { return left + (x - x0) / (x1 - x0) * (W - left - right); };
  auto sy = [&](double y) { return H - bottom - (y - y0) / (y1 - y0) * (H - top - bottom); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
    << escape_xml(title) << "</text>\n";
  o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << W - left - right
    << "\" height=\"" << H - top - bottom << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4.0, yv = y0 + (y1 - y0) * k / 4.0;
    o << "<text x=\"" << sx(xv) << "\" y=\"" << H - bottom + 18
      << "\" text-anchor=\"middle\">" << short_number(xv) << "</text>\n";
    o << "<text x=\"" << left - 6 << "\" y=\"" << sy(yv) + 4 << "\" text-anchor=\"end\">"
      << (log_y ? "1e" + short_number(yv) : short_number(yv)) << "</text>\n";
  }
  o << "<text x=\"" << (left + W - right) / 2 << "\" y=\"" << H - 15
    << "\" text-anchor=\"middle\">" << escape_xml(xlabel) << "</text>\n";
  o << "<text transform=\"translate(18," << (top + H - bottom) / 2
    << ") rotate(-90)\" text-anchor=\"middle\">" << escape_xml(ylabel) << "</text>\n";
  for (size_t s = 0; s < pts.size(); ++s) {
    const char* c = colours[s % 5];
    o << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : pts[s]) o << sx(x) << ',' << sy(y) << ' ';
    o << "\"/>\n";
    if (series.size() > 1) {
      o << "<text x=\"" << W - right - 8 << "\" y=\"" << top + 16 + 14 * s
        << "\" text-anchor=\"end\" fill=\"" << c << "\">" << escape_xml(series[s].label)
        << "</text>\n";
    }
  }
  o << "</svg>\n";
  return o.str();
}

void write_timeseries(const TimeSeries<double>& series, const fs::path& dir,
                      const json& config_echo, const json& verdicts) {
  DirectoryLock lock(dir);
  write_diagnostics_csv(series.diagnostics, dir / "diagnostics.csv");

  const Grid& g = series.config.grid;
  for (const auto& snap : series.snapshots) {
    std::string out = "x,u\n";
    for (Index i = 0; i < snap.u.size(); ++i) {
      out += format_double(g.cell_center(i));
      out += ',';
      out += format_double(snap.u[i]);
      out += '\n';
    }
    write_text(dir / (snapshot_name(snap.t) + ".csv"), out);
  }

  std::vector<double> t, e, m;
  for (const auto& d : series.diagnostics) {
    t.push_back(d.t);
    e.push_back(d.E_total);
    m.push_back(d.min_u);
  }
  write_text(dir / "energy.svg",
             svg_line_plot({{"E_total", t, e}}, "Energy", "t", "E_total", true));
  write_text(dir / "minu.svg", svg_line_plot({{"min_u", t, m}}, "Minimum height", "t", "min_u"));

  double worst_mass = 0.0, worst_slack = INFINITY, worst_el = 0.0;
  const double m0 = series.diagnostics.front().mass;
  for (const auto& d : series.diagnostics) {
    worst_mass = std::max(worst_mass, std::abs(d.mass - m0) / std::abs(m0));
  }
  for (size_t k = 1; k < series.diagnostics.size(); ++k) {
    worst_slack = std::min(worst_slack, series.diagnostics[k].ede_slack);
    worst_el = std::max(worst_el, series.diagnostics[k].el_residual);
  }
  json summary{
      {"config", config_echo},
      {"steps", series.diagnostics.size() - 1},
      {"snapshots", series.snapshots.size()},
      {"tolerances", {{"tol_audit", series.tol_audit}}},
      {"diagnostics",
       {{"max_relative_mass_drift", worst_mass},
        {"min_ede_slack", std::isfinite(worst_slack) ? json(worst_slack) : json(nullptr)},
        {"max_el_residual", worst_el},
        {"edi_violations", series.edi_violations}}},
      {"initial", to_json(series.diagnostics.front())},
      {"final", to_json(series.diagnostics.back())},
      {"verdicts", verdicts},
  };
  write_json(dir / "summary.json", summary);
}

}  // namespace tfilm

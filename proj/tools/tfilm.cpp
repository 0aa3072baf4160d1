// tfilm <command> --config <path> --out <dir> [--threads K] [--seed S]
//
// Exit codes: 0 all audits pass, 2 audits failed (reports still written),
// 1 error.

#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "tfilm/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Minimising-movement simulator for the power-law thin-film equation"};
  app.require_subcommand(0, 1);

  bool print_schema = false;
  app.add_flag("--print-schema", print_schema, "Print the configuration JSON schema and exit");

  std::string config, out;
  int threads = 1;
  long long seed = -1;
  const std::map<tfilm::Command, const char*> about{
      {tfilm::Command::simulate, "Run the scheme and write diagnostics and snapshots"},
      {tfilm::Command::sweep_liftoff, "Lift-off times of parabola data over a delta sweep"},
      {tfilm::Command::dissipation_bound, "Fit the dissipation lower-bound exponent"},
      {tfilm::Command::bb_action, "Action of concentrating paths over an M sweep"},
      {tfilm::Command::rates, "Classify energy decay for each alpha"},
      {tfilm::Command::audit_ede, "Run and audit the energy-dissipation inequality on windows"},
      {tfilm::Command::point_lemma, "Check the point lemma on random profiles"},
  };
  for (tfilm::Command cmd : tfilm::all_commands()) {
    CLI::App* sub = app.add_subcommand(tfilm::to_string(cmd), about.at(cmd));
    sub->add_option("--config", config, "Configuration file (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--out", out, "Output directory")->required();
    sub->add_option("--threads", threads, "Worker threads for sweeps")
        ->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "Overrides the configured seed")
        ->check(CLI::NonNegativeNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (print_schema) {
    std::cout << tfilm::config_schema().dump(2) << "\n";
    return 0;
  }
  const auto subs = app.get_subcommands();
  if (subs.empty()) {
    std::cerr << app.help();
    return 1;
  }

  try {
    const tfilm::Command cmd = tfilm::parse_command(subs.front()->get_name());
    tfilm::ExperimentConfig cfg = tfilm::parse_config(config);
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    const auto outcome = tfilm::run_command(cmd, cfg, out, threads, std::cerr);
    std::cerr << (outcome.audits_passed ? "audits passed" : "AUDITS FAILED") << "\n";
    return outcome.audits_passed ? 0 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

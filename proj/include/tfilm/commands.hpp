#pragma once

// The commands of the tfilm tool, callable without the argument parser.

#include <filesystem>
#include <iosfwd>

#include "tfilm/io.hpp"

namespace tfilm {

struct CommandOutcome {
  bool audits_passed = false;
  /// The report written to <out>/report.json (or summary.json for runs).
  nlohmann::json report;
};

/// Runs `cmd`, writes its artifacts under `out` and returns the audit
/// verdict. Errors propagate as exceptions.
CommandOutcome run_command(Command cmd, const ExperimentConfig& cfg,
                           const std::filesystem::path& out, int threads, std::ostream& log);

}  // namespace tfilm

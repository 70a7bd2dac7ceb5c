#pragma once

#include "dbp/config.hpp"
#include "dbp/errors.hpp"

#include <iosfwd>
#include <string>

namespace dbp {

/// Process exit codes.
enum ExitCode : int {
  exit_ok = 0,
  exit_check_failed = 1,
  exit_usage = 2,
  exit_config = 3,
  exit_io = 4,
  exit_shape = 5,
  exit_range = 6,
  exit_domain = 7,
  exit_structural = 8,
  exit_replay = 9,
  exit_numeric = 10,
  exit_internal = 70,
};

int exit_code(ErrorKind kind);

struct RunOptions {
  bool dump_pgm = false;
  /// Written only to the manifest.
  std::string timestamp;
};

/// Runs purify | attack | eval | gradcheck | flaws and writes its artifacts
/// under cfg.out. Library errors propagate; the return value is exit_ok or
/// exit_check_failed (gradcheck above tolerance).
int run_subcommand(const std::string& name, const RunConfig& cfg, const RunOptions& opt, std::ostream& log);

/// Same, with every dbp::Error mapped to its exit code and reported on `err`.
int run_guarded(const std::string& name, const RunConfig& cfg, const RunOptions& opt, std::ostream& log,
                std::ostream& err);

}  // namespace dbp

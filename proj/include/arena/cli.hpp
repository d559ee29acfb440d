#pragma once

// `arena` command line. run_cli is the whole program minus main(), so tests
// can drive it in-process with their own environment and clock.

#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "arena/gateway.hpp"

namespace arena::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,       // unexpected internal error
  kUsage = 2,         // bad flags, config error, malformed or unsupported log, no records
  kAuth = 3,          // provider credentials missing or rejected
  kStorage = 4,       // run log unreadable or unwritable
  kUnknownRunId = 5,
  kDivergence = 6,    // replay disagrees with the engine
};

struct CliEnv {
  gateway::EnvLookup env = gateway::process_env();
  std::shared_ptr<gateway::Clock> clock;  // null: wall clock, or frozen with --fixed-clock
};

/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const CliEnv& env = {});

}  // namespace arena::cli

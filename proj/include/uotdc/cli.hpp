#pragma once

namespace uotdc {

enum ExitCode : int {
  kExitOk = 0,
  kExitValidation = 2,
  kExitConvergence = 3,
  kExitInfeasible = 4,
};

/// Entry point of the `uotdc` command line tool; returns the process exit code.
int run_cli(int argc, char** argv);

/// Sets the global log level from UOT_LOG (error, info, debug; default warn).
void configure_logging();

}  // namespace uotdc

#pragma once

namespace flowrnn {

/// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitNumerical = 3,
  kExitCertification = 4,
};

int run_cli(int argc, char** argv);

}  // namespace flowrnn

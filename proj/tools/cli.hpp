#pragma once

namespace spde {

/// Exit codes of the spde_lab command.
enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitConfig = 2,
    kExitStability = 3,
    kExitNumerical = 4,
};

/// Parses the command line, runs one subcommand and returns its exit code.
int run_cli(int argc, char** argv);

}  // namespace spde

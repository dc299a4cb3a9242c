#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace morphopt::cli {

enum ExitCode : int { kOk = 0, kRuntimeError = 1, kConfigError = 2, kCheckpointError = 3, kDiverged = 4 };

// Parses the command line and runs one subcommand: meta-train, train,
// optimize, cost-map or eval. Result lines go to `out`, progress and errors
// to `err`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace morphopt::cli

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace deepclass {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
    kExitOk = 0,
    kExitVerifyFailed = 1,
    kExitUsage = 2,
    kExitDiverged = 3,
};

/// Runs one invocation. `args` excludes the program name. Normal output goes to `out`,
/// diagnostics to `err`; nothing is written to the process streams directly.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace deepclass

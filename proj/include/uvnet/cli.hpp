#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace uvnet::cli {

enum ExitCode : int { kOk = 0, kConstraintFailure = 1, kUsageError = 2 };

/// Entry point behind the `uvnet` binary. args[0] is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace uvnet::cli

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cli {

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kInvalidInput = 2 };

/// Runs the command line `args` (without the program name). Data goes to
/// `out` (or the --out file), diagnostics and progress to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cli

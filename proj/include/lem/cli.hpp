#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lem::cli {

enum ExitCode : int { kSuccess = 0, kNotConverged = 1, kInputError = 2, kSolveFailed = 3 };

/// Runs the `lem` command line. `args` excludes the program name.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lem::cli

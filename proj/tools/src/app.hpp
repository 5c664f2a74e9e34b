#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace detcal::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kParseError = 2,
  kValidationError = 3,
  kFitError = 4,
};

// Runs one subcommand; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace detcal::cli

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cfcf::cli {

enum ExitCode : int {
  kOk = 0,
  kBadArguments = 2,
  kIoFailure = 3,
  kValidationFailure = 4,
  kNonFiniteLoss = 5,
  kGradCheckFailed = 6,
};

/// Runs the command line `args` (args[0] is the program name). Normal output
/// goes to `out`, diagnostics and usage text to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, char** argv);

}  // namespace cfcf::cli

#pragma once

#include <string>
#include <vector>

namespace photoseq::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kDataError = 3, kNumericalError = 4 };

/// Parses and runs one command line (args[0] is the program name).
int run(const std::vector<std::string>& args);

}  // namespace photoseq::cli

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace unloc::cli {

enum ExitCode { kOk = 0, kUserError = 1, kInternalError = 2 };

/// Runs one command line. Never throws; errors are reported on `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace unloc::cli

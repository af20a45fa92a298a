#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace aubase {

/// Runs one CLI invocation. `args` excludes the program name.
/// Exit codes: 0 success, 1 validation or data error, 2 internal failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace aubase

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace cerealia::cli {

/// Runs one CLI invocation; `args` excludes the program name. Returns the
/// process exit status (0 ok, 1 failure, 2 usage).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cerealia::cli

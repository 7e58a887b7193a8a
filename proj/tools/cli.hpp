#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace fsca {

/// Runs the `fsca` command line on `args` (without the program name) and
/// returns the process exit status: 0 success, 1 usage/contract/config
/// errors, 2 unreadable or malformed files.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fsca

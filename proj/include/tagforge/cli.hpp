#pragma once

// Command-line entry point. Exit codes: 0 success, 1 operational error,
// 2 usage error.

#include <ostream>
#include <string>
#include <vector>

namespace tagforge {

/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run_cli(int argc, char** argv);

}  // namespace tagforge

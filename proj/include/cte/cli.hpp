#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace cte {

/// Runs the command-line tool on @p args (without the program name).
/// Returns 0 on success, 1 on a runtime error and 2 on a usage error.
int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

int run_cli(int argc, char **argv);

}  // namespace cte

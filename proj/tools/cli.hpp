#pragma once

#include <string>
#include <vector>

namespace splatsim {

/// Runs the command line tool. Returns 0 on success, 1 on validation errors and
/// usage mistakes, 2 on runtime failures.
int run_cli(const std::vector<std::string>& args);

}  // namespace splatsim

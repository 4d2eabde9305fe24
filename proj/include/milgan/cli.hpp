#pragma once

#include <string>
#include <vector>

namespace milgan {

/// Run the command-line interface. Returns the process exit code:
/// 0 success, 1 runtime error, 2 usage error.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);  // args exclude the program name

}  // namespace milgan

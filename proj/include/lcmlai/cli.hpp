#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lcmlai {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command line (args[0] is the program name). Returns the exit
/// status: 0 success, 1 failure of the wrapped operation, 2 usage or
/// configuration error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lcmlai

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rhythm::app {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs the command line `args` (args[0] is the program name).
/// Returns 0 on success, 2 on usage or configuration errors, 1 on runtime failures.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rhythm::app

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace bcm {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUser = 1;       // bad flags, config, data or unsupported combination
inline constexpr int kExitNumerical = 2;  // sampler initialization or non-finite likelihood

/// Runs one `bcm` invocation. Messages go to `out` / `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bcm

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace incisor {

// Exit codes of the incisor command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailed = 1;  // exhausted candidates, unknown job, no feasible offer
inline constexpr int kExitUsage = 2;

// args excludes the program name. Reports go to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace incisor

#pragma once

// Command-line front end. Subcommands: ba, jac, synth, eval, checkpoint.
// Exit codes: 0 success, 1 invalid configuration, 2 unreadable or malformed
// data, 3 failure while running. Reports are "key<TAB>value" lines.

#include <ostream>
#include <string>
#include <vector>

namespace tdpmix {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitRuntime = 3;

// args excludes the program name.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tdpmix

#pragma once

#include <ostream>

namespace spacebyte {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3 };

// Entry point of the `spacebyte` executable. Library errors are reported on
// err and mapped to exit codes.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace spacebyte

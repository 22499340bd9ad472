#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dmads {

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,      // bad arguments or configuration
    kExitData = 2,       // unreadable, missing or inconsistent data
    kExitNumerical = 3,  // training aborted on a non-finite value
};

// Runs the command line tool in-process. args[0] is the program name.
// Diagnostics go to err prefixed with "dmads: ".
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dmads

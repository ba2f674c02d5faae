#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace symx::cli {

/// Runs the `crosswalk` command line. Data goes to `out` (or files named by
/// --out), diagnostics to `err`. Returns the process exit status.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

}  // namespace symx::cli

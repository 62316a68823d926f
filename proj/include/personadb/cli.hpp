#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace personadb::cli {

/// Runs one command line (args exclude the program name). On success prints
/// a one-line JSON summary to `out`; on failure prints a JSON error record to
/// `err`. Returns the process exit status.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace personadb::cli

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pcw {

// Runs the `pcw` command line. Returns the process exit code: 0 on success,
// 1 on a runtime error (one-line diagnostic on `err`), 2 on a usage error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pcw

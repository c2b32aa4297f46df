#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace kceval::cli {

inline constexpr const char* kToolVersion = "kc-eval 0.1.0";

// Full command-line entry point. args excludes the program name. Returns the
// process exit code: 0 success, 1 fatal input error, 2 internal error.
// Diagnostics go to err; data goes to files or out.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kceval::cli

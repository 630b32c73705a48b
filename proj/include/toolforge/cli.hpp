#pragma once
// The toolforge command line: one subcommand per pipeline stage.

#include <iosfwd>
#include <string>
#include <vector>

namespace toolforge::cli {

inline constexpr const char* kVersion = "1.0.0";

/// args excludes the program name. Returns the process exit status; stage
/// failures are reported on `err` as {"error":{"code","message","stage"}}.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace toolforge::cli

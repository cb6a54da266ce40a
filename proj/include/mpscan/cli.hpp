#pragma once

// Command-line entry point: every module exposed as a subcommand.

#include <iosfwd>
#include <string>
#include <vector>

namespace mpscan::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Environment variable naming the default blocklist file for live runs.
inline constexpr const char* kBlocklistEnv = "MPSCAN_BLOCKLIST";

/// `argv[0]` is the program name.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mpscan::cli

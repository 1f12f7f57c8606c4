#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace prunekit::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

// Runs one command line (args[0] is the program name). Diagnostics go to
// `err`, reports that have no output file go to `out`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Sub-seed for a named component, derived from the single --seed flag.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view component);

}  // namespace prunekit::cli

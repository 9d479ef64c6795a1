#pragma once

#include <cstdint>
#include <iosfwd>
#include <string_view>

namespace a3 {

/// Exit statuses of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `a3sim` tool: analyze, schedule, compare and train subcommands.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// FNV-1a 64-bit hash.
std::uint64_t fnv1a(std::string_view text);

}  // namespace a3

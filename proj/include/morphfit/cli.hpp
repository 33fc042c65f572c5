#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace morphfit {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `morphfit` tool. Subcommands: gen-model, gen-sequence,
/// fit, track, frontalize, zncc, bench. Returns 0 on success, 1 on a runtime
/// or data failure and 2 on a usage error.
int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace morphfit

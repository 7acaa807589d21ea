#pragma once

#include <iosfwd>

namespace w1a8::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerifyFailed = 1;
inline constexpr int kExitInputError = 2;

// Runs one subcommand; diagnostics go to err, reports to out.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace w1a8::cli

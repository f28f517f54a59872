#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace wknn::cli {

inline constexpr const char* kVersion = "0.1.0";

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalidInput = 2;
inline constexpr int kExitNumericalFailure = 3;

/**
 * Entry point of the `wknn` tool; `args` excludes the program name.
 * Subcommands: weights, distance, rate-exp, qi-exp, atom-demo, regress-exp,
 * constants. `--config FILE` supplies `key = value` lines for the chosen
 * subcommand; flags on the command line take precedence.
 */
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace wknn::cli

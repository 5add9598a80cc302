#pragma once

#include <span>
#include <string>
#include <vector>

namespace playtitle::cli {

// Runs one subcommand. Returns 0 on success, 2 on usage errors, 1 on
// runtime failures; errors are reported as a single line on stderr.
int run(std::span<const std::string> args);
int run(int argc, const char* const* argv);

}  // namespace playtitle::cli

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gcl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

/// Runs one subcommand (synth, split, train, eval, stw, search). `args`
/// excludes the program name. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gcl::cli

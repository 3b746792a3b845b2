#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace coadapt::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs one `coadapt` invocation. args[0] is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace coadapt::cli

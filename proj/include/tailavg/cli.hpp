#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tailavg {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `tailavg` command. `args` excludes the program name.
/// Tabular results go to the file named by --out, or to `out` when it is absent.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tailavg

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tlsfd {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kDefaultPort = 8080;

/// Runs one `tlsfd` subcommand. `args` excludes the program name. Records go
/// to `out` as one JSON object per line; diagnostics go to `err`.
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int cli_dispatch(int argc, char** argv);

}  // namespace tlsfd

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace crowdbin::cli {

/// Environment variable holding the default `--seed`.
inline constexpr const char* kSeedEnv = "CROWDBIN_SEED";

/// Runs the command line `args` (args[0] is the program name). Diagnostics
/// go to `err`, summaries to `out`. Returns the process exit code; on
/// failure no output file is left behind.
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

}  // namespace crowdbin::cli

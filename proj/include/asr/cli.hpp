#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace asr::cli {

/// Exit codes shared by every subcommand.
enum ExitCode : int {
  kOk = 0,
  kReplayMismatch = 1,
  kConfigError = 2,  // bad config, missing/malformed input file, usage error
  kRunFailure = 3,   // source training diverged or numeric failure mid-run
};

/// Entry point of the `asr` tool. args excludes the program name.
/// Errors print one line `error: code=<n> kind=<kind> message=<text>` to err.
int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace asr::cli

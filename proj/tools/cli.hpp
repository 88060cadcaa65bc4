#ifndef CSGNN_TOOLS_CLI_HPP
#define CSGNN_TOOLS_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace csgnn::cli {

enum ExitCode { kSuccess = 0, kVerificationFailure = 1, kUsageError = 2, kRuntimeError = 3 };

/// Runs the command line `args` (without the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace csgnn::cli

#endif  // CSGNN_TOOLS_CLI_HPP

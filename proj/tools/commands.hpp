#ifndef JFLOW_TOOLS_COMMANDS_HPP
#define JFLOW_TOOLS_COMMANDS_HPP

#include "run_config.hpp"

#include <iosfwd>
#include <string>

namespace jflow::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kError = 1;
inline constexpr int kViolated = 2;
inline constexpr int kMarginal = 3;
inline constexpr int kDegenerating = 4;
inline constexpr int kUndecided = 5;
inline constexpr int kStepFailure = 6;

int cmd_stability(const RunConfig& c, std::ostream& log);
int cmd_flow(const RunConfig& c, std::ostream& log);
int cmd_calabi(const RunConfig& c, std::ostream& log);
/// Echoes the normalized config (to `out_path`, or the log when empty) and
/// writes transition records for the config's sample points to `records_path`.
int cmd_report(const RunConfig& c, const std::string& out_path, const std::string& records_path, std::ostream& log);

/// Full command line front end; returns the process exit code.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

/// %.17g rendering used for every number in CSV output.
std::string num(double x);

}  // namespace jflow::cli

#endif

#pragma once

#include <exception>

namespace surgseg {

/// Exit statuses of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,    // usage or configuration error
  kExitData = 2,      // unreadable or malformed input
  kExitRuntime = 3,   // shape mismatch, training failure, other runtime error
};

/// Maps an exception raised by the library to an exit status.
int exit_code_for(const std::exception& error);

/// Entry point of the `surgseg` tool: generate-synthetic, ingest, train,
/// eval, crossval, heatmap, report. Never throws; returns an ExitCode.
int run_cli(int argc, const char* const* argv);

}  // namespace surgseg

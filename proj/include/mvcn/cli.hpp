#pragma once

#include <iosfwd>

namespace mvcn {

/// Exit statuses of the command-line runner.
enum ExitStatus : int {
  kExitPass = 0,
  kExitNumericFailure = 2,
  kExitRefused = 3,  // config errors and refusals
  kExitIo = 4,
};

/// Subcommands simulate, poc, tangent, ibp (--config required) and replay
/// (takes a record.json); shared flags --out, --seed, --threads. The thread
/// count falls back to MVCN_THREADS.
int cli_dispatch(int argc, const char* const* argv);
/// Same, with explicit output streams (tests capture them).
int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mvcn

#pragma once

#include <iosfwd>

namespace aeckit::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Subcommands: datagen, train, score, eval, rank, gradcheck, serve.
// Returns 0 on success, 2 on a usage error (usage on err), 1 on a runtime
// error (message on err).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace aeckit::cli

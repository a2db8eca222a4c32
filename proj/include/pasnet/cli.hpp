#pragma once

#include <iosfwd>

namespace pasnet {

/// Process exit codes.
enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitIo = 3, kExitNumeric = 4 };

/// `pasnet {gen-data|train|cv|ablate|sweep|eval|gradcheck} [flags]`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pasnet

#pragma once

#include <iosfwd>

namespace uvit::cli {

/// Exit codes: 0 success, 1 usage error, 2 validation or runtime error.
/// Results go to --out when given, otherwise to `out`; nothing is written
/// to any output path unless the command succeeds.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace uvit::cli

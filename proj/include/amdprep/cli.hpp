#pragma once

#include <iosfwd>

namespace amdprep {

/// Exit codes: 0 success, 2 usage or validation error, 1 runtime or I/O
/// error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace amdprep

#pragma once

#include <ostream>

namespace semdeblur {

// Entry point behind the `semdeblur` executable. Returns 0 on success, 1 on
// a usage error (help text is printed to `err`), 2 on a runtime error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace semdeblur

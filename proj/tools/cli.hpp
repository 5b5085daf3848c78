#pragma once

#include <ostream>

namespace bitgrad::cli {

/// Runs one command line. Exit codes: 0 success, 1 failed verification or
/// I/O / data error, 2 usage error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace bitgrad::cli

#pragma once

#include <ostream>

namespace tbd::cli {

/// Parses arguments, runs one command and returns the process exit status:
/// 0 on success, 1 when the work failed, 2 for usage or configuration errors.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tbd::cli

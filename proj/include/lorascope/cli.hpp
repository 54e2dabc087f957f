// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>
#include <span>
#include <string>

namespace lorascope::cli {

/// Runs one `lorascope` subcommand. `args` excludes the program name.
/// Returns 0 on success; on failure prints `error[<category>]: ...` to `err`
/// and returns exit_code(<category>).
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

int run(int argc, const char* const* argv);

}  // namespace lorascope::cli

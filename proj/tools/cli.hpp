#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ebsg::cli {

/// Parses and runs one CLI invocation. args excludes the program name.
/// Streams are injected so tests can drive the CLI in process: `in` feeds
/// `recommend` when no --prefix flag is given, normal output goes to `out`,
/// diagnostics and usage text go to `err`. Returns the process exit code.
int run_cli(std::vector<std::string> args, std::istream& in, std::ostream& out,
            std::ostream& err);

}  // namespace ebsg::cli

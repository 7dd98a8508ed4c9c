#pragma once

// Command-line front end: verify gates, noise table, ec simulate,
// threshold sweep, resources.

#include <iosfwd>
#include <string>
#include <vector>

namespace csqc::cli {

enum class Exit : int { ok = 0, verification_failed = 1, invalid_config = 2, resource_guard = 3 };

/// Runs one command line (`args` excludes the program name). Reports go to
/// `out` unless an output path is configured; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace csqc::cli

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace xlp::cli {

// Runs one `xlpivot` invocation. `args` excludes the program name.
// Returns 0 on success, 1 on operational errors (one "error: <code>: ..."
// line on `err`) and 2 on usage errors.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace xlp::cli

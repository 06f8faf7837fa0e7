#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mdfl {

/// Entry point of the `mdfl` tool. Returns the process exit code: 0 on
/// success, 2 for invalid input, 3 for runtime or training failures.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mdfl

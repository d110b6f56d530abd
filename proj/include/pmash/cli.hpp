#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace pmash {

/// Entry point of the pmash command-line tool. `args` excludes the program
/// name. Returns the process exit status: 0 on success, 10 + error code on
/// a library error, 2 on a usage error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pmash

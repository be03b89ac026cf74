#pragma once

#include <string>
#include <vector>

namespace fgp::cli {

// Exit codes: 0 ok, 1 user error, 2 internal error.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace fgp::cli

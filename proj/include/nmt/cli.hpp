#pragma once

#include <string>
#include <vector>

namespace nmt::cli {

// Runs one subcommand. Returns 0 on success, 1 on runtime failure, 2 on
// usage errors.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace nmt::cli

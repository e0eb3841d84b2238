#pragma once

#include <string>
#include <vector>

namespace its {

/// Exit codes: 0 success, 1 usage error, 2 runtime error.
int run_cli(const std::vector<std::string>& args);

}  // namespace its

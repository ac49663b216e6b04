#pragma once

#include <string>
#include <vector>

namespace carreg {

inline constexpr const char* kVersion = "0.1.0";

/// Entry point of the `carreg` tool. Returns the process exit code:
/// 0 on success, 1 on a runtime failure, 2 on usage errors.
int run_cli(int argc, char** argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace carreg

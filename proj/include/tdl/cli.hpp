#pragma once

#include <string>
#include <vector>

namespace tdl::cli {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kOutputRootEnv = "TDL_OUTPUT_ROOT";

/* Runs one command line. Returns 0 on success, 1 on a domain error (its name
 * goes to stderr) and 2 on a usage error. */
int dispatch(int argc, char** argv);
int dispatch(const std::vector<std::string>& args);

}  // namespace tdl::cli

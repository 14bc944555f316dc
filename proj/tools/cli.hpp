#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tdet::cli {

inline constexpr const char* kVersion = "1.0.0";

/// Entry point shared by the executable and the tests. args excludes the
/// program name. Returns 0 on success, 1 on usage errors, 2 on runtime
/// failures.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tdet::cli

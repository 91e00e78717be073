#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace csnorm::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kIoError = 1;
inline constexpr int kUsageError = 2;
inline constexpr int kNumericError = 3;

/// Runs one invocation. `args` excludes the program name. Machine-readable
/// CSV goes to `out`, everything meant for humans to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace csnorm::cli

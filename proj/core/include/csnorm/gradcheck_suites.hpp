#pragma once

#include <string>
#include <utility>
#include <vector>

#include "csnorm/gradcheck.hpp"

namespace csnorm {

/// Suites run by `gradcheck --module`: ops, csnorm, backbone, losses.
const std::vector<std::string>& gradcheck_module_names();

/// Runs one suite, or every suite for "all". Each entry pairs a module name
/// with its report. Unknown names throw std::invalid_argument.
std::vector<std::pair<std::string, GradcheckReport>> run_gradcheck_module(const std::string& module,
                                                                          const GradcheckOptions& opts);

}  // namespace csnorm

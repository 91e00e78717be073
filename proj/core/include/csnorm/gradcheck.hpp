#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "csnorm/autodiff.hpp"

namespace csnorm {

/// Builds a scalar loss from tape leaves bound to the parameters (same order).
using LossBuilder = std::function<Value(Tape&, std::span<const Value>)>;

struct GradcheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Differences at or below this absolute value always pass.
  double abs_floor = 1e-6;
  /// Elements compared per tensor; tensors with fewer elements are checked
  /// exhaustively.
  std::size_t samples_per_tensor = 100;
  std::uint64_t seed = 0;
  /// Fault-injection hook: negates the analytic gradient before comparison.
  bool negate_analytic = false;
};

struct ParamCheck {
  std::string name;
  std::size_t checked = 0;
  /// max |a - n| / max(|a|, |n|, abs_floor / tolerance)
  double max_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool pass = true;
};

struct GradcheckReport {
  std::vector<ParamCheck> params;
  bool all_pass() const;
  const ParamCheck* worst() const;
};

class GradcheckError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Compares reverse-mode gradients against central differences
/// (f(p+h) - f(p-h)) / 2h. Throws GradcheckError if two evaluations at the
/// same point disagree bitwise. Parameters are restored on return.
GradcheckReport gradcheck(const LossBuilder& f, std::span<const NamedParam> params,
                          const GradcheckOptions& opts = {});

}  // namespace csnorm

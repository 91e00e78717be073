#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "csnorm/autodiff.hpp"

namespace csnorm {

enum class OptimizerKind { sgd, adam };

OptimizerKind parse_optimizer(const std::string& name);
const char* to_string(OptimizerKind k);

/// Plain SGD or Adam (beta1 0.9, beta2 0.999, eps 1e-8). State is keyed by
/// parameter name; a parameter not passed to step() keeps its state untouched,
/// including Adam's step counter.
class Optimizer {
 public:
  explicit Optimizer(OptimizerKind kind = OptimizerKind::sgd) : kind_(kind) {}

  /// Applies one update from each tensor's grad buffer (missing grad = 0).
  void step(std::span<const NamedParam> params, double lr);

  OptimizerKind kind() const { return kind_; }

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

 private:
  struct Moments {
    std::vector<double> m, v;
    long long t = 0;
  };
  OptimizerKind kind_;
  std::map<std::string, Moments> state_;
};

}  // namespace csnorm

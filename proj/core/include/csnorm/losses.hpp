#pragma once

#include "csnorm/autodiff.hpp"

namespace csnorm {

struct LossBreakdown {
  double pixel = 0.0;
  double amplitude = 0.0;
  double total = 0.0;
  double delta = 0.0;
};

/// Scalar node plus its plain-value breakdown.
struct LossNode {
  Value total;
  LossBreakdown values;
};

/// Pixel MSE over all elements. Used for outside-partition updates.
LossNode loss_step1(Tape& t, Value pred, Value gt);

/// Pixel MSE + delta * amplitude_l2. Used for inside-partition updates.
LossNode loss_step2(Tape& t, Value pred, Value gt, double delta);

LossBreakdown loss_step1(const Tensor4& pred, const Tensor4& gt);
LossBreakdown loss_step2(const Tensor4& pred, const Tensor4& gt, double delta);

}  // namespace csnorm

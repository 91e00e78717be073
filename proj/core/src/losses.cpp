#include "csnorm/losses.hpp"

#include <stdexcept>

#include "csnorm/ops.hpp"
#include "csnorm/spectral.hpp"

namespace csnorm {

namespace {

void require_same(const Tape& t, Value a, Value b, const char* op) {
  if (t.shape(a) != t.shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(t.shape(a)) + " vs " +
                     to_string(t.shape(b)));
  }
}

}  // namespace

LossNode loss_step1(Tape& t, Value pred, Value gt) {
  require_same(t, pred, gt, "loss_step1");
  const Value pixel = mean_square(t, sub(t, pred, gt));
  LossNode out{pixel, {}};
  out.values.pixel = t.value(pixel)[0];
  out.values.total = out.values.pixel;
  return out;
}

LossNode loss_step2(Tape& t, Value pred, Value gt, double delta) {
  require_same(t, pred, gt, "loss_step2");
  if (!(delta >= 0.0)) throw std::invalid_argument("loss_step2: delta must be >= 0");
  const Value pixel = mean_square(t, sub(t, pred, gt));
  const Value amp = amplitude_l2(t, pred, gt);
  const Value total = add(t, pixel, mul_scalar(t, amp, delta));
  LossNode out{total, {}};
  out.values.pixel = t.value(pixel)[0];
  out.values.amplitude = t.value(amp)[0];
  out.values.total = t.value(total)[0];
  out.values.delta = delta;
  return out;
}

LossBreakdown loss_step1(const Tensor4& pred, const Tensor4& gt) {
  Tape t;
  return loss_step1(t, t.constant(pred), t.constant(gt)).values;
}

LossBreakdown loss_step2(const Tensor4& pred, const Tensor4& gt, double delta) {
  Tape t;
  return loss_step2(t, t.constant(pred), t.constant(gt), delta).values;
}

}  // namespace csnorm

#include "csnorm/gradcheck.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "csnorm/rng.hpp"

namespace csnorm {

bool GradcheckReport::all_pass() const {
  return std::all_of(params.begin(), params.end(), [](const ParamCheck& p) { return p.pass; });
}

const ParamCheck* GradcheckReport::worst() const {
  const ParamCheck* w = nullptr;
  for (const auto& p : params) {
    if (w == nullptr || p.max_error > w->max_error) w = &p;
  }
  return w;
}

namespace {

double evaluate(const LossBuilder& f, std::span<const NamedParam> params) {
  Tape tape;
  std::vector<Value> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.constant(Tensor4(p.tensor->shape(), p.tensor->storage())));
  const Value loss = f(tape, leaves);
  const Tensor4& v = tape.value(loss);
  if (v.size() != 1) throw ShapeError("gradcheck: loss must be scalar");
  return v[0];
}

std::vector<std::size_t> sample_indices(std::size_t numel, std::size_t count, Rng& rng) {
  std::vector<std::size_t> idx(numel);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (numel <= count) return idx;
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < count; ++i) std::swap(idx[i], idx[i + rng.index(numel - i)]);
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradcheckReport gradcheck(const LossBuilder& f, std::span<const NamedParam> params,
                          const GradcheckOptions& opts) {
  if (!(opts.step > 0.0)) throw std::invalid_argument("gradcheck: step must be positive");

  const double base0 = evaluate(f, params);
  const double base1 = evaluate(f, params);
  if (std::bit_cast<std::uint64_t>(base0) != std::bit_cast<std::uint64_t>(base1)) {
    throw GradcheckError("gradcheck: loss builder is non-deterministic");
  }

  // Analytic gradients.
  for (const auto& p : params) p.tensor->zero_grad();
  {
    Tape tape;
    std::vector<Value> leaves;
    for (const auto& p : params) leaves.push_back(tape.parameter(*p.tensor));
    tape.backward(f(tape, leaves));
  }

  Rng rng(opts.seed, 0x6772616463686b);
  const double denom_floor = opts.abs_floor / opts.tolerance;
  GradcheckReport report;
  for (const auto& p : params) {
    ParamCheck pc;
    pc.name = p.name;
    Tensor4& tensor = *p.tensor;
    const std::vector<double> analytic = tensor.grad();
    for (std::size_t i : sample_indices(tensor.size(), opts.samples_per_tensor, rng)) {
      const double orig = tensor[i];
      tensor[i] = orig + opts.step;
      const double fp = evaluate(f, params);
      tensor[i] = orig - opts.step;
      const double fm = evaluate(f, params);
      tensor[i] = orig;

      const double numeric = (fp - fm) / (2.0 * opts.step);
      const double a = opts.negate_analytic ? -analytic[i] : analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), denom_floor});
      const double err = std::abs(a - numeric) / denom;
      ++pc.checked;
      // NaN compares false and therefore always becomes the worst offender.
      if (pc.checked == 1 || !(err <= pc.max_error)) {
        pc.max_error = err;
        pc.worst_index = i;
        pc.worst_analytic = a;
        pc.worst_numeric = numeric;
      }
    }
    pc.pass = pc.checked == 0 || pc.max_error <= opts.tolerance;
    report.params.push_back(std::move(pc));
  }
  return report;
}

}  // namespace csnorm

#include "csnorm/gradcheck_suites.hpp"

#include <stdexcept>

#include "csnorm/backbone.hpp"
#include "csnorm/csnorm_layer.hpp"
#include "csnorm/losses.hpp"
#include "csnorm/ops.hpp"
#include "csnorm/spectral.hpp"

namespace csnorm {

namespace {

Tensor4 random_tensor(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor4 t(s);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// sum(w * v) with a fixed random weight, so no gradient is uniform.
Value project(Tape& t, Value v, std::uint64_t seed) {
  Rng rng(seed, 77);
  return sum(t, mul(t, v, t.constant(random_tensor(t.shape(v), rng))));
}

void append(GradcheckReport& into, const GradcheckReport& from, const std::string& prefix) {
  for (auto p : from.params) {
    p.name = prefix + p.name;
    into.params.push_back(std::move(p));
  }
}

GradcheckReport check_ops(const GradcheckOptions& opts) {
  Rng rng(opts.seed, 1);
  GradcheckReport report;
  {
    Tensor4 x = random_tensor({2, 3, 5, 5}, rng), k = random_tensor({4, 3, 3, 3}, rng);
    std::vector<NamedParam> ps = {{"input", &x}, {"kernel", &k}};
    append(report, gradcheck([](Tape& t, std::span<const Value> v) { return project(t, conv2d(t, v[0], v[1], 2, 1), 1); },
                             ps, opts),
           "conv2d.");
  }
  {
    Tensor4 x = random_tensor({2, 5, 1, 1}, rng), w = random_tensor({4, 5, 1, 1}, rng), b = random_tensor({1, 4, 1, 1}, rng);
    std::vector<NamedParam> ps = {{"input", &x}, {"weight", &w}, {"bias", &b}};
    append(report, gradcheck([](Tape& t, std::span<const Value> v) { return project(t, dense(t, v[0], v[1], v[2]), 2); },
                             ps, opts),
           "dense.");
  }
  {
    Tensor4 a = random_tensor({2, 3, 4, 4}, rng), b = random_tensor({2, 3, 4, 4}, rng);
    Tensor4 c = random_tensor({1, 3, 1, 1}, rng);
    std::vector<NamedParam> ps = {{"a", &a}, {"b", &b}, {"bias", &c}};
    const LossBuilder f = [](Tape& t, std::span<const Value> v) {
      const Value prod = mul(t, v[0], v[1]);
      const Value diff = sub(t, add(t, prod, v[0]), mul_scalar(t, v[1], 0.5));
      const Value shifted = add_channel_bias(t, add_scalar(t, diff, 0.1), v[2]);
      return add(t, project(t, relu(t, shifted), 3), mean_square(t, shifted));
    };
    append(report, gradcheck(f, ps, opts), "elementwise.");
  }
  {
    Tensor4 x = random_tensor({2, 3, 4, 5}, rng);
    std::vector<NamedParam> ps = {{"input", &x}};
    const LossBuilder f = [](Tape& t, std::span<const Value> v) {
      const auto [mu, var] = channel_stats(t, v[0]);
      const Value pooled = global_avg_pool(t, mul(t, v[0], v[0]));
      return add(t, add(t, project(t, mu, 4), project(t, rsqrt(t, var, kVarianceEps), 5)),
                 add(t, project(t, pooled, 6), mean(t, broadcast_to(t, mu, t.shape(v[0])))));
    };
    append(report, gradcheck(f, ps, opts), "stats.");
  }
  {
    Tensor4 alpha = random_tensor({2, 6, 1, 1}, rng, -0.05, 0.05);
    alpha[0] = 0.0;
    Tensor4 x = random_tensor({2, 6, 3, 3}, rng), z = random_tensor({2, 6, 3, 3}, rng);
    std::vector<NamedParam> ps = {{"alpha", &alpha}, {"x", &x}, {"normalized", &z}};
    const LossBuilder f = [](Tape& t, std::span<const Value> v) {
      return project(t, gated_mix(t, v[1], v[2], gate_function(t, v[0], kGateEps)), 7);
    };
    append(report, gradcheck(f, ps, opts), "gate.");
  }
  return report;
}

GradcheckReport check_csnorm(const GradcheckOptions& opts) {
  Rng rng(opts.seed, 2);
  CSNormLayer layer(4, 8, kGateEps, rng);
  for (double& v : layer.gamma.data()) v = rng.uniform(0.5, 1.5);
  for (double& v : layer.beta.data()) v = rng.uniform(-0.5, 0.5);
  Tensor4 x = random_tensor({2, 4, 6, 6}, rng, 0.0, 1.0);
  std::vector<NamedParam> ps = {{"input", &x}};
  for (const auto& p : layer.parameters("")) ps.push_back(p);
  const LossBuilder f = [&layer](Tape& t, std::span<const Value> v) {
    const CSNormBinding b{v[1], v[2], v[3], v[4], v[5], v[6]};
    return project(t, csnorm_forward(t, v[0], layer, b), 8);
  };
  return gradcheck(f, ps, opts);
}

GradcheckReport check_backbone(const GradcheckOptions& opts) {
  Rng rng(opts.seed, 3);
  ToyBackbone model(BackboneConfig{}, opts.seed);
  const Tensor4 x = random_tensor({2, 3, 6, 6}, rng, 0.0, 1.0);
  const Tensor4 gt = random_tensor({2, 3, 6, 6}, rng, 0.0, 1.0);
  auto ps = model.parameters();
  // The model binds its own tensors, so the leaves handed in are unused.
  const LossBuilder f = [&](Tape& t, std::span<const Value>) {
    return loss_step2(t, model.forward(t, t.constant(x), Trainable::all), t.constant(gt), 0.01).total;
  };
  return gradcheck(f, ps, opts);
}

GradcheckReport check_losses(const GradcheckOptions& opts) {
  Rng rng(opts.seed, 4);
  Tensor4 pred = random_tensor({2, 3, 5, 6}, rng, 0.0, 1.0), gt = random_tensor({2, 3, 5, 6}, rng, 0.0, 1.0);
  GradcheckReport report;
  std::vector<NamedParam> ps = {{"pred", &pred}, {"target", &gt}};
  append(report, gradcheck([](Tape& t, std::span<const Value> v) { return loss_step1(t, v[0], v[1]).total; }, ps, opts),
         "step1.");
  append(report,
         gradcheck([](Tape& t, std::span<const Value> v) { return loss_step2(t, v[0], v[1], 0.5).total; }, ps, opts),
         "step2.");
  append(report, gradcheck([](Tape& t, std::span<const Value> v) { return amplitude_l2(t, v[0], v[1]); }, ps, opts),
         "amplitude.");
  return report;
}

}  // namespace

const std::vector<std::string>& gradcheck_module_names() {
  static const std::vector<std::string> names = {"ops", "csnorm", "backbone", "losses"};
  return names;
}

std::vector<std::pair<std::string, GradcheckReport>> run_gradcheck_module(const std::string& module,
                                                                          const GradcheckOptions& opts) {
  std::vector<std::pair<std::string, GradcheckReport>> out;
  if (module == "all") {
    for (const auto& m : gradcheck_module_names()) out.emplace_back(m, run_gradcheck_module(m, opts).front().second);
    return out;
  }
  if (module == "ops") out.emplace_back(module, check_ops(opts));
  else if (module == "csnorm") out.emplace_back(module, check_csnorm(opts));
  else if (module == "backbone") out.emplace_back(module, check_backbone(opts));
  else if (module == "losses") out.emplace_back(module, check_losses(opts));
  else throw std::invalid_argument("unknown gradcheck module '" + module + "' (expected ops, csnorm, backbone, losses or all)");
  return out;
}

}  // namespace csnorm

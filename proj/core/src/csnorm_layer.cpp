#include "csnorm/csnorm_layer.hpp"

#include <cstdio>
#include <ostream>

#include "csnorm/ops.hpp"

namespace csnorm {

const char* to_string(GateMode m) {
  switch (m) {
    case GateMode::learned: return "learned";
    case GateMode::forced_off: return "forced_off";
    case GateMode::forced_on: return "forced_on";
  }
  return "?";
}

CSNormLayer::CSNormLayer(std::size_t channels, std::size_t hidden, double eps, Rng& rng)
    : gamma({1, channels, 1, 1}, 1.0),
      beta({1, channels, 1, 1}, 0.0),
      gate1_weight(init_uniform_fan_in({hidden, channels, 1, 1}, rng)),
      gate1_bias({1, hidden, 1, 1}, 0.0),
      gate2_weight(init_uniform_fan_in({channels, hidden, 1, 1}, rng)),
      gate2_bias({1, channels, 1, 1}, 0.0),
      epsilon(eps) {
  if (channels == 0 || hidden == 0) throw ShapeError("CSNormLayer: channels and hidden must be >= 1");
  if (!(eps > 0.0)) throw NumericError("CSNormLayer: epsilon must be positive");
  for (double& w : gate2_weight.data()) w *= kGateInitScale;
}

std::vector<NamedParam> CSNormLayer::parameters(const std::string& prefix) {
  return {
      {prefix + "gamma", &gamma},
      {prefix + "beta", &beta},
      {prefix + "gate1.weight", &gate1_weight},
      {prefix + "gate1.bias", &gate1_bias},
      {prefix + "gate2.weight", &gate2_weight},
      {prefix + "gate2.bias", &gate2_bias},
  };
}

CSNormBinding bind(Tape& tape, CSNormLayer& layer, bool trainable) {
  auto leaf = [&](Tensor4& p) {
    return trainable ? tape.parameter(p) : tape.constant(Tensor4(p.shape(), p.storage()));
  };
  return {leaf(layer.gamma),        leaf(layer.beta),         leaf(layer.gate1_weight),
          leaf(layer.gate1_bias),   leaf(layer.gate2_weight), leaf(layer.gate2_bias)};
}

Value instance_norm(Tape& t, Value x, Value gamma, Value beta) {
  const Shape xs = t.shape(x);
  if (t.shape(gamma) != Shape{1, xs.c, 1, 1} || t.shape(beta) != Shape{1, xs.c, 1, 1}) {
    throw ShapeError("instance_norm: gamma/beta must be 1x" + std::to_string(xs.c) + "x1x1");
  }
  const auto [mu, var] = channel_stats(t, x);
  const Value inv_sigma = rsqrt(t, var, kVarianceEps);
  const Value centered = sub(t, x, broadcast_to(t, mu, xs));
  const Value z = mul(t, centered, broadcast_to(t, inv_sigma, xs));
  return add(t, mul(t, z, broadcast_to(t, gamma, xs)), broadcast_to(t, beta, xs));
}

GateValues gate_forward(Tape& t, Value x, const CSNormBinding& b, double epsilon) {
  const Shape xs = t.shape(x);
  if (t.shape(b.gate1_weight).c != xs.c || t.shape(b.gate2_weight).n != xs.c) {
    throw ShapeError("gate_forward: gate MLP width does not match input channels " +
                     std::to_string(xs.c));
  }
  const Value pooled = global_avg_pool(t, x);
  const Value hidden = relu(t, dense(t, pooled, b.gate1_weight, b.gate1_bias));
  const Value alpha = dense(t, hidden, b.gate2_weight, b.gate2_bias);
  return {alpha, gate_function(t, alpha, epsilon)};
}

Value csnorm_mix(Tape& t, Value x, const CSNormBinding& b, Value g) {
  return gated_mix(t, x, instance_norm(t, x, b.gamma, b.beta), g);
}

Value csnorm_forward(Tape& t, Value x, const CSNormLayer& layer, const CSNormBinding& b,
                     GateValues* gates) {
  const Shape xs = t.shape(x);
  if (xs.c != layer.channels()) {
    throw ShapeError("csnorm_forward: input has " + std::to_string(xs.c) + " channels, layer " +
                     std::to_string(layer.channels()));
  }
  GateValues gv;
  switch (layer.mode) {
    case GateMode::learned:
      gv = gate_forward(t, x, b, layer.epsilon);
      break;
    case GateMode::forced_off:
      gv.g = t.constant(Tensor4({xs.n, xs.c, 1, 1}, 0.0));
      break;
    case GateMode::forced_on:
      gv.g = t.constant(Tensor4({xs.n, xs.c, 1, 1}, 1.0));
      break;
  }
  if (gates != nullptr) *gates = gv;
  return csnorm_mix(t, x, b, gv.g);
}

Tensor4 gate_values(const Tensor4& alpha, double epsilon) {
  Tape t;
  return t.value(gate_function(t, t.constant(alpha), epsilon));
}

std::size_t param_count(std::size_t channels, std::size_t hidden) {
  return 2 * channels + (channels * hidden + hidden) + (hidden * channels + channels);
}

std::vector<GateReportRow> inspect_gates(const Tensor4& x, CSNormLayer& layer) {
  Tape t;
  const CSNormBinding b = bind(t, layer, false);
  const Value xv = t.constant(x);
  GateValues gv;
  csnorm_forward(t, xv, layer, b, &gv);
  const Tensor4& g = t.value(gv.g);
  const Shape s = g.shape();
  std::vector<GateReportRow> rows;
  rows.reserve(s.n * s.c);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      GateReportRow r;
      r.batch = n;
      r.channel = c;
      r.alpha = gv.alpha.valid() ? t.value(gv.alpha).at(n, c, 0, 0) : 0.0;
      r.g = g.at(n, c, 0, 0);
      r.selected = r.g > kSelectThreshold;
      rows.push_back(r);
    }
  }
  return rows;
}

void write_gate_csv(std::ostream& os, const std::vector<GateReportRow>& rows) {
  os << "batch,channel,alpha,g,selected\n";
  char buf[64];
  for (const auto& r : rows) {
    os << r.batch << ',' << r.channel << ',';
    std::snprintf(buf, sizeof buf, "%.17g", r.alpha);
    os << buf << ',';
    std::snprintf(buf, sizeof buf, "%.17g", r.g);
    os << buf << ',' << (r.selected ? 1 : 0) << '\n';
  }
}

}  // namespace csnorm

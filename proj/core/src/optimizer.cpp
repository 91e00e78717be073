#include "csnorm/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace csnorm {

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw std::invalid_argument("unknown optimizer '" + name + "' (expected sgd or adam)");
}

const char* to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

void Optimizer::step(std::span<const NamedParam> params, double lr) {
  for (const auto& p : params) {
    Tensor4& w = *p.tensor;
    if (!w.has_grad()) continue;
    const auto& g = w.grad();
    if (kind_ == OptimizerKind::sgd) {
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
      continue;
    }
    Moments& st = state_[p.name];
    if (st.m.empty()) {
      st.m.assign(w.size(), 0.0);
      st.v.assign(w.size(), 0.0);
    }
    ++st.t;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < w.size(); ++i) {
      st.m[i] = kBeta1 * st.m[i] + (1.0 - kBeta1) * g[i];
      st.v[i] = kBeta2 * st.v[i] + (1.0 - kBeta2) * g[i] * g[i];
      const double mhat = st.m[i] / c1;
      const double vhat = st.v[i] / c2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + kEps);
    }
  }
}

}  // namespace csnorm

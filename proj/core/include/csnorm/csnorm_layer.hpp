#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "csnorm/autodiff.hpp"
#include "csnorm/rng.hpp"

namespace csnorm {

/// Variance guard inside sigma(x) = sqrt(var + kVarianceEps).
inline constexpr double kVarianceEps = 1e-5;
/// Default epsilon of the gate function g = a^2 / (a^2 + eps).
inline constexpr double kGateEps = 1e-4;
/// Reporting threshold for "selected" channels. Never used in forward math.
inline constexpr double kSelectThreshold = 0.5;

enum class GateMode {
  learned,     // g from the gate MLP
  forced_off,  // g == 0: layer is the identity
  forced_on,   // g == 1: plain instance normalization
};

const char* to_string(GateMode m);

/// Channel selective normalization: instance norm with affine (gamma, beta),
/// a gate MLP C -> hidden -> C on the pooled input, and a per-channel blend
/// of the original and normalized features.
inline constexpr double kGateInitScale = 1e-3;

struct CSNormLayer {
  CSNormLayer() = default;
  /// gamma = 1, beta = 0, biases 0, first MLP layer uniform(+-1/sqrt(fan_in)).
  /// The last layer is that draw times kGateInitScale, so every gate starts
  /// near 0 (the layer begins as an identity) yet off the alpha = 0 saddle.
  CSNormLayer(std::size_t channels, std::size_t hidden, double epsilon, Rng& rng);

  std::size_t channels() const { return gamma.shape().c; }
  std::size_t hidden() const { return gate1_bias.shape().c; }

  /// Trainable tensors under `prefix` ("gamma", "beta", "gate1.weight", ...).
  std::vector<NamedParam> parameters(const std::string& prefix);

  Tensor4 gamma;         // 1 x C x 1 x 1
  Tensor4 beta;          // 1 x C x 1 x 1
  Tensor4 gate1_weight;  // hidden x C x 1 x 1
  Tensor4 gate1_bias;    // 1 x hidden x 1 x 1
  Tensor4 gate2_weight;  // C x hidden x 1 x 1
  Tensor4 gate2_bias;    // 1 x C x 1 x 1
  double epsilon = kGateEps;
  GateMode mode = GateMode::learned;
};

/// Tape leaves for one layer.
struct CSNormBinding {
  Value gamma, beta, gate1_weight, gate1_bias, gate2_weight, gate2_bias;
};

/// Binds the layer's tensors as parameters (trainable) or constants.
CSNormBinding bind(Tape& tape, CSNormLayer& layer, bool trainable);

/// gamma * (x - mu) / sqrt(var + kVarianceEps) + beta, per instance and channel.
Value instance_norm(Tape& t, Value x, Value gamma, Value beta);

struct GateValues {
  Value alpha;  // N x C x 1 x 1
  Value g;      // N x C x 1 x 1
};

/// alpha = mlp(global_avg_pool(x)), g = alpha^2 / (alpha^2 + eps).
GateValues gate_forward(Tape& t, Value x, const CSNormBinding& b, double epsilon);

/// (1 - g) * x + g * instance_norm(x) for an explicit gate tensor g.
Value csnorm_mix(Tape& t, Value x, const CSNormBinding& b, Value g);

/// Full layer according to layer.mode. When `gates` is non-null it receives
/// the gate nodes (alpha is invalid in forced modes).
Value csnorm_forward(Tape& t, Value x, const CSNormLayer& layer, const CSNormBinding& b,
                     GateValues* gates = nullptr);

/// Evaluates the gate function on plain values.
Tensor4 gate_values(const Tensor4& alpha, double epsilon);

/// 2C + (C*hidden + hidden) + (hidden*C + C)
std::size_t param_count(std::size_t channels, std::size_t hidden);

struct GateReportRow {
  std::size_t batch = 0;
  std::size_t channel = 0;
  double alpha = 0.0;
  double g = 0.0;
  bool selected = false;
};

/// Gate values for every (instance, channel) of `x`, which must already be
/// the feature the layer sees.
std::vector<GateReportRow> inspect_gates(const Tensor4& x, CSNormLayer& layer);

/// CSV with header `batch,channel,alpha,g,selected`.
void write_gate_csv(std::ostream& os, const std::vector<GateReportRow>& rows);

}  // namespace csnorm

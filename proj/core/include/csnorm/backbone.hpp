#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "csnorm/autodiff.hpp"
#include "csnorm/csnorm_layer.hpp"
#include "csnorm/digest.hpp"

namespace csnorm {

struct BackboneConfig {
  bool with_csnorm = true;
  GateMode gate_mode = GateMode::learned;
  double epsilon = kGateEps;
  /// Gate MLP hidden width; 0 means 2 * feature channels.
  std::size_t gate_hidden = 0;

  static constexpr std::size_t kImageChannels = 3;
  static constexpr std::size_t kWidth1 = 16;
  static constexpr std::size_t kFeatureChannels = 32;

  std::size_t hidden() const { return gate_hidden == 0 ? 2 * kFeatureChannels : gate_hidden; }
  /// Canonical text identifying the architecture; hashed into checkpoints.
  std::string canonical() const;
  Sha256 digest() const;
};

struct ConvLayer {
  Tensor4 weight;  // C_out x C_in x 3 x 3
  Tensor4 bias;    // 1 x C_out x 1 x 1
};

/// Intermediates of one forward pass, for inspection.
struct ForwardTrace {
  Tensor4 feature;     // encoder output seen by the CSNorm slot
  Tensor4 normalized;  // slot output (equals feature without a slot)
  Tensor4 alpha;       // N x C x 1 x 1, empty unless gates are learned
  Tensor4 gate;        // N x C x 1 x 1, empty without a slot
};

/// Which parameters a forward pass binds as gradient-receiving leaves; the
/// rest are recorded as constants.
enum class Trainable { none, outside, inside, all };

/// Which side of the alternating split a parameter belongs to.
struct ParamPartition {
  std::vector<std::string> inside;   // CSNorm parameters
  std::vector<std::string> outside;  // everything else
};

/// Conv enhancer: enc 3->16->32 (3x3, pad 1, ReLU), optional CSNorm on the
/// 32-channel feature, dec 32->16 (ReLU) ->3 with a linear output.
class ToyBackbone {
 public:
  ToyBackbone() = default;
  ToyBackbone(const BackboneConfig& cfg, std::uint64_t seed);

  const BackboneConfig& config() const { return cfg_; }
  bool has_csnorm() const { return csnorm_.has_value(); }
  CSNormLayer& csnorm();
  const CSNormLayer& csnorm() const;

  /// Every trainable tensor in a fixed order.
  std::vector<NamedParam> parameters();
  std::vector<NamedParam> inside_parameters();
  std::vector<NamedParam> outside_parameters();
  ParamPartition partition();

  /// Records the forward pass on `t`.
  Value forward(Tape& t, Value x, Trainable which, ForwardTrace* trace = nullptr);
  /// Plain inference, no gradients.
  Tensor4 predict(const Tensor4& x, ForwardTrace* trace = nullptr) const;

  /// Bitwise equality of every parameter.
  bool same_parameters(const ToyBackbone& other) const;
  std::size_t parameter_count() const;

 private:
  BackboneConfig cfg_;
  ConvLayer enc1_, enc2_, dec1_, dec2_;
  std::optional<CSNormLayer> csnorm_;
};

}  // namespace csnorm

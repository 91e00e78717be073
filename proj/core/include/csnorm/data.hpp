#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "csnorm/digest.hpp"
#include "csnorm/kv_file.hpp"
#include "csnorm/tensor.hpp"

namespace csnorm {

inline constexpr std::size_t kMaxImageSize = 64;
inline constexpr double kInterpWeight = 0.5;
inline constexpr double kScaleGain = 1.2;      // Lambda of x' = Lambda * x^eta
inline constexpr double kScaleExponent = 1.1;  // eta

enum class ConditionKind { original, interp, scale, custom };

struct Condition {
  ConditionKind kind = ConditionKind::original;
  double gain = kScaleGain;          // custom only
  double exponent = kScaleExponent;  // custom only

  std::string tag() const;
};

/// A degraded input and its target, both 1 x 3 x H x W in [0,1].
struct ScenePair {
  Tensor4 degraded;
  Tensor4 target;
  Condition condition;
};

using Dataset = std::vector<ScenePair>;

/// Procedural scenes darkened by degraded = gain * target^gamma + noise.
struct SceneSpec {
  std::uint64_t seed = 0;
  std::size_t count = 0;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t rectangles = 3;
  std::size_t gradients = 1;
  std::size_t sinusoids = 2;
  double dark_gamma = 2.0;
  double dark_gain = 0.4;
  double noise_sigma = 0.01;
  /// Each target's mean is drawn from exposure +- exposure_jitter, so the
  /// darkening, not the scene, carries the brightness difference.
  double exposure = 0.5;
  double exposure_jitter = 0.05;
  std::string domain = "A";

  /// Domain A: gain 0.4, gamma 2.0. Domain B: gain 0.25, gamma 2.6.
  static SceneSpec domain_preset(const std::string& domain);

  void validate() const;
  KvFile to_kv() const;
  static SceneSpec from_kv(const KvFile& kv);
};

/// Deterministic in the spec; item i uses its own PRNG stream (seed, i).
/// Pixel values are quantized to k/255 so a saved dataset reloads bit-exactly.
Dataset gen_scene_pairs(const SceneSpec& spec);

/// w * degraded + (1 - w) * target, clamped to [0,1].
Tensor4 condition_interp(const Tensor4& degraded, const Tensor4& target, double w = kInterpWeight);

/// gain * x^exponent, clamped to [0,1]. Throws NumericError on negative input.
Tensor4 condition_scale(const Tensor4& x, double gain = kScaleGain, double exponent = kScaleExponent);

/// Applies `cond` to each pair's degraded input; targets are kept.
Dataset apply_condition(const Dataset& data, const Condition& cond);

/// Writes degraded_%04d.ppm / target_%04d.ppm plus spec.manifest.
void save_dataset(const std::string& dir, const Dataset& data, const SceneSpec& spec);
Dataset load_dataset(const std::string& dir, SceneSpec* spec = nullptr);

/// SHA-256 over the T4F encoding of every image, in order.
Sha256 dataset_digest(const Dataset& data);

/// Stacks the pairs at `indices` into batch tensors.
void make_batch(const Dataset& data, const std::vector<std::size_t>& indices, Tensor4& degraded,
                Tensor4& target);

}  // namespace csnorm

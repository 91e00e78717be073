#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "csnorm/backbone.hpp"
#include "csnorm/data.hpp"
#include "csnorm/kv_file.hpp"
#include "csnorm/losses.hpp"
#include "csnorm/optimizer.hpp"

namespace csnorm {

/// Input perturbation used for inside-partition (or mixed) batches.
enum class PerturbationKind {
  amplitude,  // Fourier amplitude interpolation toward the target, lambda ~ U[lambda_min, lambda_max]
  linear,     // pixel blend condition_interp(degraded, target, linear_weight)
};

PerturbationKind parse_perturbation(const std::string& name);
const char* to_string(PerturbationKind k);

/// Learning-rate schedule over the step-1 (or joint) batches of a run.
enum class LrSchedule {
  constant,
  cosine,  // factor 0.5 * (1 + cos(pi * s / total)), s counted from 0
};

LrSchedule parse_schedule(const std::string& name);
const char* to_string(LrSchedule s);

enum class StepKind : int {
  joint = 0,    // every parameter updated (baseline, mixed)
  outside = 1,  // step 1: parameters outside CSNorm
  inside = 2,   // step 2: CSNorm parameters on perturbed input
};

struct LogRow {
  std::size_t epoch = 0;
  StepKind step_kind = StepKind::joint;
  double loss_pixel = 0.0;
  double loss_amp = 0.0;
  double holdout_psnr = 0.0;  // NaN when no holdout set was given
};

struct TrainConfig {
  std::size_t epochs = 10;
  /// Outside-partition (step-1) batches per epoch.
  std::size_t steps_per_epoch = 20;
  std::size_t batch_size = 4;
  /// Inside-partition (step-2) batches per step-1 batch; fractional values
  /// accumulate.
  double ratio = 1.0;
  double lr_out = 1e-2;
  double lr_in = 1e-2;
  double delta = 1.0;
  double epsilon = kGateEps;
  double lambda_min = 0.0;
  double lambda_max = 1.0;
  OptimizerKind optimizer = OptimizerKind::sgd;
  LrSchedule schedule = LrSchedule::constant;
  PerturbationKind perturbation = PerturbationKind::amplitude;
  double linear_weight = kInterpWeight;
  /// Per-sample probability of a perturbed input in mixed training.
  double mix_probability = 0.5;
  std::uint64_t seed = 0;
  std::string checkpoint_path;
  /// Called with each log row as soon as it exists. Not part of the digest.
  std::function<void(const LogRow&)> on_row;

  void validate() const;
  KvFile to_kv() const;
  /// Overrides fields present in `kv`; unknown keys throw.
  void apply(const KvFile& kv);
  Sha256 digest() const;
  /// Multiplier applied to both learning rates at step-1 (or joint) batch
  /// `step` of epochs * steps_per_epoch.
  double lr_factor(std::size_t step) const;
};

struct TrainLog {
  std::vector<LogRow> rows;
  /// CSV `epoch,step_kind,loss_pixel,loss_amp,holdout_psnr`.
  void write_csv(std::ostream& os) const;
};

/// Alternates step 1 (original input, pixel MSE, outside parameters only) and
/// step 2 (perturbed input, pixel MSE + delta * amplitude loss, CSNorm
/// parameters only). Throws std::invalid_argument without a CSNorm slot or
/// with empty data, NumericError on a non-finite loss.
TrainLog train_alternating(ToyBackbone& model, const Dataset& train, const Dataset& holdout,
                           const TrainConfig& cfg);

/// Pixel-MSE training of every parameter on original inputs.
TrainLog train_baseline(ToyBackbone& model, const Dataset& train, const Dataset& holdout,
                        const TrainConfig& cfg);

/// Pixel-MSE training of every parameter; each sample is perturbed with
/// probability cfg.mix_probability.
TrainLog train_mixed(ToyBackbone& model, const Dataset& train, const Dataset& holdout,
                     const TrainConfig& cfg);

/// One step-1 or step-2 update on an explicit batch. Exposed for the
/// partition-freeze tests.
LossBreakdown alternating_update(ToyBackbone& model, Optimizer& opt, const Tensor4& input,
                                 const Tensor4& target, StepKind kind, const TrainConfig& cfg,
                                 double lr_scale = 1.0);

/// Mean PSNR of the clamped predictions over the dataset.
double mean_psnr(const ToyBackbone& model, const Dataset& data);

struct MetricRow {
  std::string condition;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

struct MetricTable {
  std::vector<MetricRow> rows;  // one per condition, then "average" if non-empty
  /// CSV `condition,psnr_db,ssim`.
  void write_csv(std::ostream& os) const;
  const MetricRow& at(const std::string& condition) const;
};

/// Resolves `original`, `interp`, `scale` against `data` and `cross:NAME`
/// against `cross`. Unknown tags throw std::invalid_argument.
MetricTable evaluate(const ToyBackbone& model, const Dataset& data, const std::vector<std::string>& conditions,
                     const std::map<std::string, Dataset>& cross = {});

/// Per-channel gate values averaged over the instances of `data`.
std::vector<double> mean_gate_per_channel(const ToyBackbone& model, const Dataset& data);
/// Fraction of values in the open interval (lo, hi).
double fraction_between(const std::vector<double>& values, double lo = 0.1, double hi = 0.9);

// Checkpoint: "CSNCKPT1", 32-byte architecture digest, then per parameter:
// u16 LE name length, UTF-8 name, T4F tensor, partition byte (0 outside, 1 inside).
void save_checkpoint(const std::string& path, ToyBackbone& model);
void write_checkpoint(std::ostream& os, ToyBackbone& model);
/// Loads into a model of matching architecture; on any error the model is
/// left untouched.
void load_checkpoint(const std::string& path, ToyBackbone& model);
void read_checkpoint(std::istream& is, ToyBackbone& model);
/// Reconstructs the architecture from parameter names and shapes; `epsilon`
/// and `gate_mode` must match what the checkpoint was trained with.
ToyBackbone load_checkpoint_model(const std::string& path, double epsilon = kGateEps,
                                  GateMode gate_mode = GateMode::learned);

}  // namespace csnorm

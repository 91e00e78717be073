#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "csnorm/kv_file.hpp"
#include "csnorm/training.hpp"

namespace csnorm {

struct ExperimentConfig {
  std::uint64_t seed = 0;
  /// Independent repetitions; reported numbers are medians over them.
  std::size_t seeds = 3;
  std::size_t image_size = 16;
  std::size_t train_count = 48;
  std::size_t test_count = 16;
  /// Self-reconstruction arms.
  TrainConfig motivation_train;
  /// Generalization and ablation arms.
  TrainConfig train;
  /// Where report_<name>.{csv,manifest} and gates/ go; empty writes nothing.
  std::string out_dir;

  ExperimentConfig();
  KvFile to_kv() const;
};

/// One arm's metric table for one seed.
struct ArmResult {
  std::string arm;
  std::string seed;  // decimal seed, or "median"
  MetricTable table;
};

struct Assertion {
  std::string name;
  double value = 0.0;
  std::string relation;  // ">", ">=", "<"
  double threshold = 0.0;
  bool pass = false;
};

struct ExperimentReport {
  std::string name;
  std::vector<ArmResult> results;
  std::vector<std::pair<std::string, double>> deltas;
  std::vector<Assertion> assertions;
  KvFile info;
  /// Measured but never serialized, so reports stay bit-identical.
  double wall_seconds = 0.0;

  bool passed() const;
  const ArmResult& median(const std::string& arm) const;
  /// CSV `arm,seed,condition,psnr_db,ssim`.
  void write_csv(std::ostream& os) const;
  void write_manifest(std::ostream& os) const;
  /// Writes report_<name>.csv and report_<name>.manifest into `dir`.
  void save(const std::string& dir) const;
};

/// Self-reconstruction with and without a forced-on instance norm.
ExperimentReport exp_motivation(const ExperimentConfig& cfg);
/// Baseline, CSNorm (alternating), CSNorm (mixed) and plain IN trained on
/// domain A, evaluated on original / interp / scale / cross:B.
ExperimentReport exp_generalization(const ExperimentConfig& cfg);
/// {mixed, alternating} x {linear, amplitude} perturbation.
ExperimentReport exp_ablation(const ExperimentConfig& cfg);

/// Names accepted by run_suite: motivation, generalization, ablation, all.
std::vector<ExperimentReport> run_suite(const std::string& suite, const ExperimentConfig& cfg);

/// Min-max stretched single channel of a feature tensor as a 1 x 1 x H x W image.
Tensor4 feature_map_image(const Tensor4& feature, std::size_t n, std::size_t c);

double median(std::vector<double> values);

}  // namespace csnorm

#include "csnorm/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "csnorm/image_io.hpp"
#include "csnorm/metrics.hpp"
#include "csnorm/rng.hpp"

namespace csnorm {

namespace fs = std::filesystem;

ExperimentConfig::ExperimentConfig() {
  motivation_train.epochs = 40;
  motivation_train.steps_per_epoch = 25;
  motivation_train.batch_size = 4;
  motivation_train.optimizer = OptimizerKind::adam;
  motivation_train.lr_out = 3e-3;
  motivation_train.lr_in = 3e-3;

  // The gate step gets a much smaller rate than the backbone: with a larger
  // one the gates settle mid-range instead of near 0 or 1.
  train.epochs = 48;
  train.steps_per_epoch = 25;
  train.batch_size = 4;
  train.optimizer = OptimizerKind::adam;
  train.schedule = LrSchedule::cosine;
  train.lr_out = 5e-3;
  train.lr_in = 1e-4;
  train.ratio = 1.0;
  train.delta = 1e-3;
}

KvFile ExperimentConfig::to_kv() const {
  KvFile kv;
  kv.set("seed", static_cast<unsigned long long>(seed));
  kv.set("seeds", seeds);
  kv.set("image_size", image_size);
  kv.set("train_count", train_count);
  kv.set("test_count", test_count);
  const KvFile m = motivation_train.to_kv();
  for (const auto& [k, v] : m.entries()) {
    if (k != "seed") kv.set("motivation." + k, v);
  }
  const KvFile t = train.to_kv();
  for (const auto& [k, v] : t.entries()) {
    if (k != "seed") kv.set("train." + k, v);
  }
  return kv;
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  return values.size() % 2 == 1 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

bool ExperimentReport::passed() const {
  return std::all_of(assertions.begin(), assertions.end(), [](const Assertion& a) { return a.pass; });
}

const ArmResult& ExperimentReport::median(const std::string& arm) const {
  for (const auto& r : results) {
    if (r.arm == arm && r.seed == "median") return r;
  }
  throw std::out_of_range("no median row for arm '" + arm + "'");
}

void ExperimentReport::write_csv(std::ostream& os) const {
  os << "arm,seed,condition,psnr_db,ssim\n";
  for (const auto& r : results) {
    for (const auto& m : r.table.rows) {
      os << r.arm << ',' << r.seed << ',' << m.condition << ',' << format_double(m.psnr_db) << ','
         << format_double(m.ssim) << '\n';
    }
  }
}

void ExperimentReport::write_manifest(std::ostream& os) const {
  KvFile kv;
  kv.set("name", name);
  for (const auto& [k, v] : info.entries()) kv.set(k, v);
  for (const auto& [k, v] : deltas) kv.set("delta." + k, v);
  for (const auto& a : assertions) {
    kv.set("assert." + a.name, a.pass ? "pass" : "fail");
    kv.set("assert." + a.name + ".value", a.value);
    kv.set("assert." + a.name + ".require", a.relation + " " + format_double(a.threshold));
  }
  kv.set("passed", passed() ? 1 : 0);
  kv.write(os);
}

void ExperimentReport::save(const std::string& dir) const {
  fs::create_directories(dir);
  const auto open = [](const fs::path& p) {
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    if (!os) throw std::ios_base::failure("cannot write " + p.string());
    return os;
  };
  {
    auto os = open(fs::path(dir) / ("report_" + name + ".csv"));
    write_csv(os);
  }
  auto os = open(fs::path(dir) / ("report_" + name + ".manifest"));
  write_manifest(os);
}

Tensor4 feature_map_image(const Tensor4& feature, std::size_t n, std::size_t c) {
  const Shape s = feature.shape();
  if (n >= s.n || c >= s.c) throw std::out_of_range("feature_map_image: index out of range");
  Tensor4 img({1, 1, s.h, s.w});
  const auto plane = feature.plane(n, c);
  const auto [lo, hi] = std::minmax_element(plane.begin(), plane.end());
  const double range = *hi - *lo;
  for (std::size_t i = 0; i < plane.size(); ++i) img[i] = range > 0.0 ? (plane[i] - *lo) / range : 0.0;
  return img;
}

namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t run_seed(const ExperimentConfig& cfg, std::size_t k) { return SplitMix64::mix(cfg.seed, 1000 + k); }

Dataset scenes(const std::string& domain, std::uint64_t seed, std::size_t count, std::size_t size) {
  SceneSpec spec = SceneSpec::domain_preset(domain);
  spec.seed = seed;
  spec.count = count;
  spec.height = size;
  spec.width = size;
  return gen_scene_pairs(spec);
}

Dataset self_reconstruction(Dataset d) {
  for (auto& p : d) p.degraded = p.target;
  return d;
}

void check_config(const ExperimentConfig& cfg) {
  if (cfg.seeds == 0) throw std::invalid_argument("experiments need at least one seed");
  if (cfg.train_count == 0 || cfg.test_count == 0) throw std::invalid_argument("experiment datasets must be non-empty");
  cfg.motivation_train.validate();
  cfg.train.validate();
}

Assertion check(std::string name, double value, std::string relation, double threshold) {
  bool pass = false;
  if (relation == ">") pass = value > threshold;
  else if (relation == ">=") pass = value >= threshold;
  else if (relation == "<") pass = value < threshold;
  else throw std::logic_error("unknown relation " + relation);
  return {std::move(name), value, std::move(relation), threshold, pass};
}

// Row-wise medians of one arm's per-seed tables.
ArmResult median_of(const std::vector<ArmResult>& results, const std::string& arm) {
  std::vector<const MetricTable*> tables;
  for (const auto& r : results) {
    if (r.arm == arm) tables.push_back(&r.table);
  }
  ArmResult out{arm, "median", {}};
  if (tables.empty()) return out;
  for (std::size_t i = 0; i < tables.front()->rows.size(); ++i) {
    std::vector<double> p, s;
    for (const auto* t : tables) {
      p.push_back(t->rows.at(i).psnr_db);
      s.push_back(t->rows.at(i).ssim);
    }
    out.table.rows.push_back({tables.front()->rows[i].condition, median(p), median(s)});
  }
  return out;
}

void add_medians(ExperimentReport& r, const std::vector<std::string>& arms) {
  std::vector<ArmResult> medians;
  for (const auto& a : arms) medians.push_back(median_of(r.results, a));
  for (auto& m : medians) r.results.push_back(std::move(m));
}

double psnr_clamped(const Tensor4& pred, std::size_t n, const Tensor4& target) {
  Tensor4 p = pred.instance(n);
  for (double& v : p.data()) v = std::clamp(v, 0.0, 1.0);
  return psnr(p, target);
}

std::vector<double> per_image_psnr(const ToyBackbone& model, const Dataset& data) {
  std::vector<Tensor4> inputs;
  for (const auto& p : data) inputs.push_back(p.degraded);
  const Tensor4 pred = model.predict(stack(inputs));
  std::vector<double> out;
  for (std::size_t i = 0; i < data.size(); ++i) out.push_back(psnr_clamped(pred, i, data[i].target));
  return out;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(v.size());
}

void finish(ExperimentReport& r, const ExperimentConfig& cfg, Clock::time_point start) {
  const KvFile kv = cfg.to_kv();
  for (const auto& [k, v] : kv.entries()) r.info.set("config." + k, v);
  r.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  if (!cfg.out_dir.empty()) r.save(cfg.out_dir);
}

std::string seed_text(std::uint64_t s) { return std::to_string(s); }

ToyBackbone make_model(bool with_csnorm, GateMode mode, double epsilon, std::uint64_t seed) {
  BackboneConfig bc;
  bc.with_csnorm = with_csnorm;
  bc.gate_mode = mode;
  bc.epsilon = epsilon;
  return ToyBackbone(bc, seed);
}

// Feature maps of the selected channels for the first test image.
void dump_gates(const std::string& out_dir, const std::string& stem, const ToyBackbone& model, const Dataset& test) {
  if (out_dir.empty() || test.empty()) return;
  const fs::path dir = fs::path(out_dir) / "gates";
  fs::create_directories(dir);
  ForwardTrace trace;
  model.predict(test.front().degraded, &trace);
  std::vector<GateReportRow> rows;
  for (std::size_t c = 0; c < trace.gate.shape().c; ++c) {
    const double g = trace.gate.at(0, c, 0, 0);
    const double alpha = trace.alpha.size() > 0 ? trace.alpha.at(0, c, 0, 0) : std::numeric_limits<double>::quiet_NaN();
    rows.push_back({0, c, alpha, g, g > kSelectThreshold});
    if (g > kSelectThreshold) {
      char name[64];
      std::snprintf(name, sizeof name, "%s_c%02zu.pgm", stem.c_str(), c);
      save_ppm((dir / name).string(), feature_map_image(trace.feature, 0, c));
    }
  }
  std::ofstream os(dir / (stem + ".csv"), std::ios::trunc);
  if (!os) throw std::ios_base::failure("cannot write gate report in " + dir.string());
  write_gate_csv(os, rows);
}

}  // namespace

ExperimentReport exp_motivation(const ExperimentConfig& cfg) {
  check_config(cfg);
  const auto start = Clock::now();
  ExperimentReport r;
  r.name = "motivation";
  std::vector<double> plain_train, fraction_lower, gap;
  for (std::size_t k = 0; k < cfg.seeds; ++k) {
    const std::uint64_t s = run_seed(cfg, k);
    const Dataset train = self_reconstruction(scenes("A", SplitMix64::mix(s, 1), cfg.train_count, cfg.image_size));
    const Dataset test = self_reconstruction(scenes("A", SplitMix64::mix(s, 2), cfg.test_count, cfg.image_size));
    r.info.set("seed." + std::to_string(k) + ".data_digest", to_hex(dataset_digest(train)));
    TrainConfig tc = cfg.motivation_train;
    tc.seed = s;

    std::vector<double> test_psnr[2];
    const char* arms[2] = {"plain", "in"};
    for (int a = 0; a < 2; ++a) {
      ToyBackbone model = make_model(a == 1, GateMode::forced_on, tc.epsilon, SplitMix64::mix(s, 4));
      const TrainLog log = train_baseline(model, train, {}, tc);
      r.info.set("seed." + std::to_string(k) + "." + arms[a] + ".epochs", log.rows.size());
      const std::vector<double> on_train = per_image_psnr(model, train);
      test_psnr[a] = per_image_psnr(model, test);
      ArmResult res{arms[a], seed_text(s), {}};
      for (std::size_t i = 0; i < test.size(); ++i) {
        char cond[32];
        std::snprintf(cond, sizeof cond, "test_%03zu", i);
        res.table.rows.push_back({cond, test_psnr[a][i], std::numeric_limits<double>::quiet_NaN()});
      }
      res.table.rows.push_back({"train_mean", mean_of(on_train), std::numeric_limits<double>::quiet_NaN()});
      res.table.rows.push_back({"test_mean", mean_of(test_psnr[a]), std::numeric_limits<double>::quiet_NaN()});
      if (a == 0) plain_train.push_back(mean_of(on_train));
      r.results.push_back(std::move(res));
    }
    std::size_t lower = 0;
    for (std::size_t i = 0; i < test.size(); ++i) lower += test_psnr[1][i] < test_psnr[0][i] ? 1 : 0;
    fraction_lower.push_back(static_cast<double>(lower) / static_cast<double>(test.size()));
    gap.push_back(mean_of(test_psnr[1]) - mean_of(test_psnr[0]));
  }
  add_medians(r, {"plain", "in"});
  r.deltas.emplace_back("in_minus_plain_test_mean", median(gap));
  r.deltas.emplace_back("fraction_in_lower", median(fraction_lower));
  r.assertions.push_back(check("plain_train_psnr", median(plain_train), ">", 30.0));
  r.assertions.push_back(check("in_lower_fraction", median(fraction_lower), ">=", 0.8));
  r.assertions.push_back(check("in_minus_plain_mean", median(gap), "<", 0.0));
  finish(r, cfg, start);
  return r;
}

namespace {

const std::vector<std::string> kConditions = {"original", "interp", "scale", "cross:B"};

struct SeedData {
  std::uint64_t seed;
  Dataset train, test, cross;
};

SeedData seed_data(const ExperimentConfig& cfg, std::size_t k) {
  const std::uint64_t s = run_seed(cfg, k);
  return {s, scenes("A", SplitMix64::mix(s, 1), cfg.train_count, cfg.image_size),
          scenes("A", SplitMix64::mix(s, 2), cfg.test_count, cfg.image_size),
          scenes("B", SplitMix64::mix(s, 3), cfg.test_count, cfg.image_size)};
}

enum class Strategy { baseline, alternating, mixed };

ToyBackbone train_arm(const SeedData& d, bool with_csnorm, GateMode mode, Strategy strategy, const TrainConfig& base,
                      PerturbationKind perturbation) {
  TrainConfig tc = base;
  tc.seed = d.seed;
  tc.perturbation = perturbation;
  ToyBackbone model = make_model(with_csnorm, mode, tc.epsilon, SplitMix64::mix(d.seed, 4));
  switch (strategy) {
    case Strategy::baseline: train_baseline(model, d.train, {}, tc); break;
    case Strategy::alternating: train_alternating(model, d.train, {}, tc); break;
    case Strategy::mixed: train_mixed(model, d.train, {}, tc); break;
  }
  return model;
}

}  // namespace

ExperimentReport exp_generalization(const ExperimentConfig& cfg) {
  check_config(cfg);
  const auto start = Clock::now();
  ExperimentReport r;
  r.name = "generalization";
  const std::vector<std::string> arms = {"baseline", "csnorm-alt", "csnorm-mixed", "plain-in"};
  std::map<std::string, std::vector<double>> delta;
  std::vector<double> polarization;
  for (std::size_t k = 0; k < cfg.seeds; ++k) {
    const SeedData d = seed_data(cfg, k);
    r.info.set("seed." + std::to_string(k) + ".data_digest", to_hex(dataset_digest(d.train)));
    const std::map<std::string, Dataset> cross = {{"B", d.cross}};
    std::map<std::string, MetricTable> tables;
    for (const auto& arm : arms) {
      const PerturbationKind amp = PerturbationKind::amplitude;
      ToyBackbone model =
          arm == "baseline"       ? train_arm(d, false, GateMode::learned, Strategy::baseline, cfg.train, amp)
          : arm == "csnorm-alt"   ? train_arm(d, true, GateMode::learned, Strategy::alternating, cfg.train, amp)
          : arm == "csnorm-mixed" ? train_arm(d, true, GateMode::learned, Strategy::mixed, cfg.train, amp)
                                  : train_arm(d, true, GateMode::forced_on, Strategy::baseline, cfg.train, amp);
      tables[arm] = evaluate(model, d.test, kConditions, cross);
      if (arm == "csnorm-alt") {
        polarization.push_back(fraction_between(mean_gate_per_channel(model, d.test)));
        if (k == 0) dump_gates(cfg.out_dir, "generalization_csnorm-alt", model, d.test);
      }
      r.results.push_back({arm, seed_text(d.seed), tables[arm]});
    }
    for (const auto& c : kConditions) {
      delta[c].push_back(tables["csnorm-alt"].at(c).psnr_db - tables["baseline"].at(c).psnr_db);
    }
  }
  add_medians(r, arms);
  for (const auto& c : kConditions) r.deltas.emplace_back(c, median(delta[c]));
  r.deltas.emplace_back("gate_fraction_between", median(polarization));
  r.assertions.push_back(check("delta_interp", median(delta["interp"]), ">", 0.0));
  r.assertions.push_back(check("delta_scale", median(delta["scale"]), ">", 0.0));
  r.assertions.push_back(check("delta_cross_B", median(delta["cross:B"]), ">", 0.0));
  r.assertions.push_back(check("delta_original", median(delta["original"]), ">=", -0.5));
  r.assertions.push_back(check("gate_polarization", median(polarization), "<", 0.2));
  finish(r, cfg, start);
  return r;
}

ExperimentReport exp_ablation(const ExperimentConfig& cfg) {
  check_config(cfg);
  const auto start = Clock::now();
  ExperimentReport r;
  r.name = "ablation";
  struct Arm {
    std::string name;
    Strategy strategy;
    PerturbationKind perturbation;
  };
  const std::vector<Arm> arms = {
      {"alternating-amplitude", Strategy::alternating, PerturbationKind::amplitude},
      {"alternating-linear", Strategy::alternating, PerturbationKind::linear},
      {"mixed-amplitude", Strategy::mixed, PerturbationKind::amplitude},
      {"mixed-linear", Strategy::mixed, PerturbationKind::linear},
  };
  const std::vector<std::string> conditions = {"original", "cross:B"};
  for (std::size_t k = 0; k < cfg.seeds; ++k) {
    const SeedData d = seed_data(cfg, k);
    r.info.set("seed." + std::to_string(k) + ".data_digest", to_hex(dataset_digest(d.train)));
    const std::map<std::string, Dataset> cross = {{"B", d.cross}};
    for (const auto& arm : arms) {
      const ToyBackbone model = train_arm(d, true, GateMode::learned, arm.strategy, cfg.train, arm.perturbation);
      r.results.push_back({arm.name, seed_text(d.seed), evaluate(model, d.test, conditions, cross)});
    }
  }
  std::vector<std::string> names;
  for (const auto& a : arms) names.push_back(a.name);
  add_medians(r, names);
  const double best = r.median("alternating-amplitude").table.at("cross:B").psnr_db;
  for (std::size_t i = 1; i < arms.size(); ++i) {
    const double other = r.median(arms[i].name).table.at("cross:B").psnr_db;
    r.deltas.emplace_back("cross_B_vs_" + arms[i].name, best - other);
    r.assertions.push_back(check("cross_B_over_" + arms[i].name, best - other, ">=", 0.0));
  }
  finish(r, cfg, start);
  return r;
}

std::vector<ExperimentReport> run_suite(const std::string& suite, const ExperimentConfig& cfg) {
  if (suite == "motivation") return {exp_motivation(cfg)};
  if (suite == "generalization") return {exp_generalization(cfg)};
  if (suite == "ablation") return {exp_ablation(cfg)};
  if (suite == "all") return {exp_motivation(cfg), exp_generalization(cfg), exp_ablation(cfg)};
  throw std::invalid_argument("unknown suite '" + suite + "' (expected motivation, generalization, ablation or all)");
}

}  // namespace csnorm

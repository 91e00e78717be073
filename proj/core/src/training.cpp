#include "csnorm/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "csnorm/metrics.hpp"
#include "csnorm/spectral.hpp"

namespace csnorm {

PerturbationKind parse_perturbation(const std::string& name) {
  if (name == "amplitude") return PerturbationKind::amplitude;
  if (name == "linear") return PerturbationKind::linear;
  throw std::invalid_argument("unknown perturbation '" + name + "' (expected amplitude or linear)");
}

const char* to_string(PerturbationKind k) {
  return k == PerturbationKind::amplitude ? "amplitude" : "linear";
}

LrSchedule parse_schedule(const std::string& name) {
  if (name == "constant") return LrSchedule::constant;
  if (name == "cosine") return LrSchedule::cosine;
  throw std::invalid_argument("unknown schedule '" + name + "' (expected constant or cosine)");
}

const char* to_string(LrSchedule s) { return s == LrSchedule::constant ? "constant" : "cosine"; }

double TrainConfig::lr_factor(std::size_t step) const {
  const std::size_t total = epochs * steps_per_epoch;
  if (schedule == LrSchedule::constant || total == 0) return 1.0;
  return 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total)));
}

void TrainConfig::validate() const {
  if (!(lr_out > 0.0) || !(lr_in > 0.0)) throw std::invalid_argument("learning rates must be > 0");
  if (!(ratio >= 0.0)) throw std::invalid_argument("alternation ratio must be >= 0");
  if (!(delta >= 0.0)) throw std::invalid_argument("delta must be >= 0");
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
  if (!(lambda_min >= 0.0 && lambda_max <= 1.0 && lambda_min <= lambda_max)) {
    throw std::invalid_argument("lambda range must satisfy 0 <= min <= max <= 1");
  }
  if (!(mix_probability >= 0.0 && mix_probability <= 1.0)) {
    throw std::invalid_argument("mix probability must be in [0,1]");
  }
  if (!(linear_weight >= 0.0 && linear_weight <= 1.0)) {
    throw std::invalid_argument("linear weight must be in [0,1]");
  }
  if (batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
}

KvFile TrainConfig::to_kv() const {
  KvFile kv;
  kv.set("epochs", epochs);
  kv.set("steps_per_epoch", steps_per_epoch);
  kv.set("batch_size", batch_size);
  kv.set("ratio", ratio);
  kv.set("lr_out", lr_out);
  kv.set("lr_in", lr_in);
  kv.set("delta", delta);
  kv.set("epsilon", epsilon);
  kv.set("lambda_min", lambda_min);
  kv.set("lambda_max", lambda_max);
  kv.set("optimizer", to_string(optimizer));
  kv.set("schedule", to_string(schedule));
  kv.set("perturbation", to_string(perturbation));
  kv.set("linear_weight", linear_weight);
  kv.set("mix_probability", mix_probability);
  kv.set("seed", static_cast<unsigned long long>(seed));
  return kv;
}

namespace {

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  T v{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw std::invalid_argument("invalid value for " + key + ": '" + text + "'");
  }
  return v;
}

}  // namespace

void TrainConfig::apply(const KvFile& kv) {
  for (const auto& [k, v] : kv.entries()) {
    if (k == "epochs") epochs = parse_value<std::size_t>(k, v);
    else if (k == "steps_per_epoch") steps_per_epoch = parse_value<std::size_t>(k, v);
    else if (k == "batch_size") batch_size = parse_value<std::size_t>(k, v);
    else if (k == "ratio") ratio = parse_value<double>(k, v);
    else if (k == "lr_out") lr_out = parse_value<double>(k, v);
    else if (k == "lr_in") lr_in = parse_value<double>(k, v);
    else if (k == "delta") delta = parse_value<double>(k, v);
    else if (k == "epsilon") epsilon = parse_value<double>(k, v);
    else if (k == "lambda_min") lambda_min = parse_value<double>(k, v);
    else if (k == "lambda_max") lambda_max = parse_value<double>(k, v);
    else if (k == "optimizer") optimizer = parse_optimizer(v);
    else if (k == "schedule") schedule = parse_schedule(v);
    else if (k == "perturbation") perturbation = parse_perturbation(v);
    else if (k == "linear_weight") linear_weight = parse_value<double>(k, v);
    else if (k == "mix_probability") mix_probability = parse_value<double>(k, v);
    else if (k == "seed") seed = parse_value<std::uint64_t>(k, v);
    else if (k == "checkpoint") checkpoint_path = v;
    else throw std::invalid_argument("unknown training key '" + k + "'");
  }
}

Sha256 TrainConfig::digest() const { return sha256(to_kv().str()); }

void TrainLog::write_csv(std::ostream& os) const {
  os << "epoch,step_kind,loss_pixel,loss_amp,holdout_psnr\n";
  for (const auto& r : rows) {
    os << r.epoch << ',' << static_cast<int>(r.step_kind) << ',' << format_double(r.loss_pixel) << ','
       << format_double(r.loss_amp) << ',' << format_double(r.holdout_psnr) << '\n';
  }
}

namespace {

// Stream ids for the independent random sequences of one training run.
constexpr std::uint64_t kBatchStream = 101;
constexpr std::uint64_t kLambdaStream = 102;
constexpr std::uint64_t kCoinStream = 103;

/// Walks reshuffled permutations of the training set.
class BatchSampler {
 public:
  BatchSampler(std::size_t count, std::uint64_t seed) : rng_(seed, kBatchStream), order_(count) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    pos_ = order_.size();
  }

  std::vector<std::size_t> next(std::size_t batch) {
    std::vector<std::size_t> out;
    out.reserve(batch);
    while (out.size() < batch) {
      if (pos_ == order_.size()) {
        std::shuffle(order_.begin(), order_.end(), rng_.engine());
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

void require_data(const Dataset& train) {
  if (train.empty()) throw std::invalid_argument("training data is empty");
}

void zero_grads(ToyBackbone& model) {
  for (auto& p : model.parameters()) p.tensor->zero_grad();
}

std::string where(std::size_t epoch, std::size_t step, StepKind kind) {
  return "epoch " + std::to_string(epoch) + " step " + std::to_string(step) + " (step_kind " +
         std::to_string(static_cast<int>(kind)) + ")";
}

void check_finite(const LossBreakdown& l, std::size_t epoch, std::size_t step, StepKind kind) {
  if (!std::isfinite(l.total)) {
    throw NumericError("non-finite loss at " + where(epoch, step, kind) + ": pixel=" + format_double(l.pixel) +
                       " amp=" + format_double(l.amplitude));
  }
}

// Numeric failures deep in the graph (rsqrt of a NaN variance, say) get the
// training position attached.
template <class F>
auto located(std::size_t epoch, std::size_t step, StepKind kind, F&& f) {
  try {
    return f();
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    if (msg.rfind("non-finite loss at", 0) == 0) throw;
    throw NumericError(msg + " at " + where(epoch, step, kind));
  }
}

Tensor4 perturb_batch(const Tensor4& degraded, const Tensor4& target, const TrainConfig& cfg, double lambda) {
  if (cfg.perturbation == PerturbationKind::amplitude) return perturb_lightness(degraded, target, lambda);
  return condition_interp(degraded, target, cfg.linear_weight);
}

double holdout_score(const ToyBackbone& model, const Dataset& holdout) {
  return holdout.empty() ? std::numeric_limits<double>::quiet_NaN() : mean_psnr(model, holdout);
}

struct Accum {
  double pixel = 0.0, amp = 0.0;
  std::size_t n = 0;
  void add(const LossBreakdown& l) {
    pixel += l.pixel;
    amp += l.amplitude;
    ++n;
  }
  LogRow row(std::size_t epoch, StepKind kind, double psnr) const {
    return {epoch, kind, n ? pixel / n : 0.0, n ? amp / n : 0.0, psnr};
  }
};

void emit(TrainLog& log, const LogRow& row, const TrainConfig& cfg) {
  log.rows.push_back(row);
  if (cfg.on_row) cfg.on_row(row);
}

// Shared by train_baseline and train_mixed: every parameter, pixel MSE.
TrainLog train_joint(ToyBackbone& model, const Dataset& train, const Dataset& holdout, const TrainConfig& cfg,
                     double perturb_probability) {
  cfg.validate();
  require_data(train);
  Optimizer opt(cfg.optimizer);
  BatchSampler sampler(train.size(), cfg.seed);
  Rng lambda_rng(cfg.seed, kLambdaStream);
  Rng coin_rng(cfg.seed, kCoinStream);
  TrainLog log;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Accum acc;
    for (std::size_t step = 0; step < cfg.steps_per_epoch; ++step) {
      Tensor4 degraded, target;
      make_batch(train, sampler.next(cfg.batch_size), degraded, target);
      if (perturb_probability > 0.0) {
        const double lambda = lambda_rng.uniform(cfg.lambda_min, cfg.lambda_max);
        const Tensor4 perturbed = perturb_batch(degraded, target, cfg, lambda);
        const std::size_t per = degraded.size() / degraded.shape().n;
        for (std::size_t n = 0; n < degraded.shape().n; ++n) {
          if (coin_rng.uniform() < perturb_probability) {
            std::copy_n(perturbed.storage().begin() + static_cast<std::ptrdiff_t>(n * per), per,
                        degraded.storage().begin() + static_cast<std::ptrdiff_t>(n * per));
          }
        }
      }
      const LossBreakdown l = located(epoch, step, StepKind::joint, [&] {
        zero_grads(model);
        Tape t;
        const Value pred = model.forward(t, t.constant(degraded), Trainable::all);
        const LossNode loss = loss_step1(t, pred, t.constant(target));
        check_finite(loss.values, epoch, step, StepKind::joint);
        t.backward(loss.total);
        const double f = cfg.lr_factor((epoch - 1) * cfg.steps_per_epoch + step);
        opt.step(model.outside_parameters(), cfg.lr_out * f);
        opt.step(model.inside_parameters(), cfg.lr_in * f);
        return loss.values;
      });
      acc.add(l);
    }
    emit(log, acc.row(epoch, StepKind::joint, holdout_score(model, holdout)), cfg);
  }
  return log;
}

}  // namespace

LossBreakdown alternating_update(ToyBackbone& model, Optimizer& opt, const Tensor4& input, const Tensor4& target,
                                 StepKind kind, const TrainConfig& cfg, double lr_scale) {
  if (!model.has_csnorm()) throw std::invalid_argument("alternating update needs a CSNorm slot");
  if (kind == StepKind::joint) throw std::invalid_argument("alternating update needs step kind 1 or 2");
  zero_grads(model);
  Tape t;
  const bool outside = kind == StepKind::outside;
  const Value pred = model.forward(t, t.constant(input), outside ? Trainable::outside : Trainable::inside);
  const Value gt = t.constant(target);
  const LossNode loss = outside ? loss_step1(t, pred, gt) : loss_step2(t, pred, gt, cfg.delta);
  if (!std::isfinite(loss.values.total)) return loss.values;
  t.backward(loss.total);
  if (outside) {
    opt.step(model.outside_parameters(), cfg.lr_out * lr_scale);
  } else {
    opt.step(model.inside_parameters(), cfg.lr_in * lr_scale);
  }
  return loss.values;
}

TrainLog train_alternating(ToyBackbone& model, const Dataset& train, const Dataset& holdout,
                           const TrainConfig& cfg) {
  cfg.validate();
  if (!model.has_csnorm()) throw std::invalid_argument("alternating training requires a CSNorm slot");
  require_data(train);
  Optimizer opt(cfg.optimizer);
  BatchSampler sampler(train.size(), cfg.seed);
  Rng lambda_rng(cfg.seed, kLambdaStream);
  TrainLog log;
  double credit = 0.0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Accum acc1, acc2;
    for (std::size_t step = 0; step < cfg.steps_per_epoch; ++step) {
      Tensor4 degraded, target;
      make_batch(train, sampler.next(cfg.batch_size), degraded, target);
      const double f = cfg.lr_factor((epoch - 1) * cfg.steps_per_epoch + step);
      const LossBreakdown l1 = located(epoch, step, StepKind::outside, [&] {
        return alternating_update(model, opt, degraded, target, StepKind::outside, cfg, f);
      });
      check_finite(l1, epoch, step, StepKind::outside);
      acc1.add(l1);

      credit += cfg.ratio;
      while (credit >= 1.0) {
        credit -= 1.0;
        make_batch(train, sampler.next(cfg.batch_size), degraded, target);
        const double lambda = lambda_rng.uniform(cfg.lambda_min, cfg.lambda_max);
        const Tensor4 perturbed = perturb_batch(degraded, target, cfg, lambda);
        const LossBreakdown l2 = located(epoch, step, StepKind::inside, [&] {
          return alternating_update(model, opt, perturbed, target, StepKind::inside, cfg, f);
        });
        check_finite(l2, epoch, step, StepKind::inside);
        acc2.add(l2);
      }
    }
    const double score = holdout_score(model, holdout);
    emit(log, acc1.row(epoch, StepKind::outside, score), cfg);
    if (acc2.n > 0) emit(log, acc2.row(epoch, StepKind::inside, score), cfg);
  }
  return log;
}

TrainLog train_baseline(ToyBackbone& model, const Dataset& train, const Dataset& holdout, const TrainConfig& cfg) {
  return train_joint(model, train, holdout, cfg, 0.0);
}

TrainLog train_mixed(ToyBackbone& model, const Dataset& train, const Dataset& holdout, const TrainConfig& cfg) {
  return train_joint(model, train, holdout, cfg, cfg.mix_probability);
}

namespace {

struct PairScores {
  std::vector<double> psnr, ssim;
};

PairScores score_pairs(const ToyBackbone& model, const Dataset& data) {
  PairScores out;
  if (data.empty()) return out;
  std::vector<Tensor4> inputs;
  inputs.reserve(data.size());
  for (const auto& p : data) inputs.push_back(p.degraded);
  Tensor4 pred = model.predict(stack(inputs));
  for (double& v : pred.data()) v = std::clamp(v, 0.0, 1.0);
  const bool ssim_ok = data.front().target.shape().h >= 11 && data.front().target.shape().w >= 11;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Tensor4 p = pred.instance(i);
    out.psnr.push_back(psnr(p, data[i].target));
    out.ssim.push_back(ssim_ok ? ssim(p, data[i].target) : std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

double average(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

double mean_psnr(const ToyBackbone& model, const Dataset& data) {
  std::vector<Tensor4> inputs;
  for (const auto& p : data) inputs.push_back(p.degraded);
  if (inputs.empty()) return std::numeric_limits<double>::quiet_NaN();
  Tensor4 pred = model.predict(stack(inputs));
  for (double& v : pred.data()) v = std::clamp(v, 0.0, 1.0);
  double acc = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) acc += psnr(pred.instance(i), data[i].target);
  return acc / static_cast<double>(data.size());
}

void MetricTable::write_csv(std::ostream& os) const {
  os << "condition,psnr_db,ssim\n";
  for (const auto& r : rows) os << r.condition << ',' << format_double(r.psnr_db) << ',' << format_double(r.ssim) << '\n';
}

const MetricRow& MetricTable::at(const std::string& condition) const {
  for (const auto& r : rows) {
    if (r.condition == condition) return r;
  }
  throw std::out_of_range("no metric row for condition '" + condition + "'");
}

MetricTable evaluate(const ToyBackbone& model, const Dataset& data, const std::vector<std::string>& conditions,
                     const std::map<std::string, Dataset>& cross) {
  MetricTable table;
  for (const auto& tag : conditions) {
    Dataset transformed;
    if (tag == "original") {
      transformed = apply_condition(data, {ConditionKind::original});
    } else if (tag == "interp") {
      transformed = apply_condition(data, {ConditionKind::interp});
    } else if (tag == "scale") {
      transformed = apply_condition(data, {ConditionKind::scale});
    } else if (tag.rfind("cross:", 0) == 0) {
      const auto it = cross.find(tag.substr(6));
      if (it == cross.end()) throw std::invalid_argument("no cross-domain dataset for condition '" + tag + "'");
      transformed = it->second;
    } else {
      throw std::invalid_argument("unknown condition '" + tag + "'");
    }
    const PairScores s = score_pairs(model, transformed);
    table.rows.push_back({tag, average(s.psnr), average(s.ssim)});
  }
  if (!table.rows.empty()) {
    MetricRow avg{"average", 0.0, 0.0};
    for (const auto& r : table.rows) {
      avg.psnr_db += r.psnr_db;
      avg.ssim += r.ssim;
    }
    avg.psnr_db /= static_cast<double>(table.rows.size());
    avg.ssim /= static_cast<double>(table.rows.size());
    table.rows.push_back(avg);
  }
  return table;
}

std::vector<double> mean_gate_per_channel(const ToyBackbone& model, const Dataset& data) {
  if (!model.has_csnorm()) throw std::invalid_argument("model has no CSNorm slot");
  if (data.empty()) return {};
  std::vector<Tensor4> inputs;
  for (const auto& p : data) inputs.push_back(p.degraded);
  ForwardTrace trace;
  model.predict(stack(inputs), &trace);
  const Shape s = trace.gate.shape();
  std::vector<double> out(s.c, 0.0);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) out[c] += trace.gate.at(n, c, 0, 0);
  for (double& v : out) v /= static_cast<double>(s.n);
  return out;
}

double fraction_between(const std::vector<double>& values, double lo, double hi) {
  if (values.empty()) return 0.0;
  const auto k = std::count_if(values.begin(), values.end(), [&](double v) { return v > lo && v < hi; });
  return static_cast<double>(k) / static_cast<double>(values.size());
}

}  // namespace csnorm

#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "csnorm/experiments.hpp"
#include "csnorm/gradcheck_suites.hpp"
#include "csnorm/image_io.hpp"
#include "csnorm/spectral.hpp"
#include "csnorm/training.hpp"

namespace csnorm::cli {

namespace fs = std::filesystem;

namespace {

/// Usage problems detected after parsing (bad values, unknown tokens).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// `--config FILE` is expanded into `--key=value` tokens placed right after the
// subcommand, so anything given on the command line wins (last value taken).
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> rest;
  std::vector<std::string> from_file;
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string path;
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config needs a file argument");
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
      continue;
    }
    const KvFile kv = KvFile::load(path);
    for (const auto& [k, v] : kv.entries()) {
      std::string key = k;
      std::replace(key.begin(), key.end(), '_', '-');
      from_file.push_back("--" + key + "=" + v);
    }
  }
  if (from_file.empty()) return rest;
  std::vector<std::string> out;
  if (!rest.empty()) out.push_back(rest.front());
  out.insert(out.end(), from_file.begin(), from_file.end());
  if (rest.size() > 1) out.insert(out.end(), rest.begin() + 1, rest.end());
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

GateMode parse_gate_mode(const std::string& s) {
  if (s == "learned") return GateMode::learned;
  if (s == "forced_off" || s == "off") return GateMode::forced_off;
  if (s == "forced_on" || s == "on") return GateMode::forced_on;
  throw UsageError("unknown gate mode '" + s + "' (expected learned, off or on)");
}

struct GenOptions {
  std::uint64_t seed = 0;
  std::size_t count = 16;
  std::size_t size = 32;
  std::string domain = "A";
  std::string out;
  std::size_t rectangles = 3, gradients = 1, sinusoids = 2;
  double noise = 0.01;
};

int cmd_gen(const GenOptions& o, std::ostream&, std::ostream& err) {
  SceneSpec spec = SceneSpec::domain_preset(o.domain);
  spec.seed = o.seed;
  spec.count = o.count;
  spec.height = spec.width = o.size;
  spec.rectangles = o.rectangles;
  spec.gradients = o.gradients;
  spec.sinusoids = o.sinusoids;
  spec.noise_sigma = o.noise;
  spec.validate();
  const Dataset data = gen_scene_pairs(spec);
  save_dataset(o.out, data, spec);
  err << "wrote " << data.size() << " pairs to " << o.out << " (digest " << to_hex(dataset_digest(data)) << ")\n";
  return kOk;
}

struct TrainOptions {
  std::string data;
  std::string holdout;
  std::string mode = "csnorm-alt";
  std::string ckpt;
  std::string optimizer = "sgd";
  std::string perturbation = "amplitude";
  std::string schedule = "constant";
  TrainConfig cfg;
};

int cmd_train(TrainOptions& o, std::ostream& out, std::ostream& err) {
  if (o.mode != "baseline" && o.mode != "csnorm-alt" && o.mode != "csnorm-mixed") {
    throw UsageError("unknown mode '" + o.mode + "' (expected baseline, csnorm-alt or csnorm-mixed)");
  }
  o.cfg.optimizer = parse_optimizer(o.optimizer);
  o.cfg.perturbation = parse_perturbation(o.perturbation);
  o.cfg.schedule = parse_schedule(o.schedule);
  o.cfg.checkpoint_path = o.ckpt;
  o.cfg.validate();
  const Dataset train = load_dataset(o.data);
  const Dataset holdout = o.holdout.empty() ? Dataset{} : load_dataset(o.holdout);
  if (train.empty()) throw UsageError("training dataset " + o.data + " is empty");

  BackboneConfig bc;
  bc.with_csnorm = o.mode != "baseline";
  bc.epsilon = o.cfg.epsilon;
  ToyBackbone model(bc, o.cfg.seed);

  out << "epoch,step_kind,loss_pixel,loss_amp,holdout_psnr\n";
  o.cfg.on_row = [&out](const LogRow& r) {
    out << r.epoch << ',' << static_cast<int>(r.step_kind) << ',' << format_double(r.loss_pixel) << ','
        << format_double(r.loss_amp) << ',' << format_double(r.holdout_psnr) << '\n'
        << std::flush;
  };
  const auto start = std::chrono::steady_clock::now();
  if (o.mode == "baseline") train_baseline(model, train, holdout, o.cfg);
  else if (o.mode == "csnorm-alt") train_alternating(model, train, holdout, o.cfg);
  else train_mixed(model, train, holdout, o.cfg);
  save_checkpoint(o.ckpt, model);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  err << "trained " << o.mode << " for " << o.cfg.epochs << " epochs in " << secs << " s; checkpoint " << o.ckpt
      << " (sha256 " << to_hex(sha256_file(o.ckpt)) << ")\n";
  return kOk;
}

struct EvalOptions {
  std::string ckpt, data;
  std::string conditions = "original,interp,scale";
  double epsilon = kGateEps;
  std::string gate_mode = "learned";
};

int cmd_eval(const EvalOptions& o, std::ostream& out, std::ostream&) {
  std::vector<std::string> tags;
  std::map<std::string, Dataset> cross;
  for (const auto& tag : split(o.conditions, ',')) {
    if (tag == "original" || tag == "interp" || tag == "scale") {
      tags.push_back(tag);
    } else if (tag.rfind("cross:", 0) == 0 && tag.size() > 6) {
      tags.push_back(tag);
    } else {
      throw UsageError("unknown condition '" + tag + "' (expected original, interp, scale or cross:DIR)");
    }
  }
  const GateMode mode = parse_gate_mode(o.gate_mode);
  const ToyBackbone model = load_checkpoint_model(o.ckpt, o.epsilon, mode);
  const Dataset data = load_dataset(o.data);
  for (const auto& tag : tags) {
    if (tag.rfind("cross:", 0) == 0) cross.emplace(tag.substr(6), load_dataset(tag.substr(6)));
  }
  evaluate(model, data, tags, cross).write_csv(out);
  return kOk;
}

struct PerturbOptions {
  std::string low, norm, out;
  double lambda = 0.5;
  bool verify = false;
};

int cmd_perturb(const PerturbOptions& o, std::ostream& out, std::ostream& err) {
  if (!(o.lambda >= 0.0 && o.lambda <= 1.0)) throw UsageError("--lambda must be within [0, 1]");
  const Tensor4 low = load_ppm(o.low);
  const Tensor4 norm = load_ppm(o.norm);
  if (low.shape() != norm.shape()) throw UsageError("--low and --norm images differ in shape");
  const Tensor4 result = perturb_lightness(low, norm, o.lambda);
  save_ppm(o.out, result);
  err << "wrote " << o.out << '\n';
  if (o.verify) {
    // Phase of the unclamped reconstruction against the low image, on bins
    // whose amplitude is large enough for a phase to be defined.
    const Spectrum s_low = dft2d(low);
    const Spectrum s_out = dft2d(perturb_lightness(low, norm, o.lambda, false));
    const std::vector<double> a_low = s_low.amplitudes();
    const std::vector<double> a_out = s_out.amplitudes();
    const double floor = 1e-9 * std::max(1.0, *std::max_element(a_low.begin(), a_low.end()));
    double dev = 0.0;
    for (std::size_t i = 0; i < s_low.size(); ++i) {
      if (a_low[i] <= floor || a_out[i] <= floor) continue;
      dev = std::max(dev, std::abs(std::remainder(s_out.phase(i) - s_low.phase(i), 2.0 * M_PI)));
    }
    out << "metric,value\n";
    out << "max_phase_deviation," << format_double(dev) << '\n';
  }
  return kOk;
}

struct GradcheckCliOptions {
  std::string module = "all";
  GradcheckOptions opts;
};

int cmd_gradcheck(const GradcheckCliOptions& o, std::ostream& out, std::ostream& err) {
  const auto results = run_gradcheck_module(o.module, o.opts);
  out << "module,tensor,checked,max_rel_error,worst_index,analytic,numeric,pass\n";
  bool all = true;
  for (const auto& [module, report] : results) {
    for (const auto& p : report.params) {
      out << module << ',' << p.name << ',' << p.checked << ',' << format_double(p.max_error) << ','
          << p.worst_index << ',' << format_double(p.worst_analytic) << ',' << format_double(p.worst_numeric)
          << ',' << (p.pass ? 1 : 0) << '\n';
    }
    all = all && report.all_pass();
  }
  err << (all ? "all gradients match" : "gradient mismatch") << " (tol " << o.opts.tolerance << ")\n";
  return all ? kOk : kNumericError;
}

struct GatesOptions {
  std::string ckpt, image, out;
  double epsilon = kGateEps;
};

int cmd_gates(const GatesOptions& o, std::ostream& out, std::ostream& err) {
  ToyBackbone model = load_checkpoint_model(o.ckpt, o.epsilon, GateMode::learned);
  if (!model.has_csnorm()) throw UsageError("checkpoint " + o.ckpt + " has no CSNorm layer");
  const Tensor4 image = load_ppm(o.image);
  ForwardTrace trace;
  model.predict(image, &trace);
  const auto rows = inspect_gates(trace.feature, model.csnorm());
  fs::create_directories(o.out);
  {
    std::ofstream csv(fs::path(o.out) / "gates.csv", std::ios::trunc);
    if (!csv) throw std::ios_base::failure("cannot write " + (fs::path(o.out) / "gates.csv").string());
    write_gate_csv(csv, rows);
  }
  write_gate_csv(out, rows);
  std::size_t written = 0;
  for (const auto& r : rows) {
    if (!r.selected) continue;
    char name[48];
    std::snprintf(name, sizeof name, "channel_%02zu.pgm", r.channel);
    save_ppm((fs::path(o.out) / name).string(), feature_map_image(trace.feature, r.batch, r.channel));
    ++written;
  }
  err << written << " of " << rows.size() << " channels selected\n";
  return kOk;
}

struct ExperimentOptions {
  std::string suite = "all";
  std::string out = "reports";
  ExperimentConfig cfg;
  std::size_t epochs = 0;
  std::size_t steps = 0;
};

int cmd_experiments(ExperimentOptions& o, std::ostream&, std::ostream& err) {
  o.cfg.out_dir = o.out;
  if (o.epochs > 0) o.cfg.motivation_train.epochs = o.cfg.train.epochs = o.epochs;
  if (o.steps > 0) o.cfg.motivation_train.steps_per_epoch = o.cfg.train.steps_per_epoch = o.steps;
  if (o.suite != "motivation" && o.suite != "generalization" && o.suite != "ablation" && o.suite != "all") {
    throw UsageError("unknown suite '" + o.suite + "'");
  }
  const auto reports = run_suite(o.suite, o.cfg);
  bool all = true;
  for (const auto& r : reports) {
    err << r.name << ": " << (r.passed() ? "PASS" : "FAIL") << " (" << r.wall_seconds << " s)\n";
    for (const auto& a : r.assertions) {
      err << "  " << (a.pass ? "pass" : "FAIL") << ' ' << a.name << " = " << a.value << " (need " << a.relation << ' '
          << a.threshold << ")\n";
    }
    all = all && r.passed();
  }
  return all ? kOk : kNumericError;
}

void add_config_flag(CLI::App* sub) {
  sub->add_option("--config", "Flat key=value file; keys are flag names, command line wins");
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Channel selective normalization toolkit", "csnorm"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);

  GenOptions gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic low-light dataset");
  g->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
  g->add_option("--count", gen.count, "Number of pairs")->capture_default_str();
  g->add_option("--size", gen.size, "Image height and width (max 64)")
      ->check(CLI::Range(std::size_t{1}, kMaxImageSize))
      ->capture_default_str();
  g->add_option("--domain", gen.domain, "Darkening law: A (gain 0.4, gamma 2.0) or B (gain 0.25, gamma 2.6)")
      ->check(CLI::IsMember({"A", "B"}))
      ->capture_default_str();
  g->add_option("--rectangles", gen.rectangles, "Rectangles per scene")->capture_default_str();
  g->add_option("--gradients", gen.gradients, "Linear gradients per scene")->capture_default_str();
  g->add_option("--sinusoids", gen.sinusoids, "2-D sinusoids per scene")->capture_default_str();
  g->add_option("--noise", gen.noise, "Gaussian noise sigma added after darkening")->capture_default_str();
  g->add_option("--out", gen.out, "Output directory")->required();
  add_config_flag(g);

  TrainOptions tr;
  auto* t = app.add_subcommand("train", "Train a model and write a checkpoint; log CSV on stdout");
  t->add_option("--data", tr.data, "Dataset directory")->required();
  t->add_option("--holdout", tr.holdout, "Optional holdout dataset for per-epoch PSNR");
  t->add_option("--mode", tr.mode, "baseline | csnorm-alt | csnorm-mixed")->capture_default_str();
  t->add_option("--ckpt", tr.ckpt, "Checkpoint output path")->required();
  t->add_option("--epochs", tr.cfg.epochs, "Epochs")->capture_default_str();
  t->add_option("--steps-per-epoch", tr.cfg.steps_per_epoch, "Step-1 (or joint) batches per epoch")->capture_default_str();
  t->add_option("--batch-size", tr.cfg.batch_size, "Images per batch")->capture_default_str();
  t->add_option("--ratio", tr.cfg.ratio, "Step-2 batches per step-1 batch")->capture_default_str();
  t->add_option("--lr-out", tr.cfg.lr_out, "Learning rate outside CSNorm")->capture_default_str();
  t->add_option("--lr-in", tr.cfg.lr_in, "Learning rate inside CSNorm")->capture_default_str();
  t->add_option("--delta", tr.cfg.delta, "Weight of the amplitude loss in step 2")->capture_default_str();
  t->add_option("--epsilon", tr.cfg.epsilon, "Gate function epsilon")->capture_default_str();
  t->add_option("--lambda-min", tr.cfg.lambda_min, "Lower end of the amplitude mixing weight")->capture_default_str();
  t->add_option("--lambda-max", tr.cfg.lambda_max, "Upper end of the amplitude mixing weight")->capture_default_str();
  t->add_option("--optimizer", tr.optimizer, "sgd | adam")->capture_default_str();
  t->add_option("--perturbation", tr.perturbation, "amplitude | linear")->capture_default_str();
  t->add_option("--schedule", tr.schedule, "Learning-rate schedule: constant | cosine")->capture_default_str();
  t->add_option("--linear-weight", tr.cfg.linear_weight, "Blend weight of the linear perturbation")
      ->capture_default_str();
  t->add_option("--mix-probability", tr.cfg.mix_probability, "Perturbed fraction in csnorm-mixed")
      ->capture_default_str();
  t->add_option("--seed", tr.cfg.seed, "Initialization and sampling seed")->capture_default_str();
  add_config_flag(t);

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint; metric CSV on stdout");
  e->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
  e->add_option("--data", ev.data, "Dataset directory")->required();
  e->add_option("--conditions", ev.conditions, "Comma list of original, interp, scale, cross:DIR")
      ->capture_default_str();
  e->add_option("--epsilon", ev.epsilon, "Gate epsilon the checkpoint was trained with")->capture_default_str();
  e->add_option("--gate-mode", ev.gate_mode, "learned | off | on")->capture_default_str();
  add_config_flag(e);

  PerturbOptions pe;
  auto* p = app.add_subcommand("perturb", "Fourier amplitude interpolation of two images");
  p->add_option("--low", pe.low, "Image whose phase is kept")->required();
  p->add_option("--norm", pe.norm, "Image whose amplitude is mixed in")->required();
  p->add_option("--lambda", pe.lambda, "Weight of the low image amplitude, in [0, 1]")->capture_default_str();
  p->add_option("--out", pe.out, "Output image")->required();
  p->add_flag("--verify", pe.verify, "Print the maximum phase deviation on stdout");
  add_config_flag(p);

  GradcheckCliOptions gc;
  auto* c = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients; CSV on stdout");
  c->add_option("--module", gc.module, "ops | csnorm | backbone | losses | all")->capture_default_str();
  c->add_option("--tol", gc.opts.tolerance, "Relative tolerance")->capture_default_str();
  c->add_option("--step", gc.opts.step, "Central difference step")->capture_default_str();
  c->add_option("--samples", gc.opts.samples_per_tensor, "Elements checked per tensor")->capture_default_str();
  c->add_option("--seed", gc.opts.seed, "Sampling seed")->capture_default_str();
  c->add_flag("--inject-sign-flip", gc.opts.negate_analytic)->group("");
  add_config_flag(c);

  GatesOptions ga;
  auto* gt = app.add_subcommand("gates", "Gate values per channel and feature maps of selected channels");
  gt->add_option("--ckpt", ga.ckpt, "Checkpoint with a CSNorm layer")->required();
  gt->add_option("--image", ga.image, "Input PPM image")->required();
  gt->add_option("--out", ga.out, "Output directory for gates.csv and channel PGMs")->required();
  gt->add_option("--epsilon", ga.epsilon, "Gate epsilon the checkpoint was trained with")->capture_default_str();
  add_config_flag(gt);

  ExperimentOptions ex;
  auto* x = app.add_subcommand("experiments", "Run the experiment suite and write reports");
  x->add_option("--suite", ex.suite, "motivation | generalization | ablation | all")->capture_default_str();
  x->add_option("--seed", ex.cfg.seed, "Base seed")->capture_default_str();
  x->add_option("--seeds", ex.cfg.seeds, "Repetitions; medians are reported")->capture_default_str();
  x->add_option("--out", ex.out, "Reports directory")->capture_default_str();
  x->add_option("--size", ex.cfg.image_size, "Image size")
      ->check(CLI::Range(std::size_t{1}, kMaxImageSize))
      ->capture_default_str();
  x->add_option("--train-count", ex.cfg.train_count, "Training pairs per seed")->capture_default_str();
  x->add_option("--test-count", ex.cfg.test_count, "Test pairs per seed and domain")->capture_default_str();
  x->add_option("--epochs", ex.epochs, "Override epochs of every arm (0 keeps the defaults)");
  x->add_option("--steps-per-epoch", ex.steps, "Override steps per epoch of every arm (0 keeps the defaults)");
  add_config_flag(x);

  try {
    std::vector<std::string> args = expand_config(raw_args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& ex_) {
    return app.exit(ex_, out, err) == 0 ? kOk : kUsageError;
  } catch (const UsageError& ex_) {
    err << "error: " << ex_.what() << '\n';
    return kUsageError;
  } catch (const std::exception& ex_) {
    err << "error: " << ex_.what() << '\n';
    return kIoError;
  }

  try {
    if (g->parsed()) return cmd_gen(gen, out, err);
    if (t->parsed()) return cmd_train(tr, out, err);
    if (e->parsed()) return cmd_eval(ev, out, err);
    if (p->parsed()) return cmd_perturb(pe, out, err);
    if (c->parsed()) return cmd_gradcheck(gc, out, err);
    if (gt->parsed()) return cmd_gates(ga, out, err);
    if (x->parsed()) return cmd_experiments(ex, out, err);
  } catch (const NumericError& ex_) {
    err << "numeric failure: " << ex_.what() << '\n';
    return kNumericError;
  } catch (const GradcheckError& ex_) {
    err << "numeric failure: " << ex_.what() << '\n';
    return kNumericError;
  } catch (const FormatError& ex_) {
    err << "error: " << ex_.what() << '\n';
    return kIoError;
  } catch (const std::invalid_argument& ex_) {
    err << "error: " << ex_.what() << '\n';
    return kUsageError;
  } catch (const std::exception& ex_) {
    err << "error: " << ex_.what() << '\n';
    return kIoError;
  }
  return kUsageError;
}

}  // namespace csnorm::cli

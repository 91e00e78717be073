#include "csnorm/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "csnorm/image_io.hpp"
#include "csnorm/rng.hpp"

namespace csnorm {

namespace fs = std::filesystem;

std::string Condition::tag() const {
  switch (kind) {
    case ConditionKind::original: return "original";
    case ConditionKind::interp: return "interp";
    case ConditionKind::scale: return "scale";
    case ConditionKind::custom: return "custom(" + format_double(gain) + "," + format_double(exponent) + ")";
  }
  return "?";
}

SceneSpec SceneSpec::domain_preset(const std::string& domain) {
  SceneSpec s;
  s.domain = domain;
  if (domain == "A") {
    s.dark_gain = 0.4;
    s.dark_gamma = 2.0;
  } else if (domain == "B") {
    s.dark_gain = 0.25;
    s.dark_gamma = 2.6;
  } else {
    throw std::invalid_argument("unknown domain '" + domain + "' (expected A or B)");
  }
  return s;
}

void SceneSpec::validate() const {
  if (height == 0 || width == 0 || height > kMaxImageSize || width > kMaxImageSize) {
    throw std::invalid_argument("scene size must be within 1.." + std::to_string(kMaxImageSize));
  }
  if (!(dark_gamma > 0.0) || !(dark_gain > 0.0)) {
    throw std::invalid_argument("darkening gamma and gain must be positive");
  }
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise sigma must be >= 0");
  if (!(exposure_jitter >= 0.0) || !(exposure - exposure_jitter > 0.0) || !(exposure + exposure_jitter < 1.0)) {
    throw std::invalid_argument("exposure +- jitter must lie inside (0,1)");
  }
}

KvFile SceneSpec::to_kv() const {
  KvFile kv;
  kv.set("seed", static_cast<unsigned long long>(seed));
  kv.set("count", count);
  kv.set("height", height);
  kv.set("width", width);
  kv.set("rectangles", rectangles);
  kv.set("gradients", gradients);
  kv.set("sinusoids", sinusoids);
  kv.set("dark_gamma", dark_gamma);
  kv.set("dark_gain", dark_gain);
  kv.set("noise_sigma", noise_sigma);
  kv.set("exposure", exposure);
  kv.set("exposure_jitter", exposure_jitter);
  kv.set("domain", domain);
  return kv;
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw FormatError("manifest: bad value for " + key + ": '" + text + "'");
  }
  return v;
}

}  // namespace

SceneSpec SceneSpec::from_kv(const KvFile& kv) {
  SceneSpec s;
  s.seed = parse_number<std::uint64_t>("seed", kv.require("seed"));
  s.count = parse_number<std::size_t>("count", kv.require("count"));
  s.height = parse_number<std::size_t>("height", kv.require("height"));
  s.width = parse_number<std::size_t>("width", kv.require("width"));
  s.rectangles = parse_number<std::size_t>("rectangles", kv.require("rectangles"));
  s.gradients = parse_number<std::size_t>("gradients", kv.require("gradients"));
  s.sinusoids = parse_number<std::size_t>("sinusoids", kv.require("sinusoids"));
  s.dark_gamma = parse_number<double>("dark_gamma", kv.require("dark_gamma"));
  s.dark_gain = parse_number<double>("dark_gain", kv.require("dark_gain"));
  s.noise_sigma = parse_number<double>("noise_sigma", kv.require("noise_sigma"));
  s.exposure = parse_number<double>("exposure", kv.require("exposure"));
  s.exposure_jitter = parse_number<double>("exposure_jitter", kv.require("exposure_jitter"));
  s.domain = kv.require("domain");
  s.validate();
  return s;
}

namespace {

Tensor4 make_target(const SceneSpec& spec, Rng& rng) {
  const std::size_t h = spec.height, w = spec.width, channels = 3;
  Tensor4 img({1, channels, h, w});
  const double fh = static_cast<double>(h), fw = static_cast<double>(w);

  for (std::size_t c = 0; c < channels; ++c) {
    const double base = rng.uniform(0.15, 0.85);
    for (double& v : img.plane(0, c)) v = base;
  }
  for (std::size_t g = 0; g < spec.gradients; ++g) {
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    double slope[3];
    for (double& s : slope) s = rng.uniform(-0.4, 0.4);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double t = (x / fw - 0.5) * std::cos(theta) + (y / fh - 0.5) * std::sin(theta);
        for (std::size_t c = 0; c < channels; ++c) img.at(0, c, y, x) += slope[c] * t;
      }
  }
  for (std::size_t r = 0; r < spec.rectangles; ++r) {
    const std::size_t rw = std::max<std::size_t>(1, static_cast<std::size_t>(rng.uniform(fw / 8, fw / 2)));
    const std::size_t rh = std::max<std::size_t>(1, static_cast<std::size_t>(rng.uniform(fh / 8, fh / 2)));
    const std::size_t x0 = rng.index(w);
    const std::size_t y0 = rng.index(h);
    double color[3];
    for (double& col : color) col = rng.uniform(0.0, 1.0);
    for (std::size_t y = y0; y < std::min(h, y0 + rh); ++y)
      for (std::size_t x = x0; x < std::min(w, x0 + rw); ++x)
        for (std::size_t c = 0; c < channels; ++c) img.at(0, c, y, x) = color[c];
  }
  for (std::size_t s = 0; s < spec.sinusoids; ++s) {
    const double amp = rng.uniform(0.03, 0.12);
    const double fx = rng.uniform(0.5, 4.0);
    const double fy = rng.uniform(0.5, 4.0);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    double weight[3];
    for (double& wt : weight) wt = rng.uniform(0.5, 1.0);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double v = amp * std::sin(2.0 * std::numbers::pi * (fx * x / fw + fy * y / fh) + phase);
        for (std::size_t c = 0; c < channels; ++c) img.at(0, c, y, x) += weight[c] * v;
      }
  }

  // Per-image contrast, then the mean is pinned near the exposure target.
  const double contrast = rng.uniform(0.6, 1.2);
  const double goal = rng.uniform(spec.exposure - spec.exposure_jitter, spec.exposure + spec.exposure_jitter);
  double mean = 0.0;
  for (double v : img.data()) mean += v;
  mean /= static_cast<double>(img.size());
  for (double& v : img.data()) v = quantize_8bit(goal + contrast * (v - mean));
  return img;
}

}  // namespace

Dataset gen_scene_pairs(const SceneSpec& spec) {
  spec.validate();
  Dataset out;
  out.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) {
    Rng rng(spec.seed, i);
    ScenePair p;
    p.target = make_target(spec, rng);
    p.degraded = Tensor4(p.target.shape());
    for (std::size_t k = 0; k < p.target.size(); ++k) {
      const double dark = spec.dark_gain * std::pow(p.target[k], spec.dark_gamma);
      const double noise = spec.noise_sigma > 0.0 ? rng.normal(0.0, spec.noise_sigma) : 0.0;
      p.degraded[k] = quantize_8bit(dark + noise);
    }
    out.push_back(std::move(p));
  }
  return out;
}

Tensor4 condition_interp(const Tensor4& degraded, const Tensor4& target, double w) {
  if (degraded.shape() != target.shape()) {
    throw ShapeError("condition_interp: shape mismatch " + to_string(degraded.shape()) + " vs " +
                     to_string(target.shape()));
  }
  Tensor4 out(degraded.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::clamp(w * degraded[i] + (1.0 - w) * target[i], 0.0, 1.0);
  }
  return out;
}

Tensor4 condition_scale(const Tensor4& x, double gain, double exponent) {
  if (!(gain > 0.0) || !(exponent > 0.0)) {
    throw std::invalid_argument("condition_scale: gain and exponent must be positive");
  }
  Tensor4 out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < 0.0) throw NumericError("condition_scale: negative input value");
    out[i] = std::clamp(gain * std::pow(x[i], exponent), 0.0, 1.0);
  }
  return out;
}

Dataset apply_condition(const Dataset& data, const Condition& cond) {
  Dataset out;
  out.reserve(data.size());
  for (const auto& p : data) {
    ScenePair q;
    q.target = p.target;
    q.condition = cond;
    switch (cond.kind) {
      case ConditionKind::original: q.degraded = p.degraded; break;
      case ConditionKind::interp: q.degraded = condition_interp(p.degraded, p.target); break;
      case ConditionKind::scale: q.degraded = condition_scale(p.degraded); break;
      case ConditionKind::custom: q.degraded = condition_scale(p.degraded, cond.gain, cond.exponent); break;
    }
    out.push_back(std::move(q));
  }
  return out;
}

namespace {

std::string numbered(const std::string& stem, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04zu.ppm", stem.c_str(), i);
  return buf;
}

}  // namespace

void save_dataset(const std::string& dir, const Dataset& data, const SceneSpec& spec) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < data.size(); ++i) {
    save_ppm((fs::path(dir) / numbered("degraded", i)).string(), data[i].degraded);
    save_ppm((fs::path(dir) / numbered("target", i)).string(), data[i].target);
  }
  KvFile kv = spec.to_kv();
  kv.set("count", data.size());
  kv.save((fs::path(dir) / "spec.manifest").string());
}

Dataset load_dataset(const std::string& dir, SceneSpec* spec_out) {
  const fs::path manifest = fs::path(dir) / "spec.manifest";
  if (!fs::exists(manifest)) throw std::ios_base::failure("no spec.manifest in " + dir);
  const SceneSpec spec = SceneSpec::from_kv(KvFile::load(manifest.string()));
  Dataset out;
  out.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) {
    ScenePair p;
    p.degraded = load_ppm((fs::path(dir) / numbered("degraded", i)).string());
    p.target = load_ppm((fs::path(dir) / numbered("target", i)).string());
    if (p.degraded.shape() != p.target.shape()) {
      throw FormatError("dataset pair " + std::to_string(i) + " has mismatched shapes");
    }
    out.push_back(std::move(p));
  }
  if (spec_out != nullptr) *spec_out = spec;
  return out;
}

Sha256 dataset_digest(const Dataset& data) {
  std::ostringstream os;
  for (const auto& p : data) {
    write_t4f(os, p.degraded);
    write_t4f(os, p.target);
  }
  return sha256(os.str());
}

void make_batch(const Dataset& data, const std::vector<std::size_t>& indices, Tensor4& degraded,
                Tensor4& target) {
  std::vector<Tensor4> d, t;
  d.reserve(indices.size());
  t.reserve(indices.size());
  for (std::size_t i : indices) {
    d.push_back(data.at(i).degraded);
    t.push_back(data.at(i).target);
  }
  degraded = stack(d);
  target = stack(t);
}

}  // namespace csnorm

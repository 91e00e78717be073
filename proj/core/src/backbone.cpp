#include "csnorm/backbone.hpp"

#include <functional>
#include <sstream>
#include <stdexcept>

#include "csnorm/kv_file.hpp"
#include "csnorm/ops.hpp"

namespace csnorm {

std::string BackboneConfig::canonical() const {
  std::ostringstream os;
  os << "toy-backbone/v1;channels=" << kImageChannels << ',' << kWidth1 << ',' << kFeatureChannels
     << ',' << kWidth1 << ',' << kImageChannels << ";csnorm=" << (with_csnorm ? 1 : 0);
  if (with_csnorm) {
    os << ";hidden=" << hidden() << ";epsilon=" << format_double(epsilon)
       << ";gate=" << to_string(gate_mode);
  }
  return os.str();
}

Sha256 BackboneConfig::digest() const { return sha256(canonical()); }

namespace {

ConvLayer make_conv(std::size_t in, std::size_t out, std::uint64_t seed, std::uint64_t stream) {
  Rng rng(seed, stream);
  return {init_uniform_fan_in({out, in, 3, 3}, rng), Tensor4({1, out, 1, 1}, 0.0)};
}

using Binder = std::function<Value(const Tensor4&, bool inside)>;

Value conv_block(Tape& t, Value x, const ConvLayer& layer, const Binder& bind) {
  return add_channel_bias(t, conv2d(t, x, bind(layer.weight, false), 1, 1), bind(layer.bias, false));
}

}  // namespace

ToyBackbone::ToyBackbone(const BackboneConfig& cfg, std::uint64_t seed)
    : cfg_(cfg),
      enc1_(make_conv(BackboneConfig::kImageChannels, BackboneConfig::kWidth1, seed, 1)),
      enc2_(make_conv(BackboneConfig::kWidth1, BackboneConfig::kFeatureChannels, seed, 2)),
      dec1_(make_conv(BackboneConfig::kFeatureChannels, BackboneConfig::kWidth1, seed, 3)),
      dec2_(make_conv(BackboneConfig::kWidth1, BackboneConfig::kImageChannels, seed, 4)) {
  if (cfg.with_csnorm) {
    Rng rng(seed, 5);
    csnorm_.emplace(BackboneConfig::kFeatureChannels, cfg.hidden(), cfg.epsilon, rng);
    csnorm_->mode = cfg.gate_mode;
  }
}

CSNormLayer& ToyBackbone::csnorm() {
  if (!csnorm_) throw std::logic_error("model has no CSNorm slot");
  return *csnorm_;
}

const CSNormLayer& ToyBackbone::csnorm() const {
  if (!csnorm_) throw std::logic_error("model has no CSNorm slot");
  return *csnorm_;
}

std::vector<NamedParam> ToyBackbone::outside_parameters() {
  return {
      {"enc1.weight", &enc1_.weight}, {"enc1.bias", &enc1_.bias},
      {"enc2.weight", &enc2_.weight}, {"enc2.bias", &enc2_.bias},
      {"dec1.weight", &dec1_.weight}, {"dec1.bias", &dec1_.bias},
      {"dec2.weight", &dec2_.weight}, {"dec2.bias", &dec2_.bias},
  };
}

std::vector<NamedParam> ToyBackbone::inside_parameters() {
  if (!csnorm_) return {};
  return csnorm_->parameters("csnorm.");
}

std::vector<NamedParam> ToyBackbone::parameters() {
  auto out = outside_parameters();
  for (auto& p : inside_parameters()) out.push_back(p);
  return out;
}

ParamPartition ToyBackbone::partition() {
  ParamPartition part;
  for (const auto& p : inside_parameters()) part.inside.push_back(p.name);
  for (const auto& p : outside_parameters()) part.outside.push_back(p.name);
  return part;
}

namespace {

Value run(Tape& t, Value x, const ConvLayer& enc1, const ConvLayer& enc2, const ConvLayer& dec1,
          const ConvLayer& dec2, const CSNormLayer* norm, const Binder& bind, ForwardTrace* trace) {
  if (t.shape(x).c != BackboneConfig::kImageChannels) {
    throw ShapeError("backbone: expected " + std::to_string(BackboneConfig::kImageChannels) +
                     "-channel input, got " + to_string(t.shape(x)));
  }
  Value h = relu(t, conv_block(t, x, enc1, bind));
  const Value feature = relu(t, conv_block(t, h, enc2, bind));
  Value mixed = feature;
  GateValues gates;
  if (norm != nullptr) {
    const CSNormBinding b{bind(norm->gamma, true),        bind(norm->beta, true),
                          bind(norm->gate1_weight, true), bind(norm->gate1_bias, true),
                          bind(norm->gate2_weight, true), bind(norm->gate2_bias, true)};
    mixed = csnorm_forward(t, feature, *norm, b, &gates);
  }
  h = relu(t, conv_block(t, mixed, dec1, bind));
  const Value out = conv_block(t, h, dec2, bind);
  if (trace != nullptr) {
    trace->feature = t.value(feature);
    trace->normalized = t.value(mixed);
    trace->alpha = gates.alpha.valid() ? t.value(gates.alpha) : Tensor4();
    trace->gate = gates.g.valid() ? t.value(gates.g) : Tensor4();
  }
  return out;
}

}  // namespace

Value ToyBackbone::forward(Tape& t, Value x, Trainable which, ForwardTrace* trace) {
  Binder bind = [&t, which](const Tensor4& p, bool inside) {
    const bool trainable = which == Trainable::all || (inside && which == Trainable::inside) ||
                           (!inside && which == Trainable::outside);
    // The model is non-const here, so binding its tensors mutably is sound.
    return trainable ? t.parameter(const_cast<Tensor4&>(p)) : t.constant(Tensor4(p.shape(), p.storage()));
  };
  return run(t, x, enc1_, enc2_, dec1_, dec2_, csnorm_ ? &*csnorm_ : nullptr, bind, trace);
}

Tensor4 ToyBackbone::predict(const Tensor4& x, ForwardTrace* trace) const {
  Tape t;
  Binder bind = [&t](const Tensor4& p, bool) { return t.constant(Tensor4(p.shape(), p.storage())); };
  const Value out = run(t, t.constant(x), enc1_, enc2_, dec1_, dec2_, csnorm_ ? &*csnorm_ : nullptr,
                        bind, trace);
  return t.value(out);
}

bool ToyBackbone::same_parameters(const ToyBackbone& other) const {
  auto& self = const_cast<ToyBackbone&>(*this);
  auto& that = const_cast<ToyBackbone&>(other);
  const auto a = self.parameters();
  const auto b = that.parameters();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || !a[i].tensor->bit_equal(*b[i].tensor)) return false;
  }
  return true;
}

std::size_t ToyBackbone::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : const_cast<ToyBackbone&>(*this).parameters()) n += p.tensor->size();
  return n;
}

}  // namespace csnorm

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "csnorm/binary_io.hpp"
#include "csnorm/training.hpp"

namespace csnorm {

namespace {

constexpr char kMagic[8] = {'C', 'S', 'N', 'C', 'K', 'P', 'T', '1'};

struct Entry {
  std::string name;
  Tensor4 tensor;
  bool inside = false;
};

struct Contents {
  Sha256 digest{};
  std::vector<Entry> entries;
};

Contents parse(std::istream& is) {
  char magic[8];
  is.read(magic, sizeof magic);
  if (is.gcount() != sizeof magic || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw FormatError("checkpoint: bad magic (expected CSNCKPT1)");
  }
  Contents c;
  is.read(reinterpret_cast<char*>(c.digest.data()), static_cast<std::streamsize>(c.digest.size()));
  if (is.gcount() != static_cast<std::streamsize>(c.digest.size())) {
    throw FormatError("checkpoint: truncated config digest");
  }
  while (is.peek() != std::char_traits<char>::eof()) {
    Entry e;
    const auto len = binary::get<std::uint16_t>(is, "checkpoint name length");
    e.name.resize(len);
    is.read(e.name.data(), len);
    if (is.gcount() != len) throw FormatError("checkpoint: truncated parameter name");
    e.tensor = read_t4f(is);
    const auto flag = binary::get<std::uint8_t>(is, "checkpoint partition flag");
    if (flag > 1) throw FormatError("checkpoint: bad partition flag for " + e.name);
    e.inside = flag == 1;
    c.entries.push_back(std::move(e));
  }
  return c;
}

// Validates everything first so the model is only touched on success.
void install(const Contents& c, ToyBackbone& model) {
  if (c.digest != model.config().digest()) {
    throw FormatError("checkpoint: config digest mismatch (checkpoint " + to_hex(c.digest) + ", model " +
                      to_hex(model.config().digest()) + ")");
  }
  const auto inside = model.inside_parameters();
  auto params = model.parameters();
  if (params.size() != c.entries.size()) {
    throw FormatError("checkpoint: " + std::to_string(c.entries.size()) + " parameters, model has " +
                      std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Entry& e = c.entries[i];
    if (e.name != params[i].name) {
      throw FormatError("checkpoint: expected parameter " + params[i].name + ", found " + e.name);
    }
    if (e.tensor.shape() != params[i].tensor->shape()) {
      throw FormatError("checkpoint: shape mismatch for " + e.name);
    }
    const bool is_inside = i >= params.size() - inside.size();
    if (e.inside != is_inside) throw FormatError("checkpoint: partition flag mismatch for " + e.name);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    *params[i].tensor = c.entries[i].tensor;
  }
}

}  // namespace

void write_checkpoint(std::ostream& os, ToyBackbone& model) {
  os.write(kMagic, sizeof kMagic);
  const Sha256 digest = model.config().digest();
  os.write(reinterpret_cast<const char*>(digest.data()), static_cast<std::streamsize>(digest.size()));
  const auto write_entry = [&](const NamedParam& p, bool inside) {
    if (p.name.size() > 0xFFFF) throw std::length_error("parameter name too long");
    binary::put(os, static_cast<std::uint16_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_t4f(os, *p.tensor);
    binary::put(os, static_cast<std::uint8_t>(inside ? 1 : 0));
  };
  for (const auto& p : model.outside_parameters()) write_entry(p, false);
  for (const auto& p : model.inside_parameters()) write_entry(p, true);
}

void save_checkpoint(const std::string& path, ToyBackbone& model) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::ios_base::failure("cannot write checkpoint " + path);
  write_checkpoint(os, model);
  os.flush();
  if (!os) throw std::ios_base::failure("error writing checkpoint " + path);
}

void read_checkpoint(std::istream& is, ToyBackbone& model) { install(parse(is), model); }

void load_checkpoint(const std::string& path, ToyBackbone& model) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::ios_base::failure("cannot open checkpoint " + path);
  read_checkpoint(is, model);
}

ToyBackbone load_checkpoint_model(const std::string& path, double epsilon, GateMode gate_mode) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::ios_base::failure("cannot open checkpoint " + path);
  const Contents c = parse(is);
  BackboneConfig cfg;
  cfg.with_csnorm = false;
  cfg.epsilon = epsilon;
  cfg.gate_mode = gate_mode;
  for (const auto& e : c.entries) {
    if (e.name.rfind("csnorm.", 0) == 0) cfg.with_csnorm = true;
    if (e.name == "csnorm.gate1.bias") cfg.gate_hidden = e.tensor.shape().c;
  }
  ToyBackbone model(cfg, 0);
  install(c, model);
  return model;
}

}  // namespace csnorm

#include "csnorm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "csnorm/binary_io.hpp"

namespace csnorm {

std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << s;
  return os.str();
}

std::ostream& operator<<(std::ostream& os, const Shape& s) {
  return os << s.n << 'x' << s.c << 'x' << s.h << 'x' << s.w;
}

Tensor4::Tensor4(Shape shape, double fill) : shape_(shape), data_(shape.numel(), fill) {}

Tensor4::Tensor4(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + to_string(shape_));
  }
}

std::span<double> Tensor4::plane(std::size_t n, std::size_t c) {
  return std::span<double>(data_).subspan(index(n, c, 0, 0), shape_.plane());
}

std::span<const double> Tensor4::plane(std::size_t n, std::size_t c) const {
  return std::span<const double>(data_).subspan(index(n, c, 0, 0), shape_.plane());
}

Tensor4 Tensor4::instance(std::size_t n) const {
  if (n >= shape_.n) throw ShapeError("instance index out of range");
  const std::size_t len = shape_.c * shape_.plane();
  std::vector<double> v(data_.begin() + static_cast<std::ptrdiff_t>(n * len),
                        data_.begin() + static_cast<std::ptrdiff_t>((n + 1) * len));
  return Tensor4({1, shape_.c, shape_.h, shape_.w}, std::move(v));
}

std::vector<double>& Tensor4::grad() {
  if (!grad_) grad_.emplace(data_.size(), 0.0);
  return *grad_;
}

const std::vector<double>& Tensor4::grad() const {
  if (!grad_) throw std::logic_error("tensor has no gradient buffer");
  return *grad_;
}

void Tensor4::zero_grad() {
  if (grad_) {
    std::fill(grad_->begin(), grad_->end(), 0.0);
  } else {
    grad_.emplace(data_.size(), 0.0);
  }
}

bool Tensor4::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor4::require_finite(const std::string& what) const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw NumericError(what + ": non-finite value at flat index " + std::to_string(i));
    }
  }
}

bool Tensor4::bit_equal(const Tensor4& other) const {
  return shape_ == other.shape_ &&
         (data_.empty() ||
          std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0);
}

Tensor4 stack(std::span<const Tensor4> items) {
  if (items.empty()) throw ShapeError("stack: no items");
  const Shape first = items.front().shape();
  std::vector<double> out;
  out.reserve(items.size() * first.c * first.plane());
  for (const auto& t : items) {
    const Shape s = t.shape();
    if (s.n != 1 || s.c != first.c || s.h != first.h || s.w != first.w) {
      throw ShapeError("stack: expected 1x" + std::to_string(first.c) + "x" +
                       std::to_string(first.h) + "x" + std::to_string(first.w) + ", got " +
                       to_string(s));
    }
    out.insert(out.end(), t.storage().begin(), t.storage().end());
  }
  return Tensor4({items.size(), first.c, first.h, first.w}, std::move(out));
}

namespace {
constexpr char kT4fMagic[4] = {'T', '4', 'F', '1'};
}

void write_t4f(std::ostream& os, const Tensor4& t) {
  os.write(kT4fMagic, 4);
  const Shape s = t.shape();
  for (std::size_t d : {s.n, s.c, s.h, s.w}) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw ShapeError("T4F: dimension too large");
    binary::put(os, static_cast<std::uint32_t>(d));
  }
  for (double v : t.data()) binary::put_f64(os, v);
}

Tensor4 read_t4f(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4) throw FormatError("T4F: truncated magic");
  if (std::memcmp(magic, kT4fMagic, 4) != 0) throw FormatError("T4F: bad magic");
  Shape s;
  s.n = binary::get<std::uint32_t>(is, "T4F dims");
  s.c = binary::get<std::uint32_t>(is, "T4F dims");
  s.h = binary::get<std::uint32_t>(is, "T4F dims");
  s.w = binary::get<std::uint32_t>(is, "T4F dims");
  std::vector<double> data(s.numel());
  for (auto& v : data) v = binary::get_f64(is, "T4F payload");
  return Tensor4(s, std::move(data));
}

void save_t4f(const std::string& path, const Tensor4& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::ios_base::failure("cannot open " + path + " for writing");
  write_t4f(os, t);
  if (!os) throw std::ios_base::failure("write failed: " + path);
}

Tensor4 load_t4f(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::ios_base::failure("cannot open " + path);
  return read_t4f(is);
}

}  // namespace csnorm

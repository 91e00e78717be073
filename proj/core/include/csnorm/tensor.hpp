#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace csnorm {

/// Dimension or shape disagreement between operands.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// NaN/Inf detected, or a numeric precondition failed.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or truncated file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t numel() const { return n * c * h * w; }
  std::size_t plane() const { return h * w; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);
std::ostream& operator<<(std::ostream& os, const Shape& s);

/// Dense N x C x H x W array of doubles, row-major, with an optional
/// gradient buffer of identical shape.
class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(Shape shape, double fill = 0.0);
  Tensor4(Shape shape, std::vector<double> data);

  static Tensor4 scalar(double v) { return Tensor4({1, 1, 1, 1}, v); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[index(n, c, h, w)];
  }
  double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[index(n, c, h, w)];
  }

  /// Contiguous H*W plane for (n, c).
  std::span<double> plane(std::size_t n, std::size_t c);
  std::span<const double> plane(std::size_t n, std::size_t c) const;

  /// Copy of the single instance `n` as a 1 x C x H x W tensor.
  Tensor4 instance(std::size_t n) const;

  bool has_grad() const { return grad_.has_value(); }
  std::vector<double>& grad();  // allocates a zero buffer on first use
  const std::vector<double>& grad() const;
  void zero_grad();
  void clear_grad() { grad_.reset(); }

  bool all_finite() const;
  /// Throws NumericError naming `what` if any value is NaN/Inf.
  void require_finite(const std::string& what) const;

  /// Bitwise equality of shape and data (grad is ignored).
  bool bit_equal(const Tensor4& other) const;

 private:
  Shape shape_{};
  std::vector<double> data_;
  std::optional<std::vector<double>> grad_;
};

/// Stack single-instance tensors of identical C x H x W along the batch dim.
Tensor4 stack(std::span<const Tensor4> items);

// T4F: "T4F1", four u32 LE dims (N,C,H,W), then N*C*H*W f64 LE, row-major.
void write_t4f(std::ostream& os, const Tensor4& t);
Tensor4 read_t4f(std::istream& is);
void save_t4f(const std::string& path, const Tensor4& t);
Tensor4 load_t4f(const std::string& path);

}  // namespace csnorm

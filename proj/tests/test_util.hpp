#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "csnorm/rng.hpp"
#include "csnorm/tensor.hpp"

namespace testutil {

inline csnorm::Tensor4 random_tensor(const csnorm::Shape& s, std::uint64_t seed, double lo = -1.0,
                                     double hi = 1.0) {
  csnorm::Rng rng(seed, 77);
  csnorm::Tensor4 t(s);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

inline double max_abs_diff(const csnorm::Tensor4& a, const csnorm::Tensor4& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("csnorm_test_" + tag + "_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace testutil

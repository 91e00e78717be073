#pragma once

#include "csnorm/tensor.hpp"

namespace csnorm {

/// PSNR reported for (near-)identical images, where MSE < 1e-12.
inline constexpr double kPsnrCapDb = 99.0;

/// 10 log10(peak^2 / MSE) in dB, capped at kPsnrCapDb.
double psnr(const Tensor4& a, const Tensor4& b, double peak = 1.0);

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Single-scale SSIM with a Gaussian window over valid positions, averaged
/// over instances, channels and positions. H and W must be >= window.
double ssim(const Tensor4& a, const Tensor4& b, const SsimOptions& opts = {});

}  // namespace csnorm

#include "csnorm/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace csnorm {

double psnr(const Tensor4& a, const Tensor4& b, double peak) {
  if (a.shape() != b.shape()) {
    throw ShapeError("psnr: shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  if (!(peak > 0.0)) throw std::invalid_argument("psnr: peak must be positive");
  if (a.empty()) throw ShapeError("psnr: empty tensor");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(a.size());
  if (mse < 1e-12) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(peak * peak / mse));
}

double ssim(const Tensor4& a, const Tensor4& b, const SsimOptions& opts) {
  if (a.shape() != b.shape()) {
    throw ShapeError("ssim: shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  const Shape s = a.shape();
  const std::size_t win = opts.window;
  if (s.h < win || s.w < win) {
    throw ShapeError("ssim: image " + to_string(s) + " smaller than " + std::to_string(win) + "x" +
                     std::to_string(win) + " window");
  }
  std::vector<double> kernel(win * win);
  double ksum = 0.0;
  const double half = static_cast<double>(win - 1) / 2.0;
  for (std::size_t y = 0; y < win; ++y)
    for (std::size_t x = 0; x < win; ++x) {
      const double dy = static_cast<double>(y) - half;
      const double dx = static_cast<double>(x) - half;
      kernel[y * win + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * opts.sigma * opts.sigma));
      ksum += kernel[y * win + x];
    }
  for (double& k : kernel) k /= ksum;

  const double c1 = (opts.k1 * opts.dynamic_range) * (opts.k1 * opts.dynamic_range);
  const double c2 = (opts.k2 * opts.dynamic_range) * (opts.k2 * opts.dynamic_range);
  const std::size_t oh = s.h - win + 1;
  const std::size_t ow = s.w - win + 1;
  double total = 0.0;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      auto pa = a.plane(n, c);
      auto pb = b.plane(n, c);
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
          double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
          for (std::size_t ky = 0; ky < win; ++ky) {
            for (std::size_t kx = 0; kx < win; ++kx) {
              const double k = kernel[ky * win + kx];
              const double va = pa[(y + ky) * s.w + x + kx];
              const double vb = pb[(y + ky) * s.w + x + kx];
              ma += k * va;
              mb += k * vb;
              saa += k * va * va;
              sbb += k * vb * vb;
              sab += k * va * vb;
            }
          }
          const double va = saa - ma * ma;
          const double vb = sbb - mb * mb;
          const double cov = sab - ma * mb;
          total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
      }
    }
  }
  return total / static_cast<double>(s.n * s.c * oh * ow);
}

}  // namespace csnorm

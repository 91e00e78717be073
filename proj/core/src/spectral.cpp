#include "csnorm/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <numbers>
#include <stdexcept>
#include <string>

namespace csnorm {

namespace {

// Separable 2-D DFT over one H x W plane using exact-index twiddle tables.
class Plan {
 public:
  Plan(std::size_t h, std::size_t w) : h_(h), w_(w), cos_h_(h), sin_h_(h), cos_w_(w), sin_w_(w) {
    fill(cos_h_, sin_h_, h);
    fill(cos_w_, sin_w_, w);
  }

  // out = sum_{y,x} in[y,x] * exp(sign * 2*pi*i*(u*y/H + v*x/W)). `im_in` may be null.
  void run(const double* re_in, const double* im_in, double* re_out, double* im_out, int sign) const {
    tmp_re_.assign(h_ * w_, 0.0);
    tmp_im_.assign(h_ * w_, 0.0);
    const double s = static_cast<double>(sign);
    for (std::size_t y = 0; y < h_; ++y) {
      const double* xr = re_in + y * w_;
      const double* xi = im_in ? im_in + y * w_ : nullptr;
      for (std::size_t v = 0; v < w_; ++v) {
        double ar = 0.0, ai = 0.0;
        for (std::size_t x = 0; x < w_; ++x) {
          const std::size_t k = (v * x) % w_;
          const double c = cos_w_[k];
          const double sn = s * sin_w_[k];
          const double r = xr[x];
          const double i = xi ? xi[x] : 0.0;
          ar += r * c - i * sn;
          ai += r * sn + i * c;
        }
        tmp_re_[y * w_ + v] = ar;
        tmp_im_[y * w_ + v] = ai;
      }
    }
    for (std::size_t u = 0; u < h_; ++u) {
      for (std::size_t v = 0; v < w_; ++v) {
        double ar = 0.0, ai = 0.0;
        for (std::size_t y = 0; y < h_; ++y) {
          const std::size_t k = (u * y) % h_;
          const double c = cos_h_[k];
          const double sn = s * sin_h_[k];
          const double r = tmp_re_[y * w_ + v];
          const double i = tmp_im_[y * w_ + v];
          ar += r * c - i * sn;
          ai += r * sn + i * c;
        }
        re_out[u * w_ + v] = ar;
        im_out[u * w_ + v] = ai;
      }
    }
  }

 private:
  static void fill(std::vector<double>& c, std::vector<double>& s, std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
      const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      c[k] = std::cos(a);
      s[k] = std::sin(a);
    }
  }

  std::size_t h_, w_;
  std::vector<double> cos_h_, sin_h_, cos_w_, sin_w_;
  mutable std::vector<double> tmp_re_, tmp_im_;
};

void require_same(const Spectrum& a, const Spectrum& b, const char* op) {
  if (a.c != b.c || a.h != b.h || a.w != b.w) {
    throw ShapeError(std::string(op) + ": spectrum shape mismatch");
  }
}

Spectrum dft_instance(const Tensor4& x, std::size_t n, const Plan& plan) {
  const Shape s = x.shape();
  Spectrum out{s.c, s.h, s.w, std::vector<double>(s.c * s.plane()), std::vector<double>(s.c * s.plane())};
  for (std::size_t c = 0; c < s.c; ++c) {
    const std::size_t off = c * s.plane();
    plan.run(x.plane(n, c).data(), nullptr, out.re.data() + off, out.im.data() + off, -1);
  }
  return out;
}

}  // namespace

double Spectrum::amplitude(std::size_t i) const { return std::hypot(re[i], im[i]); }
double Spectrum::phase(std::size_t i) const { return std::atan2(im[i], re[i]); }

std::vector<double> Spectrum::amplitudes() const {
  std::vector<double> a(size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = amplitude(i);
  return a;
}

std::vector<double> Spectrum::phases() const {
  std::vector<double> p(size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = phase(i);
  return p;
}

PolarSpectrum to_polar(const Spectrum& s) {
  return {s.c, s.h, s.w, s.amplitudes(), s.phases()};
}

Spectrum from_polar(const PolarSpectrum& p) {
  Spectrum s{p.c, p.h, p.w, std::vector<double>(p.amplitude.size()), std::vector<double>(p.amplitude.size())};
  for (std::size_t i = 0; i < p.amplitude.size(); ++i) {
    s.re[i] = p.amplitude[i] * std::cos(p.phase[i]);
    s.im[i] = p.amplitude[i] * std::sin(p.phase[i]);
  }
  return s;
}

Spectrum dft2d(const Tensor4& image) {
  const Shape s = image.shape();
  if (s.n != 1) throw ShapeError("dft2d: expected a single instance, got " + to_string(s));
  if (s.h == 0 || s.w == 0) throw ShapeError("dft2d: empty spatial extent");
  return dft_instance(image, 0, Plan(s.h, s.w));
}

Tensor4 idft2d(const Spectrum& s, double* max_imag) {
  if (s.h == 0 || s.w == 0) throw ShapeError("idft2d: empty spatial extent");
  Plan plan(s.h, s.w);
  const std::size_t p = s.h * s.w;
  const double scale = 1.0 / static_cast<double>(p);
  Tensor4 out({1, s.c, s.h, s.w});
  std::vector<double> im(p);
  double worst = 0.0;
  for (std::size_t c = 0; c < s.c; ++c) {
    double* re = out.plane(0, c).data();
    plan.run(s.re.data() + c * p, s.im.data() + c * p, re, im.data(), +1);
    for (std::size_t i = 0; i < p; ++i) {
      re[i] *= scale;
      worst = std::max(worst, std::abs(im[i] * scale));
    }
  }
  if (max_imag != nullptr) *max_imag = worst;
  return out;
}

PolarSpectrum amp_interp(const Spectrum& low, const Spectrum& norm, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("amp_interp: lambda " + std::to_string(lambda) + " outside [0,1]");
  }
  require_same(low, norm, "amp_interp");
  PolarSpectrum out = to_polar(low);
  for (std::size_t i = 0; i < out.amplitude.size(); ++i) {
    out.amplitude[i] = lambda * out.amplitude[i] + (1.0 - lambda) * norm.amplitude(i);
  }
  return out;
}

Tensor4 perturb_lightness(const Tensor4& low, const Tensor4& norm, double lambda, bool clamp) {
  if (low.shape() != norm.shape()) {
    throw ShapeError("perturb_lightness: shape mismatch " + to_string(low.shape()) + " vs " +
                     to_string(norm.shape()));
  }
  const Shape s = low.shape();
  if (s.plane() == 0) throw ShapeError("perturb_lightness: empty spatial extent");
  Plan plan(s.h, s.w);
  Tensor4 out(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    const Spectrum lo = dft_instance(low, n, plan);
    const Spectrum no = dft_instance(norm, n, plan);
    const Tensor4 img = idft2d(from_polar(amp_interp(lo, no, lambda)));
    for (std::size_t c = 0; c < s.c; ++c) {
      auto src = img.plane(0, c);
      auto dst = out.plane(n, c);
      for (std::size_t i = 0; i < src.size(); ++i) {
        dst[i] = clamp ? std::clamp(src[i], 0.0, 1.0) : src[i];
      }
    }
  }
  return out;
}

Value amplitude_l2(Tape& t, Value a, Value b) {
  const Shape s = t.shape(a);
  if (s != t.shape(b)) {
    throw ShapeError("amplitude_l2: shape mismatch " + to_string(s) + " vs " + to_string(t.shape(b)));
  }
  if (s.numel() == 0) throw ShapeError("amplitude_l2: empty tensor");
  const Tensor4& av = t.value(a);
  const Tensor4& bv = t.value(b);
  const std::size_t p = s.plane();
  const std::size_t total = s.numel();
  const double inv = 1.0 / static_cast<double>(total);

  // Spectra are kept for the backward pass.
  struct Saved {
    std::vector<double> a_re, a_im, b_re, b_im;
  };
  auto saved = std::make_shared<Saved>();
  saved->a_re.resize(total);
  saved->a_im.resize(total);
  saved->b_re.resize(total);
  saved->b_im.resize(total);
  Plan plan(s.h, s.w);
  double acc = 0.0;
  for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
    const std::size_t off = nc * p;
    plan.run(av.storage().data() + off, nullptr, saved->a_re.data() + off, saved->a_im.data() + off, -1);
    plan.run(bv.storage().data() + off, nullptr, saved->b_re.data() + off, saved->b_im.data() + off, -1);
  }
  for (std::size_t i = 0; i < total; ++i) {
    const double d = std::hypot(saved->a_re[i], saved->a_im[i]) - std::hypot(saved->b_re[i], saved->b_im[i]);
    acc += d * d;
  }

  return t.record(Tensor4::scalar(acc * inv), {a, b}, [=](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)[0];
    auto sa = tp.grad_sink(a);
    auto sb = tp.grad_sink(b);
    Plan plan(s.h, s.w);
    std::vector<double> cre(p), cim(p), out_re(p), out_im(p);
    for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
      const std::size_t off = nc * p;
      // dL/dA_a = 2 (A_a - A_b) / total; dL/dA_b is its negation.
      for (int side = 0; side < 2; ++side) {
        std::span<double> sink = side == 0 ? sa : sb;
        if (sink.empty()) continue;
        const auto& re = side == 0 ? saved->a_re : saved->b_re;
        const auto& im = side == 0 ? saved->a_im : saved->b_im;
        for (std::size_t i = 0; i < p; ++i) {
          const double aa = std::hypot(saved->a_re[off + i], saved->a_im[off + i]);
          const double ab = std::hypot(saved->b_re[off + i], saved->b_im[off + i]);
          const double amp = side == 0 ? aa : ab;
          const double ga = (side == 0 ? 1.0 : -1.0) * 2.0 * (aa - ab) * inv * g;
          // dA/d(re, im) = (re, im) / A; zero at A == 0.
          const double k = amp > 0.0 ? ga / amp : 0.0;
          cre[i] = k * re[off + i];
          cim[i] = k * im[off + i];
        }
        // dL/dx = Re(sum_uv c[u,v] exp(+i phi)).
        plan.run(cre.data(), cim.data(), out_re.data(), out_im.data(), +1);
        for (std::size_t i = 0; i < p; ++i) sink[off + i] += out_re[i];
      }
    }
  });
}

}  // namespace csnorm

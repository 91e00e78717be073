#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "csnorm/autodiff.hpp"

namespace csnorm {

/// Per-channel 2-D complex field of a single image, C x H x W, row-major.
struct Spectrum {
  std::size_t c = 0, h = 0, w = 0;
  std::vector<double> re;
  std::vector<double> im;

  std::size_t size() const { return re.size(); }
  double amplitude(std::size_t i) const;
  double phase(std::size_t i) const;
  std::vector<double> amplitudes() const;
  std::vector<double> phases() const;
};

/// Amplitude/phase form. Produced by amp_interp so the phase field can be
/// carried over from the source image untouched.
struct PolarSpectrum {
  std::size_t c = 0, h = 0, w = 0;
  std::vector<double> amplitude;
  std::vector<double> phase;
};

PolarSpectrum to_polar(const Spectrum& s);
Spectrum from_polar(const PolarSpectrum& p);

/// Unnormalized forward DFT of every channel of a 1 x C x H x W image.
Spectrum dft2d(const Tensor4& image);

/// Inverse DFT with the 1/(H*W) factor. Returns the real part as a
/// 1 x C x H x W image; the largest discarded imaginary magnitude is written
/// to `max_imag` when non-null.
Tensor4 idft2d(const Spectrum& s, double* max_imag = nullptr);

/// Amplitude lambda*A(low) + (1-lambda)*A(norm); phase of `low`, unchanged.
/// Throws std::invalid_argument for lambda outside [0,1], ShapeError on
/// shape mismatch.
PolarSpectrum amp_interp(const Spectrum& low, const Spectrum& norm, double lambda);

/// Reconstructs each instance from its interpolated amplitude and its own
/// phase. With clamp=false the raw real part of the inverse is returned.
Tensor4 perturb_lightness(const Tensor4& low, const Tensor4& norm, double lambda, bool clamp = true);

/// mean over all bins of (A(dft2d(a)) - A(dft2d(b)))^2, per instance and
/// channel; differentiable in both arguments.
Value amplitude_l2(Tape& t, Value a, Value b);

}  // namespace csnorm

#pragma once

#include <iosfwd>
#include <string>

#include "csnorm/tensor.hpp"

namespace csnorm {

// Binary PPM (P6, 3 channels) and PGM (P5, 1 channel), maxval 255 only.
// Byte v loads as v / 255; saving clamps to [0,1] and rounds half up.

Tensor4 read_ppm(std::istream& is);
Tensor4 load_ppm(const std::string& path);

/// Writes a 1 x C x H x W tensor, C = 3 as P6 or C = 1 as P5.
void write_ppm(std::ostream& os, const Tensor4& image);
void save_ppm(const std::string& path, const Tensor4& image);

/// Nearest 8-bit representable value, as produced by a save/load round trip.
double quantize_8bit(double v);

}  // namespace csnorm

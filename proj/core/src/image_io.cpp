#include "csnorm/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <vector>

namespace csnorm {

namespace {

int read_header_int(std::istream& is, const char* field) {
  // Skip whitespace and '#' comments.
  for (;;) {
    const int ch = is.peek();
    if (ch == EOF) throw FormatError(std::string("PPM: truncated header before ") + field);
    if (std::isspace(ch)) {
      is.get();
    } else if (ch == '#') {
      std::string dummy;
      std::getline(is, dummy);
    } else {
      break;
    }
  }
  long value = 0;
  int digits = 0;
  while (std::isdigit(is.peek())) {
    value = value * 10 + (is.get() - '0');
    if (++digits > 9) throw FormatError(std::string("PPM: ") + field + " too large");
  }
  if (digits == 0) throw FormatError(std::string("PPM: malformed ") + field);
  return static_cast<int>(value);
}

std::uint8_t to_byte(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(c * 255.0 + 0.5));
}

}  // namespace

double quantize_8bit(double v) { return static_cast<double>(to_byte(v)) / 255.0; }

Tensor4 read_ppm(std::istream& is) {
  char magic[2];
  is.read(magic, 2);
  if (is.gcount() != 2 || magic[0] != 'P' || (magic[1] != '6' && magic[1] != '5')) {
    throw FormatError("PPM: expected P6 or P5 magic");
  }
  const std::size_t channels = magic[1] == '6' ? 3 : 1;
  const int w = read_header_int(is, "width");
  const int h = read_header_int(is, "height");
  const int maxval = read_header_int(is, "maxval");
  if (w <= 0 || h <= 0) throw FormatError("PPM: non-positive dimensions");
  if (maxval != 255) throw FormatError("PPM: unsupported maxval " + std::to_string(maxval) + " (only 255)");
  if (!std::isspace(is.get())) throw FormatError("PPM: missing whitespace after maxval");

  const std::size_t hw = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  std::vector<unsigned char> bytes(hw * channels);
  is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(is.gcount()) != bytes.size()) {
    throw FormatError("PPM: truncated payload, expected " + std::to_string(bytes.size()) + " bytes, got " +
                      std::to_string(is.gcount()));
  }
  Tensor4 out({1, channels, static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
  for (std::size_t i = 0; i < hw; ++i)
    for (std::size_t c = 0; c < channels; ++c) out[c * hw + i] = bytes[i * channels + c] / 255.0;
  return out;
}

Tensor4 load_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::ios_base::failure("cannot open " + path);
  return read_ppm(is);
}

void write_ppm(std::ostream& os, const Tensor4& image) {
  const Shape s = image.shape();
  if (s.n != 1 || (s.c != 3 && s.c != 1)) {
    throw ShapeError("write_ppm: expected 1x3xHxW or 1x1xHxW, got " + to_string(s));
  }
  os << (s.c == 3 ? "P6" : "P5") << '\n' << s.w << ' ' << s.h << "\n255\n";
  const std::size_t hw = s.plane();
  std::vector<unsigned char> bytes(hw * s.c);
  for (std::size_t i = 0; i < hw; ++i)
    for (std::size_t c = 0; c < s.c; ++c) bytes[i * s.c + c] = to_byte(image[c * hw + i]);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void save_ppm(const std::string& path, const Tensor4& image) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::ios_base::failure("cannot open " + path + " for writing");
  write_ppm(os, image);
  if (!os) throw std::ios_base::failure("write failed: " + path);
}

}  // namespace csnorm

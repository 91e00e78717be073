#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "csnorm/tensor.hpp"

namespace csnorm::binary {

template <typename U>
U to_little(U v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    U out = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      out = static_cast<U>((out << 8) | ((v >> (8 * i)) & 0xFF));
    }
    return out;
  }
}

template <typename U>
void put(std::ostream& os, U v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U get(std::istream& is, const char* what) {
  U v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(U));
  if (is.gcount() != static_cast<std::streamsize>(sizeof(U))) {
    throw FormatError(std::string("truncated input while reading ") + what);
  }
  return to_little(v);
}

inline void put_f64(std::ostream& os, double d) { put(os, std::bit_cast<std::uint64_t>(d)); }

inline double get_f64(std::istream& is, const char* what) {
  return std::bit_cast<double>(get<std::uint64_t>(is, what));
}

}  // namespace csnorm::binary

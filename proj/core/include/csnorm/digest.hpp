#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace csnorm {

using Sha256 = std::array<std::uint8_t, 32>;

Sha256 sha256(std::span<const std::uint8_t> bytes);
Sha256 sha256(std::string_view bytes);
Sha256 sha256_file(const std::string& path);
std::string to_hex(const Sha256& d);

}  // namespace csnorm

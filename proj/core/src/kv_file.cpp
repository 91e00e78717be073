#include "csnorm/kv_file.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "csnorm/tensor.hpp"

namespace csnorm {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void KvFile::set(const std::string& key, const std::string& value) {
  if (key.empty() || key.find_first_of("=\n") != std::string::npos) {
    throw std::invalid_argument("kv: invalid key '" + key + "'");
  }
  if (value.find('\n') != std::string::npos) throw std::invalid_argument("kv: newline in value");
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries_.emplace_back(key, value);
}

void KvFile::set(const std::string& key, double value) { set(key, format_double(value)); }
void KvFile::set(const std::string& key, long long value) { set(key, std::to_string(value)); }
void KvFile::set(const std::string& key, unsigned long long value) { set(key, std::to_string(value)); }

std::optional<std::string> KvFile::get(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  return std::nullopt;
}

std::string KvFile::require(const std::string& key) const {
  auto v = get(key);
  if (!v) throw FormatError("kv: missing key '" + key + "'");
  return *v;
}

void KvFile::write(std::ostream& os) const {
  for (const auto& [k, v] : entries_) os << k << '=' << v << '\n';
}

std::string KvFile::str() const {
  std::ostringstream os;
  write(os);
  return os.str();
}

void KvFile::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::ios_base::failure("cannot open " + path + " for writing");
  write(os);
  if (!os) throw std::ios_base::failure("write failed: " + path);
}

KvFile KvFile::parse(std::istream& is) {
  KvFile kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw FormatError("kv: line " + std::to_string(lineno) + " is not key=value");
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return kv;
}

KvFile KvFile::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::ios_base::failure("cannot open " + path);
  return parse(is);
}

}  // namespace csnorm

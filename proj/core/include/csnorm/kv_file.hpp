#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace csnorm {

/// Flat `key=value` text file, one pair per line, insertion-ordered.
/// Blank lines and lines starting with '#' are ignored on read.
class KvFile {
 public:
  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value);
  void set(const std::string& key, long long value);
  void set(const std::string& key, unsigned long long value);
  void set(const std::string& key, std::size_t value) { set(key, static_cast<unsigned long long>(value)); }
  void set(const std::string& key, int value) { set(key, static_cast<long long>(value)); }
  void set(const std::string& key, const char* value) { set(key, std::string(value)); }

  std::optional<std::string> get(const std::string& key) const;
  std::string require(const std::string& key) const;
  bool contains(const std::string& key) const { return get(key).has_value(); }
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  void write(std::ostream& os) const;
  std::string str() const;
  void save(const std::string& path) const;

  static KvFile parse(std::istream& is);
  static KvFile load(const std::string& path);

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

/// Shortest decimal text that round-trips the double exactly.
std::string format_double(double v);

}  // namespace csnorm

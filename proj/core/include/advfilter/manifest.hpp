#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace advfilter {

/// Plain-text `key=value` file, one entry per line, `#` comments. Keys keep
/// insertion order on write. The same format backs checkpoint manifests and
/// the CLI `--config` files.
class Manifest {
 public:
  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, const char* value) { set(key, std::string(value)); }
  void set(const std::string& key, double value);
  void set(const std::string& key, int64_t value);
  void set(const std::string& key, int value) { set(key, static_cast<int64_t>(value)); }
  void set(const std::string& key, uint64_t value);
  void set(const std::string& key, bool value);

  bool contains(const std::string& key) const;
  /// Throws ConfigError when the key is absent.
  const std::string& get(const std::string& key) const;
  std::optional<std::string> find(const std::string& key) const;
  double get_double(const std::string& key) const;
  int64_t get_int(const std::string& key) const;
  uint64_t get_uint(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  void write(const std::filesystem::path& path) const;
  /// Throws ConfigError if the file is missing or a line lacks '='.
  static Manifest read(const std::filesystem::path& path);
  static Manifest parse(const std::string& text, const std::string& origin = "<string>");

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::map<std::string, size_t> index_;
};

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);
double parse_double(const std::string& text);

}  // namespace advfilter

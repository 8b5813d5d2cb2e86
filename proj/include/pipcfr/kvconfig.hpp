#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace pipcfr {

// Flat `key = value` configuration with dotted namespaces (train.lr,
// data.kind, ...). '#' starts a comment. Serialization sorts keys so resolved
// snapshots diff cleanly.
class KvConfig {
 public:
  KvConfig() = default;
  static KvConfig from_file(const std::string& path);
  static KvConfig from_string(const std::string& text);

  void set(const std::string& key, const std::string& value);
  void set_double(const std::string& key, double v);
  void set_int(const std::string& key, long long v);
  bool has(const std::string& key) const;

  std::string get_str(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Other wins on key conflicts.
  void merge(const KvConfig& other);

  std::string serialize() const;
  void save(const std::string& path) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

// "1,2.5,3" -> {1, 2.5, 3}
std::vector<double> parse_double_list(const std::string& text);
std::vector<std::uint64_t> parse_u64_list(const std::string& text);
std::vector<std::string> parse_str_list(const std::string& text);

}  // namespace pipcfr

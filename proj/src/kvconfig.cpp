#include "pipcfr/kvconfig.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "pipcfr/errors.hpp"

namespace pipcfr {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

KvConfig KvConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return from_string(ss.str());
}

KvConfig KvConfig::from_string(const std::string& text) {
  KvConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("config: missing '=' at line " + std::to_string(lineno));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError("config: empty key at line " + std::to_string(lineno));
    cfg.entries_[key] = value;
  }
  return cfg;
}

void KvConfig::set(const std::string& key, const std::string& value) {
  entries_[key] = value;
}

void KvConfig::set_double(const std::string& key, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  entries_[key] = buf;
}

void KvConfig::set_int(const std::string& key, long long v) {
  entries_[key] = std::to_string(v);
}

bool KvConfig::has(const std::string& key) const { return entries_.count(key) > 0; }

std::string KvConfig::get_str(const std::string& key, const std::string& fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

double KvConfig::get_double(const std::string& key, double fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  double v = 0;
  auto [p, ec] = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
  if (ec != std::errc{} || p != it->second.data() + it->second.size())
    throw ParseError("config: key '" + key + "' has non-numeric value '" + it->second + "'");
  return v;
}

long long KvConfig::get_int(const std::string& key, long long fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  long long v = 0;
  auto [p, ec] = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
  if (ec != std::errc{} || p != it->second.data() + it->second.size())
    throw ParseError("config: key '" + key + "' has non-integer value '" + it->second + "'");
  return v;
}

std::uint64_t KvConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
  if (ec != std::errc{} || p != it->second.data() + it->second.size())
    throw ParseError("config: key '" + key + "' has non-integer value '" + it->second + "'");
  return v;
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ParseError("config: key '" + key + "' has non-boolean value '" + it->second + "'");
}

void KvConfig::merge(const KvConfig& other) {
  for (const auto& [k, v] : other.entries_) entries_[k] = v;
}

std::string KvConfig::serialize() const {
  std::ostringstream os;
  for (const auto& [k, v] : entries_) os << k << " = " << v << "\n";
  return os.str();
}

void KvConfig::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("config: cannot write " + path);
  f << serialize();
}

std::vector<std::string> parse_str_list(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  for (const std::string& tok : parse_str_list(text)) {
    double v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || p != tok.data() + tok.size())
      throw ParseError("list: non-numeric entry '" + tok + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<std::uint64_t> parse_u64_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (const std::string& tok : parse_str_list(text)) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || p != tok.data() + tok.size())
      throw ParseError("list: non-integer entry '" + tok + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace pipcfr

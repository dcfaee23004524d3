#pragma once
// Flat key-value text files.
//
// One entry per line, `key value` or `key = value`; `#` starts a comment.
// Entries keep their insertion order so that written files are byte-stable.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "thermoseed/autograd.hpp"

namespace thermoseed {

class KeyValueFile {
 public:
  KeyValueFile() = default;

  static KeyValueFile parse(std::string_view text);
  static KeyValueFile read(const std::filesystem::path& path);

  void set(std::string key, std::string value);
  void set(std::string key, double value);
  void set_int(std::string key, long long value);

  bool contains(std::string_view key) const;
  std::optional<std::string> find(std::string_view key) const;
  // Throws std::runtime_error naming the key when missing or malformed.
  const std::string& get(std::string_view key) const;
  double get_double(std::string_view key) const;
  long long get_int(std::string_view key) const;
  bool get_bool(std::string_view key) const;
  std::vector<double> get_doubles(std::string_view key) const;  // comma separated

  double get_double(std::string_view key, double fallback) const;
  long long get_int(std::string_view key, long long fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;
  std::string get(std::string_view key, std::string fallback) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  // Header lines are written first as `# ...` comments.
  std::string to_string(std::string_view header = {}) const;
  void write(const std::filesystem::path& path, std::string_view header = {}) const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

// 17 significant digits; round-trips every finite double.
std::string format_double(double v);

// 16 lowercase hex digits of the IEEE-754 bit pattern.
std::string double_to_hex(double v);
double hex_to_double(std::string_view hex);

// `shape hexword hexword ...` for a tensor line; inverse of parse_tensor.
std::string encode_tensor(const ad::Tensor& t);
ad::Tensor parse_tensor(std::string_view encoded);

// FNV-1a 64-bit, rendered as hex. Used for config content hashes.
std::string content_hash(std::string_view text);

}  // namespace thermoseed

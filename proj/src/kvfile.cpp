#include "thermoseed/kvfile.hpp"

#include <bit>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace thermoseed {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

double parse_double(std::string_view key, std::string_view s) {
  s = trim(s);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::runtime_error("key '" + std::string(key) + "': not a number: '" + std::string(s) +
                             "'");
  }
  return v;
}

}  // namespace

KeyValueFile KeyValueFile::parse(std::string_view text) {
  KeyValueFile kv;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const std::size_t hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t split = line.find_first_of(" \t=");
    if (split == std::string_view::npos) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": expected 'key value'");
    }
    const std::string_view key = line.substr(0, split);
    std::string_view value = trim(line.substr(split));
    if (!value.empty() && value.front() == '=') value = trim(value.substr(1));
    if (key.empty()) throw std::runtime_error("line " + std::to_string(line_no) + ": empty key");
    kv.set(std::string(key), std::string(value));
  }
  return kv;
}

KeyValueFile KeyValueFile::read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str());
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void KeyValueFile::set(std::string key, std::string value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  entries_.emplace_back(std::move(key), std::move(value));
}

void KeyValueFile::set(std::string key, double value) { set(std::move(key), format_double(value)); }

void KeyValueFile::set_int(std::string key, long long value) {
  set(std::move(key), std::to_string(value));
}

bool KeyValueFile::contains(std::string_view key) const { return find(key).has_value(); }

std::optional<std::string> KeyValueFile::find(std::string_view key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  return std::nullopt;
}

const std::string& KeyValueFile::get(std::string_view key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  throw std::runtime_error("missing key '" + std::string(key) + "'");
}

double KeyValueFile::get_double(std::string_view key) const { return parse_double(key, get(key)); }

long long KeyValueFile::get_int(std::string_view key) const {
  const std::string& s = get(key);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::runtime_error("key '" + std::string(key) + "': not an integer: '" + s + "'");
  }
  return v;
}

bool KeyValueFile::get_bool(std::string_view key) const {
  const std::string& s = get(key);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw std::runtime_error("key '" + std::string(key) + "': not a boolean: '" + s + "'");
}

std::vector<double> KeyValueFile::get_doubles(std::string_view key) const {
  const std::string& s = get(key);
  std::vector<double> out;
  std::string_view rest = s;
  while (!rest.empty()) {
    const std::size_t comma = rest.find(',');
    out.push_back(parse_double(key, rest.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return out;
}

double KeyValueFile::get_double(std::string_view key, double fallback) const {
  return contains(key) ? get_double(key) : fallback;
}

long long KeyValueFile::get_int(std::string_view key, long long fallback) const {
  return contains(key) ? get_int(key) : fallback;
}

bool KeyValueFile::get_bool(std::string_view key, bool fallback) const {
  return contains(key) ? get_bool(key) : fallback;
}

std::string KeyValueFile::get(std::string_view key, std::string fallback) const {
  auto v = find(key);
  return v ? *v : fallback;
}

std::string KeyValueFile::to_string(std::string_view header) const {
  std::string out;
  if (!header.empty()) {
    out += "# ";
    out += header;
    out += '\n';
  }
  for (const auto& [k, v] : entries_) {
    out += k;
    out += ' ';
    out += v;
    out += '\n';
  }
  return out;
}

void KeyValueFile::write(const std::filesystem::path& path, std::string_view header) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_string(header);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string double_to_hex(double v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(std::bit_cast<std::uint64_t>(v)));
  return buf;
}

double hex_to_double(std::string_view hex) {
  std::uint64_t bits = 0;
  const auto [ptr, ec] = std::from_chars(hex.data(), hex.data() + hex.size(), bits, 16);
  if (ec != std::errc() || ptr != hex.data() + hex.size() || hex.size() != 16) {
    throw std::runtime_error("bad hex word '" + std::string(hex) + "'");
  }
  return std::bit_cast<double>(bits);
}

std::string encode_tensor(const ad::Tensor& t) {
  std::string out = t.shape_string();
  for (double v : t.values()) {
    out += ' ';
    out += double_to_hex(v);
  }
  return out;
}

ad::Tensor parse_tensor(std::string_view encoded) {
  std::istringstream in{std::string(encoded)};
  std::string shape_text;
  in >> shape_text;
  std::vector<std::size_t> shape;
  std::string_view rest = shape_text;
  while (!rest.empty()) {
    const std::size_t x = rest.find('x');
    const std::string_view part = rest.substr(0, x);
    std::size_t e = 0;
    const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), e);
    if (ec != std::errc() || ptr != part.data() + part.size() || e == 0) {
      throw std::runtime_error("bad tensor shape '" + shape_text + "'");
    }
    shape.push_back(e);
    if (x == std::string_view::npos) break;
    rest = rest.substr(x + 1);
  }
  ad::Tensor t(shape);
  std::string word;
  std::size_t i = 0;
  while (in >> word) {
    if (i >= t.size()) throw std::runtime_error("tensor has more words than its shape");
    t[i++] = hex_to_double(word);
  }
  if (i != t.size()) throw std::runtime_error("tensor has fewer words than its shape");
  return t;
}

std::string content_hash(std::string_view text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace thermoseed

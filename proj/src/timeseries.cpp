#include "thermoseed/timeseries.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "thermoseed/kvfile.hpp"

namespace thermoseed::ts {

using namespace std::chrono;

std::string format_timestamp(Timestamp t) {
  const sys_days day = floor<days>(t);
  const year_month_day ymd{day};
  const hh_mm_ss hms{t - day};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

Timestamp parse_timestamp(std::string_view text) {
  int y = 0;
  unsigned mo = 0, d = 0;
  int h = 0, mi = 0, s = 0;
  char tail = 0;
  const std::string copy(text);
  const int n = std::sscanf(copy.c_str(), "%4d-%2u-%2uT%2d:%2d:%2d%c", &y, &mo, &d, &h, &mi, &s,
                            &tail);
  if (n < 6 || (n == 7 && tail != 'Z') || copy.size() > 20) {
    throw std::invalid_argument("not an ISO-8601 UTC timestamp: '" + copy + "'");
  }
  const year_month_day ymd{year{y}, month{mo}, day{d}};
  if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0 || s > 59) {
    throw std::invalid_argument("invalid calendar time: '" + copy + "'");
  }
  return sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
}

TimeSeriesTable::TimeSeriesTable(Timestamp start, std::int64_t step_seconds, std::size_t length)
    : start_(start), step_(step_seconds), length_(length) {
  if (step_seconds <= 0 || (60 % step_seconds != 0 && step_seconds % 60 != 0)) {
    throw std::invalid_argument("step must divide 60 s or be a multiple of 60 s");
  }
}

std::size_t TimeSeriesTable::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  throw std::out_of_range("unknown channel '" + std::string(name) + "'");
}

void TimeSeriesTable::add_channel(std::string name, std::vector<double> values) {
  if (has_channel(name)) throw std::invalid_argument("duplicate channel '" + name + "'");
  if (values.size() != length_) {
    throw std::invalid_argument("channel '" + name + "' has " + std::to_string(values.size()) +
                                " rows, table has " + std::to_string(length_));
  }
  names_.push_back(std::move(name));
  columns_.push_back(std::move(values));
}

bool TimeSeriesTable::has_channel(std::string_view name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

const std::vector<double>& TimeSeriesTable::channel(std::string_view name) const {
  return columns_[index_of(name)];
}

std::vector<double>& TimeSeriesTable::channel(std::string_view name) {
  return columns_[index_of(name)];
}

std::optional<double> TimeSeriesTable::at(std::string_view name, std::size_t row) const {
  const double v = channel(name).at(row);
  if (is_missing(v)) return std::nullopt;
  return v;
}

std::size_t TimeSeriesTable::missing_count(std::string_view name) const {
  const auto& c = channel(name);
  return static_cast<std::size_t>(std::count_if(c.begin(), c.end(), is_missing));
}

CsvError::CsvError(std::size_t row, const std::string& what)
    : std::runtime_error("row " + std::to_string(row) + ": " + what), row_(row) {}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  while (true) {
    const std::size_t c = line.find(',');
    out.push_back(line.substr(0, c));
    if (c == std::string_view::npos) break;
    line = line.substr(c + 1);
  }
  return out;
}

std::string_view strip_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

}  // namespace

TimeSeriesTable load_csv(const std::filesystem::path& path, std::span<const std::string> schema,
                         std::int64_t step_seconds) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw CsvError(0, "empty file " + path.string());
  const auto header = split_commas(strip_cr(line));
  if (header.empty() || header[0] != "timestamp") {
    throw CsvError(0, "first column must be 'timestamp'");
  }
  std::vector<std::string> names(header.begin() + 1, header.end());
  {
    std::set<std::string> got(names.begin(), names.end());
    std::set<std::string> want(schema.begin(), schema.end());
    if (got.size() != names.size()) throw CsvError(0, "duplicate channel in header");
    if (got != want) throw CsvError(0, "header does not match the expected channels");
  }

  std::vector<std::vector<double>> cols(names.size());
  std::optional<Timestamp> start;
  std::int64_t last_index = -1;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    const std::string_view text = strip_cr(line);
    if (text.empty()) continue;
    const auto cells = split_commas(text);
    if (cells.size() != names.size() + 1) {
      throw CsvError(row, "expected " + std::to_string(names.size() + 1) + " cells, found " +
                              std::to_string(cells.size()));
    }
    Timestamp t;
    try {
      t = parse_timestamp(cells[0]);
    } catch (const std::invalid_argument& e) {
      throw CsvError(row, e.what());
    }
    if (!start) start = t;
    const std::int64_t offset = (t - *start).count();
    if (offset % step_seconds != 0) throw CsvError(row, "timestamp is off the step grid");
    const std::int64_t index = offset / step_seconds;
    if (index == last_index) throw CsvError(row, "duplicate timestamp");
    if (index < last_index) throw CsvError(row, "timestamps are not increasing");
    for (std::int64_t fill = last_index + 1; fill < index; ++fill) {
      for (auto& c : cols) c.push_back(kMissing);
    }
    for (std::size_t c = 0; c < names.size(); ++c) {
      const std::string_view cell = cells[c + 1];
      if (cell.empty()) {
        cols[c].push_back(kMissing);
        continue;
      }
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw CsvError(row, "malformed number '" + std::string(cell) + "' in column " + names[c]);
      }
      cols[c].push_back(v);
    }
    last_index = index;
  }
  if (!start) throw CsvError(row, "no data rows in " + path.string());
  TimeSeriesTable table(*start, step_seconds, cols.front().size());
  for (std::size_t c = 0; c < names.size(); ++c) table.add_channel(names[c], std::move(cols[c]));
  return table;
}

void write_csv(const TimeSeriesTable& table, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "timestamp";
  for (const auto& n : table.channel_names()) out << ',' << n;
  out << '\n';
  std::vector<const std::vector<double>*> cols;
  for (const auto& n : table.channel_names()) cols.push_back(&table.channel(n));
  char buf[64];
  for (std::size_t r = 0; r < table.length(); ++r) {
    out << format_timestamp(table.timestamp(r));
    for (const auto* c : cols) {
      out << ',';
      const double v = (*c)[r];
      if (!is_missing(v)) {
        const auto res = std::to_chars(buf, buf + sizeof buf, v);
        out.write(buf, res.ptr - buf);
      }
    }
    out << '\n';
  }
}

TimeSeriesTable delete_constant_streaks(const TimeSeriesTable& table, std::string_view channel,
                                        std::chrono::seconds max_streak) {
  if (max_streak.count() <= 0 || max_streak.count() % table.step() != 0) {
    throw std::invalid_argument("max_streak must be a positive multiple of the step");
  }
  const std::size_t max_samples = static_cast<std::size_t>(max_streak.count() / table.step());
  TimeSeriesTable out = table;
  auto& v = out.channel(channel);
  std::size_t i = 0;
  while (i < v.size()) {
    if (is_missing(v[i])) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < v.size() && v[j] == v[i]) ++j;
    if (j - i > max_samples) std::fill(v.begin() + i, v.begin() + j, kMissing);
    i = j;
  }
  return out;
}

TimeSeriesTable clip_nonnegative(const TimeSeriesTable& table, std::string_view channel) {
  TimeSeriesTable out = table;
  for (double& x : out.channel(channel)) {
    if (!is_missing(x) && x < 0.0) x = 0.0;
  }
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(4.0 * sigma));
  std::vector<double> k;
  k.reserve(2 * radius + 1);
  for (std::ptrdiff_t j = -radius; j <= radius; ++j) {
    k.push_back(std::exp(-static_cast<double>(j * j) / (2.0 * sigma * sigma)));
  }
  return k;
}

TimeSeriesTable gaussian_smooth(const TimeSeriesTable& table, std::string_view channel,
                                double sigma) {
  const std::vector<double> kernel = gaussian_kernel(sigma);
  const auto radius = static_cast<std::ptrdiff_t>(kernel.size() / 2);
  const auto& in = table.channel(channel);
  TimeSeriesTable out = table;
  auto& v = out.channel(channel);
  const auto n = static_cast<std::ptrdiff_t>(in.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    if (is_missing(in[i])) continue;
    double num = 0.0;
    double den = 0.0;
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - radius);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n - 1, i + radius);
    for (std::ptrdiff_t j = lo; j <= hi; ++j) {
      if (is_missing(in[j])) continue;
      const double w = kernel[j - i + radius];
      num += w * in[j];
      den += w;
    }
    v[i] = num / den;
  }
  return out;
}

TimeSeriesTable interpolate_gaps(const TimeSeriesTable& table, std::chrono::seconds max_gap) {
  if (max_gap.count() <= 0 || max_gap.count() % table.step() != 0) {
    throw std::invalid_argument("max_gap must be a positive multiple of the step");
  }
  const std::size_t max_samples = static_cast<std::size_t>(max_gap.count() / table.step());
  TimeSeriesTable out = table;
  for (const auto& name : table.channel_names()) {
    auto& v = out.channel(name);
    std::size_t i = 0;
    while (i < v.size()) {
      if (!is_missing(v[i])) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < v.size() && is_missing(v[j])) ++j;
      const std::size_t gap = j - i;
      if (i > 0 && j < v.size() && gap < max_samples) {
        const double left = v[i - 1];
        const double right = v[j];
        for (std::size_t k = i; k < j; ++k) {
          const double t = static_cast<double>(k - i + 1) / static_cast<double>(gap + 1);
          v[k] = left + t * (right - left);
        }
      }
      i = j;
    }
  }
  return out;
}

TimeSeriesTable subsample_15min(const TimeSeriesTable& table) {
  if (table.step() != 60) throw std::invalid_argument("subsample_15min expects a 1-minute table");
  if ((table.start().time_since_epoch().count() % 900) != 0) {
    throw std::invalid_argument("subsample_15min: table must start on a quarter hour");
  }
  const std::size_t blocks = table.length() / 15;
  TimeSeriesTable out(table.start(), 900, blocks);
  for (const auto& name : table.channel_names()) {
    const auto& in = table.channel(name);
    std::vector<double> v(blocks, kMissing);
    for (std::size_t b = 0; b < blocks; ++b) {
      double s = 0.0;
      int n = 0;
      for (std::size_t k = b * 15; k < b * 15 + 15; ++k) {
        if (!is_missing(in[k])) {
          s += in[k];
          ++n;
        }
      }
      if (n > 0) v[b] = s / n;
    }
    out.add_channel(name, std::move(v));
  }
  return out;
}

TimeEncoding encode_time(Timestamp t) {
  const std::int64_t secs = t.time_since_epoch().count();
  if (secs % 900 != 0) throw std::invalid_argument("timestamp is not on the 15-minute grid");
  const sys_days day = floor<days>(t);
  const year_month_day ymd{day};
  const double m = static_cast<unsigned>(ymd.month());
  const double q = static_cast<double>((t - day).count() / 900);
  const double two_pi = 2.0 * std::numbers::pi;
  const unsigned iso = weekday{day}.iso_encoding();  // Monday = 1
  return TimeEncoding{std::sin(two_pi * m / 12.0), std::cos(two_pi * m / 12.0),
                      std::sin(two_pi * q / 96.0), std::cos(two_pi * q / 96.0),
                      static_cast<double>(iso - 1) / 6.0};
}

void Normalizer::add(std::string channel, double min, double max) {
  if (!(max > min)) {
    throw std::invalid_argument("normalizer range for '" + channel + "' is degenerate");
  }
  ranges_[std::move(channel)] = {min, max};
}

bool Normalizer::contains(std::string_view channel) const {
  return ranges_.find(channel) != ranges_.end();
}

const std::pair<double, double>& Normalizer::range(std::string_view channel) const {
  const auto it = ranges_.find(channel);
  if (it == ranges_.end()) {
    throw std::out_of_range("normalizer has no channel '" + std::string(channel) + "'");
  }
  return it->second;
}

double Normalizer::min(std::string_view channel) const { return range(channel).first; }
double Normalizer::max(std::string_view channel) const { return range(channel).second; }

double Normalizer::apply(std::string_view channel, double v) const {
  const auto& [lo, hi] = range(channel);
  return kLo + (kHi - kLo) * (v - lo) / (hi - lo);
}

double Normalizer::invert(std::string_view channel, double v) const {
  const auto& [lo, hi] = range(channel);
  return lo + (v - kLo) * (hi - lo) / (kHi - kLo);
}

double Normalizer::scale(std::string_view channel) const {
  const auto& [lo, hi] = range(channel);
  return (kHi - kLo) / (hi - lo);
}

std::vector<double> Normalizer::apply(std::string_view channel,
                                      std::span<const double> values) const {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = is_missing(values[i]) ? kMissing : apply(channel, values[i]);
  }
  return out;
}

void Normalizer::save(const std::filesystem::path& path) const {
  KeyValueFile kv;
  for (const auto& [name, r] : ranges_) {
    kv.set(name + ".min", r.first);
    kv.set(name + ".max", r.second);
  }
  kv.write(path);
}

Normalizer Normalizer::load(const std::filesystem::path& path) {
  const KeyValueFile kv = KeyValueFile::read(path);
  Normalizer n;
  for (const auto& [key, value] : kv.entries()) {
    if (key.size() > 4 && key.ends_with(".min")) {
      const std::string name = key.substr(0, key.size() - 4);
      n.add(name, kv.get_double(key), kv.get_double(name + ".max"));
    }
  }
  return n;
}

Normalizer fit_normalizer(const TimeSeriesTable& table, std::span<const std::string> channels) {
  Normalizer n;
  for (const auto& name : channels) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (double v : table.channel(name)) {
      if (is_missing(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (!(hi > lo)) {
      throw std::invalid_argument("channel '" + name + "' needs at least two distinct values");
    }
    n.add(name, lo, hi);
  }
  return n;
}

DisaggregationResult disaggregate_power(const DisaggregationInput& input) {
  const std::size_t rooms = input.flows.size();
  if (input.openings.size() != rooms) {
    throw std::invalid_argument("one opening series per room flow is required");
  }
  for (double m : input.flows) {
    if (!(m > 0.0)) throw std::invalid_argument("design mass flows must be positive");
  }
  const std::size_t n = input.total.size();
  for (const auto& u : input.openings) {
    if (u.size() != n) throw std::invalid_argument("opening series length differs from P^tot");
    for (double x : u) {
      if (!is_missing(x) && (x < 0.0 || x > 1.0)) {
        throw std::invalid_argument("valve opening outside [0, 1]");
      }
    }
  }
  DisaggregationResult out;
  out.power.assign(rooms, std::vector<double>(n, 0.0));
  for (std::size_t t = 0; t < n; ++t) {
    const double total = input.total[t];
    bool missing = is_missing(total);
    double den = 0.0;
    for (std::size_t i = 0; i < rooms && !missing; ++i) {
      const double u = input.openings[i][t];
      if (is_missing(u)) {
        missing = true;
        break;
      }
      den += u * input.flows[i];
    }
    if (missing) {
      for (auto& p : out.power) p[t] = kMissing;
      continue;
    }
    if (den == 0.0) {
      if (total != 0.0) {
        ++out.unattributed_rows;
        out.unattributed_power += total;
      }
      continue;
    }
    for (std::size_t i = 0; i < rooms; ++i) {
      out.power[i][t] = input.openings[i][t] * input.flows[i] / den * total;
    }
  }
  return out;
}

std::string channels::valve(std::size_t room) { return "u" + std::to_string(room); }

TimeSeriesTable merge(std::span<const TimeSeriesTable> tables) {
  if (tables.empty()) throw std::invalid_argument("merge: nothing to merge");
  const auto& first = tables.front();
  TimeSeriesTable out(first.start(), first.step(), first.length());
  for (const auto& t : tables) {
    if (t.start() != first.start() || t.step() != first.step() || t.length() != first.length()) {
      throw std::invalid_argument("merge: tables are on different grids");
    }
    for (const auto& name : t.channel_names()) out.add_channel(name, t.channel(name));
  }
  return out;
}

PreprocessResult preprocess(const TimeSeriesTable& raw, const PreprocessConfig& cfg) {
  using namespace channels;
  TimeSeriesTable t = raw;
  const std::size_t rooms = cfg.room_flows.size();
  if (rooms == 0) throw std::invalid_argument("preprocess: room flows are required");
  if (cfg.zone_room < 1 || cfg.zone_room > rooms) {
    throw std::invalid_argument("preprocess: zone room index out of range");
  }

  if (cfg.delete_streaks) {
    t = delete_constant_streaks(t, kIrradiation, cfg.irradiation_streak);
    t = delete_constant_streaks(t, kOutTemp, cfg.outside_streak);
    t = delete_constant_streaks(t, kTotalPower, cfg.power_streak);
  }

  DisaggregationInput d;
  d.total = t.channel(kTotalPower);
  d.flows = cfg.room_flows;
  for (std::size_t i = 1; i <= rooms; ++i) d.openings.push_back(t.channel(valve(i)));
  DisaggregationResult split = disaggregate_power(d);

  TimeSeriesTable clean(t.start(), t.step(), t.length());
  clean.add_channel(std::string(kZoneTemp), t.channel(kZoneTemp));
  clean.add_channel(std::string(kNeighTemp), t.channel(kNeighTemp));
  clean.add_channel(std::string(kOutTemp), t.channel(kOutTemp));
  clean.add_channel(std::string(kIrradiation), t.channel(kIrradiation));
  clean.add_channel(std::string(kZonePower), split.power[cfg.zone_room - 1]);

  if (cfg.clip) clean = clip_nonnegative(clean, kIrradiation);
  if (cfg.smooth) {
    clean = gaussian_smooth(clean, kIrradiation, cfg.sigma_irradiation);
    clean = gaussian_smooth(clean, kOutTemp, cfg.sigma_outside);
    clean = gaussian_smooth(clean, kZonePower, cfg.sigma_power);
    clean = gaussian_smooth(clean, kZoneTemp, cfg.sigma_zone);
    clean = gaussian_smooth(clean, kNeighTemp, cfg.sigma_zone);
  }
  if (cfg.interpolate) clean = interpolate_gaps(clean, cfg.max_gap);

  PreprocessResult out;
  out.model_15min = subsample_15min(clean);
  out.clean_1min = std::move(clean);
  out.disaggregation = std::move(split);
  return out;
}

}  // namespace thermoseed::ts

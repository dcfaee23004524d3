#pragma once
// Time-series data model, CSV ingestion and the measurement preprocessing
// pipeline (fault deletion, clipping, smoothing, gap interpolation,
// 15-minute subsampling, power disaggregation, time encoding, scaling).
//
// Missing values are stored as quiet NaN. All operations are pure: they take
// a table by const reference and return a new one.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace thermoseed::ts {

using Timestamp = std::chrono::sys_seconds;

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) { return std::isnan(v); }

// ISO-8601 UTC, "YYYY-MM-DDTHH:MM:SSZ" (the trailing Z is optional on input).
std::string format_timestamp(Timestamp t);
Timestamp parse_timestamp(std::string_view text);

class TimeSeriesTable {
 public:
  TimeSeriesTable() = default;
  // step_seconds must divide 60 or be a multiple of 60.
  TimeSeriesTable(Timestamp start, std::int64_t step_seconds, std::size_t length);

  Timestamp start() const { return start_; }
  std::int64_t step() const { return step_; }
  std::size_t length() const { return length_; }
  Timestamp timestamp(std::size_t row) const {
    return start_ + std::chrono::seconds(step_ * static_cast<std::int64_t>(row));
  }

  // Throws std::invalid_argument on duplicate name or wrong length.
  void add_channel(std::string name, std::vector<double> values);
  bool has_channel(std::string_view name) const;
  // Throws std::out_of_range for an unknown channel.
  const std::vector<double>& channel(std::string_view name) const;
  std::vector<double>& channel(std::string_view name);
  std::optional<double> at(std::string_view name, std::size_t row) const;
  const std::vector<std::string>& channel_names() const { return names_; }
  std::size_t missing_count(std::string_view name) const;

 private:
  std::size_t index_of(std::string_view name) const;

  Timestamp start_{};
  std::int64_t step_ = 60;
  std::size_t length_ = 0;
  std::vector<std::string> names_;
  std::vector<std::vector<double>> columns_;
};

// Raised for malformed CSV input. row() is the 1-based data row (header is 0).
class CsvError : public std::runtime_error {
 public:
  CsvError(std::size_t row, const std::string& what);
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

// Header must be `timestamp` followed by exactly the schema channels (any
// order). Timestamps must be strictly increasing on the step grid; skipped
// grid points become all-missing rows.
TimeSeriesTable load_csv(const std::filesystem::path& path, std::span<const std::string> schema,
                         std::int64_t step_seconds);
void write_csv(const TimeSeriesTable& table, const std::filesystem::path& path);

// Runs of identical consecutive values whose duration (samples x step)
// strictly exceeds max_streak become missing.
TimeSeriesTable delete_constant_streaks(const TimeSeriesTable& table, std::string_view channel,
                                        std::chrono::seconds max_streak);

TimeSeriesTable clip_nonnegative(const TimeSeriesTable& table, std::string_view channel);

// Discrete Gaussian with support +/- ceil(4 sigma) samples. Weights are
// renormalized over the observed neighbours, so edges and gaps are handled
// without bias towards zero. Missing samples stay missing.
std::vector<double> gaussian_kernel(double sigma);
TimeSeriesTable gaussian_smooth(const TimeSeriesTable& table, std::string_view channel,
                                double sigma);

// Linear interpolation of interior missing runs shorter than max_gap, on
// every channel. Runs touching either end are left alone.
TimeSeriesTable interpolate_gaps(const TimeSeriesTable& table,
                                 std::chrono::seconds max_gap = std::chrono::minutes(30));

// 1-minute to 15-minute block means, ignoring missing values. Trailing
// samples that do not fill a block are dropped.
TimeSeriesTable subsample_15min(const TimeSeriesTable& table);

struct TimeEncoding {
  double month_sin;
  double month_cos;
  double tod_sin;
  double tod_cos;
  double weekday;  // Monday 0 ... Sunday 1, in steps of 1/6
};

// Throws std::invalid_argument when t is not on the 15-minute grid.
TimeEncoding encode_time(Timestamp t);

// Min-max scaling to [0.1, 0.9].
class Normalizer {
 public:
  static constexpr double kLo = 0.1;
  static constexpr double kHi = 0.9;

  // Throws std::invalid_argument unless max > min.
  void add(std::string channel, double min, double max);
  bool contains(std::string_view channel) const;
  double min(std::string_view channel) const;
  double max(std::string_view channel) const;

  double apply(std::string_view channel, double v) const;
  double invert(std::string_view channel, double v) const;
  // Normalized units per physical unit, i.e. (kHi - kLo) / (max - min).
  double scale(std::string_view channel) const;
  std::vector<double> apply(std::string_view channel, std::span<const double> values) const;

  // `channel.min value` / `channel.max value`, 17 significant digits.
  void save(const std::filesystem::path& path) const;
  static Normalizer load(const std::filesystem::path& path);
  const std::map<std::string, std::pair<double, double>, std::less<>>& ranges() const {
    return ranges_;
  }

 private:
  const std::pair<double, double>& range(std::string_view channel) const;
  std::map<std::string, std::pair<double, double>, std::less<>> ranges_;
};

// Per-channel range from the observed values of each listed channel.
// Throws std::invalid_argument on a channel with fewer than 2 distinct values.
Normalizer fit_normalizer(const TimeSeriesTable& table, std::span<const std::string> channels);

struct DisaggregationInput {
  std::vector<double> total;                   // P^tot per row, W
  std::vector<std::vector<double>> openings;   // per room, per row, in [0, 1]
  std::vector<double> flows;                   // design mass flow per room, kg/s
};

struct DisaggregationResult {
  std::vector<std::vector<double>> power;  // per room, per row
  std::size_t unattributed_rows = 0;       // rows with P^tot != 0 but no open valve
  double unattributed_power = 0.0;         // sum of P^tot over those rows
};

// P^i = u^i m^i / sum_k(u^k m^k) * P^tot. Rows with a zero denominator give
// zero power for every room. Missing inputs produce missing outputs.
DisaggregationResult disaggregate_power(const DisaggregationInput& input);

// Channel names used throughout the pipeline.
namespace channels {
inline constexpr std::string_view kZoneTemp = "T";
inline constexpr std::string_view kNeighTemp = "T_neigh";
inline constexpr std::string_view kOutTemp = "T_out";
inline constexpr std::string_view kIrradiation = "I";
inline constexpr std::string_view kTotalPower = "P_tot";
inline constexpr std::string_view kZonePower = "Q_heat";
std::string valve(std::size_t room);  // "u1", "u2", ...
}  // namespace channels

struct PreprocessConfig {
  bool delete_streaks = true;
  bool clip = true;
  bool smooth = true;
  bool interpolate = true;
  std::chrono::seconds irradiation_streak = std::chrono::hours(20);
  std::chrono::seconds outside_streak = std::chrono::minutes(30);
  std::chrono::seconds power_streak = std::chrono::hours(24);
  double sigma_irradiation = 2.0;
  double sigma_outside = 2.0;
  double sigma_power = 1.0;
  double sigma_zone = 5.0;
  std::chrono::seconds max_gap = std::chrono::minutes(30);
  std::size_t zone_room = 1;        // which valve column belongs to the modelled zone
  std::vector<double> room_flows;   // design mass flows, one per valve column
};

struct PreprocessResult {
  TimeSeriesTable clean_1min;   // T, T_neigh, T_out, I, Q_heat at 1 minute
  TimeSeriesTable model_15min;  // same channels at 15 minutes
  DisaggregationResult disaggregation;
};

// Merges channel-disjoint tables on an identical grid.
TimeSeriesTable merge(std::span<const TimeSeriesTable> tables);

// deletion -> clipping -> smoothing -> interpolation -> subsampling.
PreprocessResult preprocess(const TimeSeriesTable& raw, const PreprocessConfig& cfg);

}  // namespace thermoseed::ts

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "thermoseed/timeseries.hpp"

namespace ts = thermoseed::ts;
using namespace std::chrono_literals;

namespace {

const ts::Timestamp kStart = ts::parse_timestamp("2023-01-02T00:00:00Z");

ts::TimeSeriesTable single(std::vector<double> v, std::int64_t step = 60, std::string name = "x") {
  ts::TimeSeriesTable t(kStart, step, v.size());
  t.add_channel(std::move(name), std::move(v));
  return t;
}

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "thermoseed_ts_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

void write_text(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST(Timestamp, RoundTrip) {
  const auto t = ts::parse_timestamp("2023-03-05T06:15:00Z");
  EXPECT_EQ(ts::format_timestamp(t), "2023-03-05T06:15:00Z");
  EXPECT_EQ(ts::parse_timestamp("2023-03-05T06:15:00"), t);
  EXPECT_THROW(ts::parse_timestamp("yesterday"), std::invalid_argument);
}

TEST(Table, InvariantsEnforced) {
  ts::TimeSeriesTable t(kStart, 60, 3);
  t.add_channel("a", {1, 2, 3});
  EXPECT_THROW(t.add_channel("a", {1, 2, 3}), std::invalid_argument);
  EXPECT_THROW(t.add_channel("b", {1, 2}), std::invalid_argument);
  EXPECT_THROW(ts::TimeSeriesTable(kStart, 7 * 60 + 1, 3), std::invalid_argument);
  EXPECT_THROW(t.channel("nope"), std::out_of_range);
  EXPECT_NO_THROW(ts::TimeSeriesTable(kStart, 15, 3));
  EXPECT_NO_THROW(ts::TimeSeriesTable(kStart, 900, 3));
}

TEST(LoadCsv, EmptyCellBecomesMissing) {
  const auto p = temp_file("three.csv");
  write_text(p, "timestamp,a,b\n2023-01-02T00:00:00Z,1,2\n2023-01-02T00:01:00Z,,4\n2023-01-02T00:02:00Z,5,6\n");
  const std::vector<std::string> schema{"a", "b"};
  const auto t = ts::load_csv(p, schema, 60);
  EXPECT_EQ(t.length(), 3u);
  EXPECT_EQ(t.missing_count("a") + t.missing_count("b"), 1u);
  EXPECT_TRUE(ts::is_missing(t.channel("a")[1]));
  EXPECT_EQ(t.channel("b")[2], 6.0);
}

TEST(LoadCsv, DecreasingTimestampReportsRow) {
  const auto p = temp_file("decreasing.csv");
  write_text(p, "timestamp,a\n2023-01-02T00:02:00Z,1\n2023-01-02T00:03:00Z,2\n2023-01-02T00:01:00Z,3\n");
  const std::vector<std::string> schema{"a"};
  try {
    ts::load_csv(p, schema, 60);
    FAIL() << "expected CsvError";
  } catch (const ts::CsvError& e) {
    EXPECT_EQ(e.row(), 3u);
  }
}

TEST(LoadCsv, DuplicateAndMalformedRowsRejected) {
  const std::vector<std::string> schema{"a"};
  const auto dup = temp_file("dup.csv");
  write_text(dup, "timestamp,a\n2023-01-02T00:00:00Z,1\n2023-01-02T00:00:00Z,2\n");
  EXPECT_THROW(ts::load_csv(dup, schema, 60), ts::CsvError);
  const auto bad = temp_file("bad.csv");
  write_text(bad, "timestamp,a\n2023-01-02T00:00:00Z,abc\n");
  EXPECT_THROW(ts::load_csv(bad, schema, 60), ts::CsvError);
  const auto off = temp_file("offgrid.csv");
  write_text(off, "timestamp,a\n2023-01-02T00:00:00Z,1\n2023-01-02T00:00:30Z,2\n");
  EXPECT_THROW(ts::load_csv(off, schema, 60), ts::CsvError);
  const auto hdr = temp_file("header.csv");
  write_text(hdr, "timestamp,b\n2023-01-02T00:00:00Z,1\n");
  EXPECT_THROW(ts::load_csv(hdr, schema, 60), ts::CsvError);
}

TEST(LoadCsv, DayOfMinutesRoundTrip) {
  std::vector<double> v(1440);
  std::iota(v.begin(), v.end(), 0.5);
  v[17] = ts::kMissing;
  const auto p = temp_file("day.csv");
  ts::write_csv(single(v), p);
  std::size_t lines = 0;
  {
    std::ifstream in(p);
    std::string line;
    while (std::getline(in, line)) ++lines;
  }
  const std::vector<std::string> schema{"x"};
  const auto t = ts::load_csv(p, schema, 60);
  EXPECT_EQ(lines - 1, 1440u);
  EXPECT_EQ(t.length(), 1440u);
  EXPECT_EQ(t.step(), 60);
  EXPECT_EQ(t.missing_count("x"), 1u);
  EXPECT_EQ(t.channel("x")[1439], 1439.5);
}

TEST(Streaks, IrradiationLongerThanTwentyHoursDeleted) {
  std::vector<double> v(30 * 60, 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = (i >= 60 && i < 60 + 21 * 60) ? 7.0 : std::sin(0.01 * i);
  const auto out = ts::delete_constant_streaks(single(v), "x", 20h);
  for (std::size_t i = 60; i < 60 + 21 * 60; ++i) ASSERT_TRUE(ts::is_missing(out.channel("x")[i]));
  EXPECT_EQ(out.missing_count("x"), 21u * 60u);
}

TEST(Streaks, ExactlyThirtyMinutesKept) {
  std::vector<double> v(100);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  for (std::size_t i = 20; i < 50; ++i) v[i] = 3.0;
  const auto out = ts::delete_constant_streaks(single(v), "x", 30min);
  EXPECT_EQ(out.missing_count("x"), 0u);
  v[50] = 3.0;  // 31 minutes
  EXPECT_EQ(ts::delete_constant_streaks(single(v), "x", 30min).missing_count("x"), 31u);
}

TEST(Streaks, OneDayPowerThreshold) {
  std::vector<double> day(1440 + 1, 500.0);
  day.back() = 0.0;
  EXPECT_EQ(ts::delete_constant_streaks(single(day), "x", 24h).missing_count("x"), 0u);
  day.back() = 500.0;
  EXPECT_EQ(ts::delete_constant_streaks(single(day), "x", 24h).missing_count("x"), 1441u);
}

TEST(Streaks, AlternatingUnchangedAndIdempotent) {
  std::vector<double> alt(200);
  for (std::size_t i = 0; i < alt.size(); ++i) alt[i] = i % 2 ? 1.0 : 2.0;
  EXPECT_EQ(ts::delete_constant_streaks(single(alt), "x", 1min).missing_count("x"), 0u);

  std::mt19937_64 rng(1);
  std::vector<double> v(2000);
  for (auto& x : v) x = static_cast<double>(rng() % 2);
  for (std::size_t i = 300; i < 400; ++i) v[i] = 5.0;
  const auto once = ts::delete_constant_streaks(single(v), "x", 3min);
  const auto twice = ts::delete_constant_streaks(once, "x", 3min);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double a = once.channel("x")[i], b = twice.channel("x")[i];
    EXPECT_TRUE((ts::is_missing(a) && ts::is_missing(b)) || a == b) << i;
  }
  EXPECT_THROW(ts::delete_constant_streaks(single(v), "x", 90s), std::invalid_argument);
  EXPECT_THROW(ts::delete_constant_streaks(single(v), "nope", 3min), std::out_of_range);
}

TEST(Clip, Behaviour) {
  const auto out = ts::clip_nonnegative(single({-1.0, 0.0, 2.0, ts::kMissing}), "x");
  EXPECT_EQ(out.channel("x")[0], 0.0);
  EXPECT_EQ(out.channel("x")[1], 0.0);
  EXPECT_EQ(out.channel("x")[2], 2.0);
  EXPECT_TRUE(ts::is_missing(out.channel("x")[3]));
  const auto pos = ts::clip_nonnegative(single({1.0, 2.0}), "x");
  EXPECT_EQ(pos.channel("x"), (std::vector<double>{1.0, 2.0}));
  EXPECT_THROW(ts::clip_nonnegative(single({1.0}), "y"), std::out_of_range);
}

TEST(Smooth, ConstantStaysConstant) {
  const auto out = ts::gaussian_smooth(single(std::vector<double>(50, 3.25)), "x", 5.0);
  for (double v : out.channel("x")) EXPECT_NEAR(v, 3.25, 1e-14);
}

TEST(Smooth, ImpulseCentreWeight) {
  std::vector<double> v(41, 0.0);
  v[20] = 1.0;
  const auto out = ts::gaussian_smooth(single(v), "x", 2.0);
  double norm = 0.0;
  for (int j = -8; j <= 8; ++j) norm += std::exp(-j * j / 8.0);
  EXPECT_NEAR(out.channel("x")[20], 1.0 / norm, 1e-15);
  EXPECT_NEAR(out.channel("x")[21], std::exp(-1.0 / 8.0) / norm, 1e-15);
  EXPECT_EQ(out.channel("x")[29], 0.0);
  const auto k = ts::gaussian_kernel(2.0);
  EXPECT_EQ(k.size(), 17u);
}

TEST(Smooth, MissingRunPreserved) {
  std::vector<double> v(60);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::cos(0.2 * i);
  for (std::size_t i = 25; i < 31; ++i) v[i] = ts::kMissing;
  const auto out = ts::gaussian_smooth(single(v), "x", 2.0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_EQ(ts::is_missing(out.channel("x")[i]), i >= 25 && i < 31) << i;
  }
  EXPECT_THROW(ts::gaussian_smooth(single(v), "x", 0.0), std::invalid_argument);
}

TEST(Smooth, InteriorMeanPreserved) {
  // A series that is zero in a margin of 4 sigma around its ends keeps its sum.
  std::mt19937_64 rng(2);
  std::vector<double> v(400, 0.0);
  for (std::size_t i = 40; i < 360; ++i) v[i] = std::uniform_real_distribution<double>(0, 10)(rng);
  const auto out = ts::gaussian_smooth(single(v), "x", 5.0);
  const double a = std::accumulate(v.begin(), v.end(), 0.0);
  const double b = std::accumulate(out.channel("x").begin(), out.channel("x").end(), 0.0);
  EXPECT_NEAR(b, a, 1e-9 * a);
}

TEST(Interpolate, Midpoint) {
  const auto out = ts::interpolate_gaps(single({10.0, ts::kMissing, 12.0}));
  EXPECT_DOUBLE_EQ(out.channel("x")[1], 11.0);
}

TEST(Interpolate, StrictlyLessThanThirtyMinutes) {
  std::vector<double> v(40, 1.0);
  for (std::size_t i = 5; i < 35; ++i) v[i] = ts::kMissing;  // 30 minutes
  EXPECT_EQ(ts::interpolate_gaps(single(v)).missing_count("x"), 30u);
  v[34] = 1.0;  // 29 minutes
  EXPECT_EQ(ts::interpolate_gaps(single(v)).missing_count("x"), 0u);
}

TEST(Interpolate, BoundaryRunsUntouched) {
  const auto out = ts::interpolate_gaps(single({ts::kMissing, ts::kMissing, 3.0, 4.0, ts::kMissing}));
  EXPECT_EQ(out.missing_count("x"), 3u);
}

TEST(Subsample, BlockMeans) {
  EXPECT_EQ(ts::subsample_15min(single(std::vector<double>(15, 1.0))).channel("x"),
            (std::vector<double>{1.0}));
  std::vector<double> v(15);
  std::iota(v.begin(), v.end(), 1.0);
  EXPECT_DOUBLE_EQ(ts::subsample_15min(single(v)).channel("x")[0], 8.0);
  const auto miss = ts::subsample_15min(single(std::vector<double>(15, ts::kMissing)));
  EXPECT_TRUE(ts::is_missing(miss.channel("x")[0]));
  std::vector<double> partial(34, 2.0);
  partial[3] = ts::kMissing;
  partial[4] = 17.0;
  const auto p = ts::subsample_15min(single(partial));
  EXPECT_EQ(p.length(), 2u);
  EXPECT_EQ(p.step(), 900);
  EXPECT_DOUBLE_EQ(p.channel("x")[0], (13 * 2.0 + 17.0) / 14.0);
  EXPECT_THROW(ts::subsample_15min(single(v, 900)), std::invalid_argument);
}

TEST(TimeEncoding, Examples) {
  const auto dec = ts::encode_time(ts::parse_timestamp("2023-12-04T00:00:00Z"));
  EXPECT_NEAR(dec.month_sin, 0.0, 1e-15);
  EXPECT_NEAR(dec.month_cos, 1.0, 1e-15);
  const auto mar = ts::encode_time(ts::parse_timestamp("2023-03-06T06:00:00Z"));
  EXPECT_NEAR(mar.month_sin, 1.0, 1e-15);
  EXPECT_NEAR(mar.month_cos, 0.0, 1e-15);
  EXPECT_NEAR(mar.tod_sin, 1.0, 1e-15);
  EXPECT_NEAR(mar.tod_cos, 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(mar.weekday, 0.0);  // Monday
  const auto sun = ts::encode_time(ts::parse_timestamp("2023-03-12T00:00:00Z"));
  EXPECT_DOUBLE_EQ(sun.weekday, 1.0);
  EXPECT_THROW(ts::encode_time(ts::parse_timestamp("2023-03-06T06:05:00Z")), std::invalid_argument);
}

TEST(TimeEncoding, UnitCircle) {
  ts::Timestamp t = ts::parse_timestamp("2023-01-01T00:00:00Z");
  for (int k = 0; k < 2000; ++k, t += std::chrono::minutes(15 * 37)) {
    const auto e = ts::encode_time(t);
    EXPECT_NEAR(e.month_sin * e.month_sin + e.month_cos * e.month_cos, 1.0, 1e-12);
    EXPECT_NEAR(e.tod_sin * e.tod_sin + e.tod_cos * e.tod_cos, 1.0, 1e-12);
    EXPECT_GE(e.weekday, 0.0);
    EXPECT_LE(e.weekday, 1.0);
  }
}

TEST(Normalizer, RangeAndRoundTrip) {
  const auto table = single({5.0, -3.0, 1.0, ts::kMissing, 13.0});
  const std::vector<std::string> ch{"x"};
  const auto n = ts::fit_normalizer(table, ch);
  EXPECT_DOUBLE_EQ(n.apply("x", -3.0), 0.1);
  EXPECT_DOUBLE_EQ(n.apply("x", 13.0), 0.9);
  EXPECT_DOUBLE_EQ(n.apply("x", 5.0), 0.5);
  EXPECT_DOUBLE_EQ(n.scale("x"), 0.8 / 16.0);
  std::mt19937_64 rng(3);
  for (int k = 0; k < 1000; ++k) {
    const double v = std::uniform_real_distribution<double>(-3.0, 13.0)(rng);
    EXPECT_NEAR(n.invert("x", n.apply("x", v)), v, 1e-12 * std::max(1.0, std::abs(v)));
  }
  EXPECT_THROW(ts::fit_normalizer(single({2.0, 2.0, ts::kMissing}), ch), std::invalid_argument);
  ts::Normalizer bad;
  EXPECT_THROW(bad.add("y", 1.0, 1.0), std::invalid_argument);
}

TEST(Normalizer, FilePersistence) {
  ts::Normalizer n;
  n.add("T", 0.1 + 1.0 / 3.0, 25.0 / 7.0 + 20.0);
  n.add("I", 0.0, 873.25);
  const auto p = temp_file("norm.cfg");
  n.save(p);
  const auto m = ts::Normalizer::load(p);
  EXPECT_EQ(m.min("T"), n.min("T"));
  EXPECT_EQ(m.max("T"), n.max("T"));
  EXPECT_EQ(m.max("I"), 873.25);
}

TEST(Disaggregation, Examples) {
  ts::DisaggregationInput eq;
  eq.total = {1000.0};
  eq.flows = {1, 1, 1, 1, 1};
  eq.openings.assign(5, {0.6});
  for (const auto& p : ts::disaggregate_power(eq).power) EXPECT_DOUBLE_EQ(p[0], 200.0);

  ts::DisaggregationInput one = eq;
  one.openings = {{1.0}, {0.0}, {0.0}, {0.0}, {0.0}};
  const auto r1 = ts::disaggregate_power(one);
  EXPECT_DOUBLE_EQ(r1.power[0][0], 1000.0);
  EXPECT_DOUBLE_EQ(r1.power[1][0], 0.0);

  ts::DisaggregationInput hand;
  hand.total = {300.0};
  hand.flows = {2, 4, 1, 1, 1};
  hand.openings = {{0.5}, {0.25}, {0.0}, {0.0}, {0.0}};
  const auto r2 = ts::disaggregate_power(hand);
  const double want[] = {150, 150, 0, 0, 0};
  for (int i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(r2.power[i][0], want[i]);
}

TEST(Disaggregation, ConservationAndClosedValves) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  ts::DisaggregationInput in;
  in.flows = {0.2, 0.15, 0.3, 0.1, 0.1};
  const std::size_t n = 500;
  in.openings.assign(5, std::vector<double>(n));
  for (std::size_t k = 0; k < n; ++k) {
    in.total.push_back(2000.0 * u01(rng));
    for (auto& o : in.openings) o[k] = u01(rng) < 0.3 ? 0.0 : u01(rng);
  }
  for (auto& o : in.openings) o[7] = 0.0;
  const auto r = ts::disaggregate_power(in);
  for (std::size_t k = 0; k < n; ++k) {
    double s = 0.0;
    for (const auto& p : r.power) s += p[k];
    if (k == 7) {
      EXPECT_EQ(s, 0.0);
    } else {
      EXPECT_NEAR(s, in.total[k], 1e-12 * in.total[k]);
    }
  }
  EXPECT_EQ(r.unattributed_rows, 1u);
  EXPECT_DOUBLE_EQ(r.unattributed_power, in.total[7]);

  auto bad = in;
  bad.flows[1] = -1.0;
  EXPECT_THROW(ts::disaggregate_power(bad), std::invalid_argument);
  bad = in;
  bad.openings[2][3] = 1.5;
  EXPECT_THROW(ts::disaggregate_power(bad), std::invalid_argument);
}

TEST(Preprocess, OrderAndOutputs) {
  using namespace ts::channels;
  const std::size_t n = 3 * 1440;
  ts::TimeSeriesTable raw(kStart, 60, n);
  std::vector<double> t(n), tn(n), to(n), irr(n), p(n), u1(n), u2(n);
  for (std::size_t k = 0; k < n; ++k) {
    t[k] = 21.0 + std::sin(k * 0.003);
    tn[k] = 20.0 + std::cos(k * 0.002);
    to[k] = 5.0 + 3.0 * std::sin(k * 0.004);
    irr[k] = std::max(-5.0, 300.0 * std::sin(k * 0.0043));
    p[k] = (k / 60) % 3 == 1 ? 900.0 : 0.0;
    u1[k] = p[k] > 0 ? 1.0 : 0.0;
    u2[k] = p[k] > 0 ? 0.5 : 0.0;
  }
  for (std::size_t k = 100; k < 100 + 21 * 60; ++k) irr[k] = 12.0;
  raw.add_channel(std::string(kZoneTemp), t);
  raw.add_channel(std::string(kNeighTemp), tn);
  raw.add_channel(std::string(kOutTemp), to);
  raw.add_channel(std::string(kIrradiation), irr);
  raw.add_channel(std::string(kTotalPower), p);
  raw.add_channel(valve(1), u1);
  raw.add_channel(valve(2), u2);
  ts::PreprocessConfig cfg;
  cfg.room_flows = {0.2, 0.2};
  const auto r = ts::preprocess(raw, cfg);
  EXPECT_EQ(r.model_15min.length(), n / 15);
  EXPECT_EQ(r.model_15min.step(), 900);
  // The 21 h streak is longer than any interpolable gap.
  EXPECT_GE(r.clean_1min.missing_count(kIrradiation), 21u * 60u);
  for (double v : r.clean_1min.channel(kIrradiation)) {
    if (!ts::is_missing(v)) EXPECT_GE(v, 0.0);
  }
  // Zone share is 2/3 of the total before smoothing, so block sums match.
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  const auto& q = r.clean_1min.channel(kZonePower);
  EXPECT_NEAR(std::accumulate(q.begin(), q.end(), 0.0), total * 2.0 / 3.0, 1e-6 * total);
}

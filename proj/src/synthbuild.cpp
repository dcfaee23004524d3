#include "thermoseed/synthbuild.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace thermoseed::synth {

using namespace std::chrono;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

bool occupied(ts::Timestamp t) {
  const sys_days day = floor<days>(t);
  const double hour = static_cast<double>((t - day).count()) / 3600.0;
  const unsigned iso = weekday{day}.iso_encoding();
  if (iso >= 6) return hour >= 8.0 && hour < 23.0;
  return (hour >= 6.5 && hour < 8.5) || (hour >= 17.0 && hour < 23.0);
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += format_double(v[i]);
  }
  return s;
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

}  // namespace

bool BuildingScenario::heating_season(ts::Timestamp t) const {
  const year_month_day ymd{floor<days>(t)};
  const int m = static_cast<int>(static_cast<unsigned>(ymd.month()));
  return std::find(heating_months.begin(), heating_months.end(), m) != heating_months.end();
}

void validate(const BuildingScenario& s) {
  const auto& p = s.truth;
  if (!(p.a > 0.0 && p.b > 0.0 && p.c > 0.0 && p.e1 > 0.0) && s.thermostat) {
    throw std::invalid_argument("scenario: RC parameters must be positive under thermostat control");
  }
  if (p.a < 0.0 || p.b < 0.0 || p.c < 0.0 || p.e1 < 0.0) {
    throw std::invalid_argument("scenario: RC parameters must be non-negative");
  }
  if (!(1.0 - p.b - p.c > 0.0)) throw std::invalid_argument("scenario: need 1 - b - c > 0");
  if (s.noise < 0.0) throw std::invalid_argument("scenario: noise must be non-negative");
  if (s.duration_days <= 0) throw std::invalid_argument("scenario: duration must be positive");
  if (s.room_flows.empty()) throw std::invalid_argument("scenario: need at least one room");
  for (double m : s.room_flows) {
    if (!(m > 0.0)) throw std::invalid_argument("scenario: room flows must be positive");
  }
  if (!s.power_schedule.empty() && s.power_schedule.size() < s.minutes()) {
    throw std::invalid_argument("scenario: power schedule shorter than the simulation");
  }
  if (s.start.time_since_epoch().count() % 900 != 0) {
    throw std::invalid_argument("scenario: start must be on a quarter hour");
  }
}

KeyValueFile scenario_to_kv(const BuildingScenario& s) {
  KeyValueFile kv;
  kv.set("a", s.truth.a);
  kv.set("b", s.truth.b);
  kv.set("c", s.truth.c);
  kv.set("e1", s.truth.e1);
  kv.set("occupancy_gain", s.occupancy_gain);
  kv.set("solar_nonlinearity", s.solar_nonlinearity);
  kv.set("heat_setpoint", s.heat_setpoint);
  kv.set("cool_setpoint", s.cool_setpoint);
  kv.set("deadband", s.deadband);
  kv.set("heating_power", s.heating_power);
  kv.set("cooling_power", s.cooling_power);
  kv.set("heating_months", join_ints(s.heating_months));
  kv.set("thermostat", s.thermostat ? "true" : "false");
  kv.set("noise", s.noise);
  kv.set_int("duration_days", s.duration_days);
  kv.set("start", ts::format_timestamp(s.start));
  kv.set("latitude_deg", s.latitude / kDeg);
  kv.set("window_orientation_deg", s.window_orientation / kDeg);
  kv.set("initial_temperature", s.initial_temperature);
  kv.set("initial_neighbor_temperature", s.initial_neighbor_temperature);
  kv.set("outside_mean", s.outside_mean);
  kv.set("outside_seasonal_amplitude", s.outside_seasonal_amplitude);
  kv.set("outside_daily_amplitude", s.outside_daily_amplitude);
  kv.set("weather_std", s.weather_std);
  kv.set("outside_noise", s.outside_noise);
  kv.set("neighbor_outside_coupling", s.neighbor_outside_coupling);
  kv.set("neighbor_setpoint_pull", s.neighbor_setpoint_pull);
  kv.set("clear_sky_irradiance", s.clear_sky_irradiance);
  kv.set("room_flows", join(s.room_flows));
  kv.set("other_room_duty", s.other_room_duty);
  kv.set("fault_rate", s.fault_rate);
  return kv;
}

BuildingScenario scenario_from_kv(const KeyValueFile& kv) {
  BuildingScenario s;
  s.truth.a = kv.get_double("a", s.truth.a);
  s.truth.b = kv.get_double("b", s.truth.b);
  s.truth.c = kv.get_double("c", s.truth.c);
  s.truth.e1 = kv.get_double("e1", s.truth.e1);
  s.occupancy_gain = kv.get_double("occupancy_gain", s.occupancy_gain);
  s.solar_nonlinearity = kv.get_double("solar_nonlinearity", s.solar_nonlinearity);
  s.heat_setpoint = kv.get_double("heat_setpoint", s.heat_setpoint);
  s.cool_setpoint = kv.get_double("cool_setpoint", s.cool_setpoint);
  s.deadband = kv.get_double("deadband", s.deadband);
  s.heating_power = kv.get_double("heating_power", s.heating_power);
  s.cooling_power = kv.get_double("cooling_power", s.cooling_power);
  if (kv.contains("heating_months")) {
    s.heating_months.clear();
    for (double m : kv.get_doubles("heating_months")) s.heating_months.push_back(static_cast<int>(m));
  }
  s.thermostat = kv.get_bool("thermostat", s.thermostat);
  s.noise = kv.get_double("noise", s.noise);
  s.duration_days = static_cast<int>(kv.get_int("duration_days", s.duration_days));
  if (kv.contains("start")) s.start = ts::parse_timestamp(kv.get("start"));
  s.latitude = kv.get_double("latitude_deg", s.latitude / kDeg) * kDeg;
  s.window_orientation = kv.get_double("window_orientation_deg", s.window_orientation / kDeg) * kDeg;
  s.initial_temperature = kv.get_double("initial_temperature", s.initial_temperature);
  s.initial_neighbor_temperature =
      kv.get_double("initial_neighbor_temperature", s.initial_neighbor_temperature);
  s.outside_mean = kv.get_double("outside_mean", s.outside_mean);
  s.outside_seasonal_amplitude =
      kv.get_double("outside_seasonal_amplitude", s.outside_seasonal_amplitude);
  s.outside_daily_amplitude = kv.get_double("outside_daily_amplitude", s.outside_daily_amplitude);
  s.weather_std = kv.get_double("weather_std", s.weather_std);
  s.outside_noise = kv.get_double("outside_noise", s.outside_noise);
  s.neighbor_outside_coupling =
      kv.get_double("neighbor_outside_coupling", s.neighbor_outside_coupling);
  s.neighbor_setpoint_pull = kv.get_double("neighbor_setpoint_pull", s.neighbor_setpoint_pull);
  s.clear_sky_irradiance = kv.get_double("clear_sky_irradiance", s.clear_sky_irradiance);
  if (kv.contains("room_flows")) s.room_flows = kv.get_doubles("room_flows");
  s.other_room_duty = kv.get_double("other_room_duty", s.other_room_duty);
  s.fault_rate = kv.get_double("fault_rate", s.fault_rate);
  validate(s);
  return s;
}

BuildingScenario load_scenario(const std::filesystem::path& path) {
  return scenario_from_kv(KeyValueFile::read(path));
}

Simulation simulate_building(const BuildingScenario& s, std::uint64_t seed) {
  validate(s);
  const std::size_t n = s.minutes();
  const std::size_t rooms = s.room_flows.size();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::vector<double> t_meas(n), t_true(n), t_neigh(n), t_out(n), irr(n), p_tot(n), q(n), q_irr(n),
      gain(n);
  std::vector<std::vector<double>> valves(rooms, std::vector<double>(n, 0.0));

  // Slow weather anomaly and cloud cover, both AR(1) at minute resolution.
  const double rho_w = std::exp(-1.0 / 2880.0);
  const double rho_c = std::exp(-1.0 / 360.0);
  double weather = s.weather_std * gauss(rng);
  double cloud = 0.0;
  const double cloud_std = 0.3;

  double tz = s.initial_temperature;
  double tn = s.initial_neighbor_temperature;
  bool on = false;
  std::vector<bool> other_on(rooms, false);

  for (std::size_t k = 0; k < n; ++k) {
    const ts::Timestamp t = s.start + minutes(static_cast<long long>(k));
    const bool heating = s.heating_season(t);
    const sys_days day = floor<days>(t);
    const year_month_day ymd{day};
    const sys_days jan1{ymd.year() / January / 1};
    const double doy = static_cast<double>((day - jan1).count());
    const double hour = static_cast<double>((t - day).count()) / 3600.0;

    weather = rho_w * weather + s.weather_std * std::sqrt(1.0 - rho_w * rho_w) * gauss(rng);
    cloud = rho_c * cloud + cloud_std * std::sqrt(1.0 - rho_c * rho_c) * gauss(rng);
    const double tout = s.outside_mean -
                        s.outside_seasonal_amplitude * std::cos(2.0 * std::numbers::pi * (doy - 20.0) / 365.0) -
                        s.outside_daily_amplitude * std::cos(2.0 * std::numbers::pi * (hour - 3.0) / 24.0) +
                        weather;

    const rc::SolarPosition sun = rc::solar_position(t, s.latitude);
    const double clearness = std::clamp(0.7 + cloud, 0.15, 1.0);
    const double horizontal =
        sun.altitude > 0.0 ? s.clear_sky_irradiance * std::pow(std::sin(sun.altitude), 1.15) * clearness
                           : 0.0;
    const double qirr = rc::irradiance_transform({sun.azimuth, sun.altitude, s.window_orientation, horizontal});

    if (k % 15 == 0) {
      if (s.thermostat) {
        if (heating) {
          if (tz < s.heat_setpoint - s.deadband / 2) on = true;
          if (tz > s.heat_setpoint + s.deadband / 2) on = false;
        } else {
          if (tz > s.cool_setpoint + s.deadband / 2) on = true;
          if (tz < s.cool_setpoint - s.deadband / 2) on = false;
        }
      }
      for (std::size_t r = 1; r < rooms; ++r) other_on[r] = unif(rng) < s.other_room_duty;
    }
    double power = 0.0;
    if (!s.power_schedule.empty()) {
      power = s.power_schedule[k];
    } else if (s.thermostat && on) {
      power = heating ? s.heating_power : -s.cooling_power;
    }

    const double nl = s.occupancy_gain * (occupied(t) ? 1.0 : 0.0) +
                      s.solar_nonlinearity * (horizontal / 1000.0) * (horizontal / 1000.0);

    t_true[k] = tz;
    t_meas[k] = tz + s.noise * gauss(rng);
    t_neigh[k] = tn;
    t_out[k] = tout + (s.outside_noise > 0.0 ? s.outside_noise * gauss(rng) : 0.0);
    irr[k] = horizontal;
    q[k] = power;
    q_irr[k] = qirr;
    gain[k] = nl;

    // Valves and the building-level meter. Every open room draws the same
    // power per unit of design flow as the modelled zone.
    const double sign = power != 0.0 ? (power > 0.0 ? 1.0 : -1.0) : (heating ? 1.0 : -1.0);
    const double per_flow = power != 0.0
                                ? std::abs(power) / s.room_flows[0]
                                : (heating ? s.heating_power : s.cooling_power) / s.room_flows[0];
    valves[0][k] = power != 0.0 ? 1.0 : 0.0;
    double flow = valves[0][k] * s.room_flows[0];
    for (std::size_t r = 1; r < rooms; ++r) {
      valves[r][k] = other_on[r] ? 1.0 : 0.0;
      flow += valves[r][k] * s.room_flows[r];
    }
    p_tot[k] = sign * per_flow * flow;

    const double tz_next = rc::rc_step(s.truth, tz, power, tout, tn, qirr) + nl;
    const double tn_target = heating ? s.heat_setpoint : s.cool_setpoint - 1.0;
    tn = tn + s.neighbor_outside_coupling * (tout - tn) + s.neighbor_setpoint_pull * (tn_target - tn);
    tz = tz_next;
  }

  Simulation sim;
  sim.measured = ts::TimeSeriesTable(s.start, 60, n);
  sim.measured.add_channel(std::string(ts::channels::kZoneTemp), std::move(t_meas));
  sim.measured.add_channel(std::string(ts::channels::kNeighTemp), std::move(t_neigh));
  sim.measured.add_channel(std::string(ts::channels::kOutTemp), std::move(t_out));
  sim.measured.add_channel(std::string(ts::channels::kIrradiation), std::move(irr));
  sim.measured.add_channel(std::string(ts::channels::kTotalPower), std::move(p_tot));
  for (std::size_t r = 0; r < rooms; ++r) {
    sim.measured.add_channel(ts::channels::valve(r + 1), std::move(valves[r]));
  }
  sim.t_true = std::move(t_true);
  sim.q_heat = std::move(q);
  sim.q_irr = std::move(q_irr);
  sim.nonlinear_gain = std::move(gain);
  return sim;
}

void inject_faults(ts::TimeSeriesTable& table, double faults_per_day, std::uint64_t seed) {
  if (faults_per_day <= 0.0) return;
  std::mt19937_64 rng(seed ^ 0x5bd1e995u);
  const double days_count = static_cast<double>(table.length()) * table.step() / 86400.0;
  std::poisson_distribution<int> count(faults_per_day * days_count);
  std::uniform_int_distribution<int> kind(0, 2);
  std::uniform_int_distribution<std::size_t> where(0, table.length() - 1);
  std::uniform_int_distribution<int> gap_minutes(5, 120);
  const std::size_t per_minute = static_cast<std::size_t>(60 / table.step());
  const int faults = count(rng);
  for (int f = 0; f < faults; ++f) {
    const std::size_t at = where(rng);
    switch (kind(rng)) {
      case 0: {
        auto& v = table.channel(ts::channels::kIrradiation);
        const std::size_t len = 25 * 60 * per_minute;
        for (std::size_t k = at; k < std::min(v.size(), at + len); ++k) v[k] = v[at];
        break;
      }
      case 1: {
        auto& v = table.channel(ts::channels::kOutTemp);
        const std::size_t len = 45 * per_minute;
        for (std::size_t k = at; k < std::min(v.size(), at + len); ++k) v[k] = v[at];
        break;
      }
      default: {
        auto& v = table.channel(ts::channels::kZoneTemp);
        const std::size_t len = static_cast<std::size_t>(gap_minutes(rng)) * per_minute;
        for (std::size_t k = at; k < std::min(v.size(), at + len); ++k) v[k] = ts::kMissing;
        break;
      }
    }
  }
}

namespace {

ts::TimeSeriesTable select(const ts::TimeSeriesTable& t, const std::vector<std::string>& names) {
  ts::TimeSeriesTable out(t.start(), t.step(), t.length());
  for (const auto& n : names) out.add_channel(n, t.channel(n));
  return out;
}

std::vector<std::string> power_columns(std::size_t rooms) {
  std::vector<std::string> cols{std::string(ts::channels::kTotalPower)};
  for (std::size_t r = 1; r <= rooms; ++r) cols.push_back(ts::channels::valve(r));
  return cols;
}

}  // namespace

void make_dataset(const BuildingScenario& s, std::uint64_t seed, const std::filesystem::path& dir) {
  Simulation sim = simulate_building(s, seed);
  inject_faults(sim.measured, s.fault_rate, seed);
  std::filesystem::create_directories(dir);
  using namespace ts::channels;
  ts::write_csv(select(sim.measured, {std::string(kZoneTemp)}), dir / "zone.csv");
  ts::write_csv(select(sim.measured, {std::string(kNeighTemp)}), dir / "neighbor.csv");
  ts::write_csv(select(sim.measured, {std::string(kOutTemp), std::string(kIrradiation)}),
                dir / "weather.csv");
  ts::write_csv(select(sim.measured, power_columns(s.room_flows.size())), dir / "power.csv");

  ts::TimeSeriesTable truth(sim.measured.start(), 60, sim.measured.length());
  truth.add_channel("T_true", sim.t_true);
  truth.add_channel("Q_heat", sim.q_heat);
  truth.add_channel("Q_irr", sim.q_irr);
  truth.add_channel("gain_nl", sim.nonlinear_gain);
  ts::write_csv(truth, dir / "truth.csv");

  KeyValueFile kv = scenario_to_kv(s);
  kv.set_int("seed", static_cast<long long>(seed));
  kv.write(dir / "scenario.cfg", "thermoseed scenario v1");
}

ts::TimeSeriesTable load_raw_dataset(const std::filesystem::path& dir, std::size_t rooms) {
  using namespace ts::channels;
  const std::vector<std::string> zone{std::string(kZoneTemp)};
  const std::vector<std::string> neigh{std::string(kNeighTemp)};
  const std::vector<std::string> weather{std::string(kOutTemp), std::string(kIrradiation)};
  const std::vector<std::string> power = power_columns(rooms);
  const ts::TimeSeriesTable parts[] = {
      ts::load_csv(dir / "zone.csv", zone, 60),
      ts::load_csv(dir / "neighbor.csv", neigh, 60),
      ts::load_csv(dir / "weather.csv", weather, 60),
      ts::load_csv(dir / "power.csv", power, 60),
  };
  return ts::merge(parts);
}

}  // namespace thermoseed::synth

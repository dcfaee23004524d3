#pragma once
// Synthetic ground-truth building data.
//
// The zone follows the 1-minute RC recursion plus occupancy and quadratic
// solar gains that the linear baseline cannot represent. A seasonal
// thermostat (15-minute decisions) drives heating or cooling. Measurement
// noise is added to the stored zone temperature only.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "thermoseed/kvfile.hpp"
#include "thermoseed/rc.hpp"
#include "thermoseed/timeseries.hpp"

namespace thermoseed::synth {

struct BuildingScenario {
  rc::RcParams truth{8.0e-6, 1.6e-4, 2.0e-4, 1.0e-5};
  double occupancy_gain = 2.0e-3;       // degC per minute while occupied
  double solar_nonlinearity = 4.0e-3;   // degC per minute at I = 1000 W/m^2, times (I/1000)^2
  double heat_setpoint = 21.0;
  double cool_setpoint = 24.0;
  double deadband = 1.0;
  double heating_power = 1500.0;  // W
  double cooling_power = 1500.0;  // W, applied with a negative sign
  std::vector<int> heating_months{1, 2, 3, 10, 11, 12};
  bool thermostat = true;
  // Per-minute override of the zone power (W); replaces the thermostat.
  std::vector<double> power_schedule;
  double noise = 0.05;  // degC, on stored T only
  int duration_days = 180;
  ts::Timestamp start = ts::parse_timestamp("2023-01-01T00:00:00Z");
  double latitude = 47.4 * 3.14159265358979323846 / 180.0;
  double window_orientation = 3.14159265358979323846 / 2.0;  // façade facing south
  double initial_temperature = 21.0;
  double initial_neighbor_temperature = 21.0;
  double outside_mean = 11.0;
  double outside_seasonal_amplitude = 13.0;
  double outside_daily_amplitude = 4.0;
  double weather_std = 2.5;     // stationary std of the slow weather anomaly
  double outside_noise = 0.05;  // sensor noise on T_out
  double neighbor_outside_coupling = 1.0e-4;  // per minute
  double neighbor_setpoint_pull = 2.0e-3;     // per minute
  double clear_sky_irradiance = 900.0;        // W/m^2 at zenith
  std::vector<double> room_flows{0.20, 0.15, 0.30, 0.10, 0.10};  // kg/s, room 1 is the zone
  double other_room_duty = 0.4;
  double fault_rate = 0.0;  // expected injected faults per simulated day

  bool heating_season(ts::Timestamp t) const;
  std::size_t minutes() const { return static_cast<std::size_t>(duration_days) * 1440; }
};

// Throws std::invalid_argument when a validity condition fails.
void validate(const BuildingScenario& s);

BuildingScenario load_scenario(const std::filesystem::path& path);
KeyValueFile scenario_to_kv(const BuildingScenario& s);
BuildingScenario scenario_from_kv(const KeyValueFile& kv);

struct Simulation {
  // Measured channels: T, T_neigh, T_out, I, P_tot, u1..uN.
  ts::TimeSeriesTable measured;
  // Latent truth on the same grid.
  std::vector<double> t_true;
  std::vector<double> q_heat;
  std::vector<double> q_irr;
  std::vector<double> nonlinear_gain;  // degC per minute injected outside the RC terms
};

Simulation simulate_building(const BuildingScenario& s, std::uint64_t seed);

// Frozen-value streaks and dropped cells, placed at random:
//   irradiation frozen for 25 h, outside temperature frozen for 45 min,
//   zone temperature missing for 5..120 min.
void inject_faults(ts::TimeSeriesTable& table, double faults_per_day, std::uint64_t seed);

// Writes zone.csv, neighbor.csv, weather.csv, power.csv, truth.csv and
// scenario.cfg into dir.
void make_dataset(const BuildingScenario& s, std::uint64_t seed, const std::filesystem::path& dir);

// Reads the four measurement files back into one table.
ts::TimeSeriesTable load_raw_dataset(const std::filesystem::path& dir, std::size_t rooms);

}  // namespace thermoseed::synth

#pragma once
// One-state RC baseline at a 1-minute sampling time:
//
//   T[k+1] = T[k] + a Q_heat[k] - b (T[k] - T_out[k]) - c (T[k] - T_neigh[k]) + e1 Q_irr[k]
//
// a, b, c and e1 lump the capacitance, the two wall resistances and the
// window permissivity; they are not represented separately.

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include "thermoseed/timeseries.hpp"

namespace thermoseed::rc {

struct RcParams {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double e1 = 0.0;
};

// Diagnostic only: a, b, c, e1 > 0.
bool physically_plausible(const RcParams& p);
// 1 - b - c in (0, 1].
bool decay_is_meaningful(const RcParams& p);

void save(const RcParams& p, const std::filesystem::path& path, double condition_number = 0.0);
RcParams load(const std::filesystem::path& path);

struct SolarPosition {
  double azimuth;   // rad, clockwise from north
  double altitude;  // rad above the horizon
};

// Declination, equation of time and hour angle from the UTC instant;
// longitude 0 (UTC is the local mean solar time).
SolarPosition solar_position(ts::Timestamp t, double latitude);

struct SolarGeometry {
  double azimuth;
  double altitude;
  double window_orientation;  // theta_0
  double irradiation;         // horizontal, W/m^2
};

inline constexpr double kMinSolarAltitude = 1.0 * 3.14159265358979323846 / 180.0;

// sin(theta - theta_0) cos(phi) / sin(phi) * I, or 0 when the sun is below
// kMinSolarAltitude or behind the facade.
double irradiance_transform(const SolarGeometry& g);

// Q_irr for every row of a table's irradiation channel.
std::vector<double> irradiance_series(const ts::TimeSeriesTable& table, double latitude,
                                      double window_orientation);

struct IdentificationData {
  std::span<const double> t_zone;
  std::span<const double> q_heat;
  std::span<const double> t_out;
  std::span<const double> t_neigh;
  std::span<const double> q_irr;
};

struct FitResult {
  RcParams params;
  double condition_number = 0.0;  // of the regressor matrix Y
  double residual_norm = 0.0;      // ||X - Y p||
  double normal_residual = 0.0;    // ||Y^T (X - Y p)||
  double normal_rhs = 0.0;         // ||Y^T X||
  std::size_t rows = 0;
};

// Rows where any of the involved values (including T[k+1]) is missing are
// skipped. Throws std::runtime_error when Y is rank deficient.
FitResult fit_least_squares(const IdentificationData& data);

double rc_step(const RcParams& p, double t_zone, double q_heat, double t_out, double t_neigh,
               double q_irr);

// Per-minute drivers.
struct StepInputs {
  std::vector<double> q_heat;
  std::vector<double> t_out;
  std::vector<double> t_neigh;
  std::vector<double> q_irr;
};

// T[k+i] = (1-b-c)^i T[k] + sum_{j=1..i} (1-b-c)^(j-1) [a Q + b T_out + c T_neigh + e1 Q_irr][k+i-j]
double rc_closed_form(const RcParams& p, double t_k, const StepInputs& in, std::size_t i);

// Iterated rc_step over the first `steps` minutes; returns T[1..steps].
std::vector<double> rc_iterate(const RcParams& p, double t0, const StepInputs& in,
                               std::size_t steps);

struct ControlGridInputs {
  std::vector<double> q_heat;  // one value per 15-minute control interval, held
  std::vector<double> t_out;   // per minute, 15 values per interval
  std::vector<double> t_neigh;
  std::vector<double> q_irr;
};

// 1-minute recursion with each control held for 15 steps; returns the state
// after every interval.
std::vector<double> rc_simulate(const RcParams& p, double t0, const ControlGridInputs& in);

// Linear interpolation from a coarse grid to `factor` sub-steps per sample;
// the last sample is held.
std::vector<double> upsample_linear(std::span<const double> coarse, std::size_t factor = 15);

}  // namespace thermoseed::rc

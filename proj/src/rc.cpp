#include "thermoseed/rc.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "thermoseed/kvfile.hpp"

namespace thermoseed::rc {

bool physically_plausible(const RcParams& p) {
  return p.a > 0.0 && p.b > 0.0 && p.c > 0.0 && p.e1 > 0.0;
}

bool decay_is_meaningful(const RcParams& p) {
  const double decay = 1.0 - p.b - p.c;
  return decay > 0.0 && decay <= 1.0;
}

void save(const RcParams& p, const std::filesystem::path& path, double condition_number) {
  KeyValueFile kv;
  kv.set("rc.a", p.a);
  kv.set("rc.b", p.b);
  kv.set("rc.c", p.c);
  kv.set("rc.e1", p.e1);
  if (condition_number > 0.0) kv.set("rc.condition_number", condition_number);
  kv.write(path, "thermoseed rc-params v1");
}

RcParams load(const std::filesystem::path& path) {
  const KeyValueFile kv = KeyValueFile::read(path);
  return RcParams{kv.get_double("rc.a"), kv.get_double("rc.b"), kv.get_double("rc.c"),
                  kv.get_double("rc.e1")};
}

SolarPosition solar_position(ts::Timestamp t, double latitude) {
  using namespace std::chrono;
  constexpr double pi = std::numbers::pi;
  const sys_days day = floor<days>(t);
  const year_month_day ymd{day};
  const sys_days jan1{ymd.year() / January / 1};
  const double doy = static_cast<double>((day - jan1).count()) + 1.0;
  const double hour = static_cast<double>((t - day).count()) / 3600.0;
  const double year_days = ymd.year().is_leap() ? 366.0 : 365.0;

  const double g = 2.0 * pi / year_days * (doy - 1.0 + (hour - 12.0) / 24.0);
  const double eot_min = 229.18 * (0.000075 + 0.001868 * std::cos(g) - 0.032077 * std::sin(g) -
                                   0.014615 * std::cos(2 * g) - 0.040849 * std::sin(2 * g));
  const double decl = 0.006918 - 0.399912 * std::cos(g) + 0.070257 * std::sin(g) -
                      0.006758 * std::cos(2 * g) + 0.000907 * std::sin(2 * g) -
                      0.002697 * std::cos(3 * g) + 0.00148 * std::sin(3 * g);
  const double solar_minutes = hour * 60.0 + eot_min;
  const double hour_angle = (solar_minutes / 4.0 - 180.0) * pi / 180.0;

  const double sin_alt = std::sin(latitude) * std::sin(decl) +
                         std::cos(latitude) * std::cos(decl) * std::cos(hour_angle);
  const double altitude = std::asin(std::clamp(sin_alt, -1.0, 1.0));
  const double az_south = std::atan2(std::sin(hour_angle), std::cos(hour_angle) * std::sin(latitude) -
                                                               std::tan(decl) * std::cos(latitude));
  return SolarPosition{az_south + pi, altitude};
}

double irradiance_transform(const SolarGeometry& g) {
  if (g.irradiation == 0.0 || g.altitude <= kMinSolarAltitude) return 0.0;
  const double facing = std::sin(g.azimuth - g.window_orientation);
  if (facing < 0.0) return 0.0;
  return facing * std::cos(g.altitude) / std::sin(g.altitude) * g.irradiation;
}

std::vector<double> irradiance_series(const ts::TimeSeriesTable& table, double latitude,
                                      double window_orientation) {
  const auto& irr = table.channel(ts::channels::kIrradiation);
  std::vector<double> out(irr.size());
  for (std::size_t r = 0; r < irr.size(); ++r) {
    if (ts::is_missing(irr[r])) {
      out[r] = ts::kMissing;
      continue;
    }
    const SolarPosition sp = solar_position(table.timestamp(r), latitude);
    out[r] = irradiance_transform({sp.azimuth, sp.altitude, window_orientation, irr[r]});
  }
  return out;
}

FitResult fit_least_squares(const IdentificationData& d) {
  const std::size_t n = d.t_zone.size();
  if (d.q_heat.size() < n || d.t_out.size() < n || d.t_neigh.size() < n || d.q_irr.size() < n) {
    throw std::invalid_argument("fit_least_squares: driver series shorter than temperature");
  }
  std::vector<std::size_t> rows;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const double vals[] = {d.t_zone[k], d.t_zone[k + 1], d.q_heat[k],
                           d.t_out[k],  d.t_neigh[k],    d.q_irr[k]};
    bool ok = true;
    for (double v : vals) ok = ok && std::isfinite(v);
    if (ok) rows.push_back(k);
  }
  if (rows.size() < 4) throw std::runtime_error("fit_least_squares: fewer than 4 usable rows");

  Eigen::MatrixXd Y(rows.size(), 4);
  Eigen::VectorXd X(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t k = rows[r];
    Y(r, 0) = d.q_heat[k];
    Y(r, 1) = -(d.t_zone[k] - d.t_out[k]);
    Y(r, 2) = -(d.t_zone[k] - d.t_neigh[k]);
    Y(r, 3) = d.q_irr[k];
    X(r) = d.t_zone[k + 1] - d.t_zone[k];
  }

  // Column scaling keeps the rank test meaningful when the regressors have
  // very different units (W against degrees).
  Eigen::Vector4d scale;
  for (int c = 0; c < 4; ++c) {
    const double norm = Y.col(c).norm();
    scale(c) = norm > 0.0 ? norm : 1.0;
  }
  const Eigen::MatrixXd Ys = Y * scale.cwiseInverse().asDiagonal();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Ys);
  qr.setThreshold(1e-12);
  if (qr.rank() < 4) throw std::runtime_error("fit_least_squares: regressor matrix is rank deficient");
  const Eigen::Vector4d ps = qr.solve(X);
  const Eigen::Vector4d p = ps.cwiseQuotient(scale);

  FitResult out;
  out.params = RcParams{p(0), p(1), p(2), p(3)};
  out.rows = rows.size();
  const Eigen::VectorXd resid = X - Y * p;
  out.residual_norm = resid.norm();
  out.normal_residual = (Y.transpose() * resid).norm();
  out.normal_rhs = (Y.transpose() * X).norm();
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(Y);
  const auto& sv = svd.singularValues();
  out.condition_number = sv(0) / sv(sv.size() - 1);
  return out;
}

double rc_step(const RcParams& p, double t_zone, double q_heat, double t_out, double t_neigh,
               double q_irr) {
  return t_zone + p.a * q_heat - p.b * (t_zone - t_out) - p.c * (t_zone - t_neigh) + p.e1 * q_irr;
}

namespace {

void require_length(const StepInputs& in, std::size_t n) {
  if (in.q_heat.size() < n || in.t_out.size() < n || in.t_neigh.size() < n ||
      in.q_irr.size() < n) {
    throw std::invalid_argument("driver series shorter than the requested horizon");
  }
}

}  // namespace

double rc_closed_form(const RcParams& p, double t_k, const StepInputs& in, std::size_t i) {
  require_length(in, i);
  const double decay = 1.0 - p.b - p.c;
  double sum = 0.0;
  double power = 1.0;  // decay^(j-1)
  for (std::size_t j = 1; j <= i; ++j) {
    const std::size_t m = i - j;
    sum += power * (p.a * in.q_heat[m] + p.b * in.t_out[m] + p.c * in.t_neigh[m] +
                    p.e1 * in.q_irr[m]);
    power *= decay;
  }
  return power * t_k + sum;
}

std::vector<double> rc_iterate(const RcParams& p, double t0, const StepInputs& in,
                               std::size_t steps) {
  require_length(in, steps);
  std::vector<double> out;
  out.reserve(steps);
  double t = t0;
  for (std::size_t k = 0; k < steps; ++k) {
    t = rc_step(p, t, in.q_heat[k], in.t_out[k], in.t_neigh[k], in.q_irr[k]);
    out.push_back(t);
  }
  return out;
}

std::vector<double> rc_simulate(const RcParams& p, double t0, const ControlGridInputs& in) {
  const std::size_t intervals = in.q_heat.size();
  const std::size_t minutes = intervals * 15;
  if (in.t_out.size() < minutes || in.t_neigh.size() < minutes || in.q_irr.size() < minutes) {
    throw std::invalid_argument("rc_simulate: need 15 exogenous samples per control interval");
  }
  std::vector<double> out;
  out.reserve(intervals);
  double t = t0;
  for (std::size_t k = 0; k < intervals; ++k) {
    for (std::size_t m = k * 15; m < k * 15 + 15; ++m) {
      t = rc_step(p, t, in.q_heat[k], in.t_out[m], in.t_neigh[m], in.q_irr[m]);
    }
    out.push_back(t);
  }
  return out;
}

std::vector<double> upsample_linear(std::span<const double> coarse, std::size_t factor) {
  std::vector<double> out;
  out.reserve(coarse.size() * factor);
  for (std::size_t k = 0; k < coarse.size(); ++k) {
    const double next = k + 1 < coarse.size() ? coarse[k + 1] : coarse[k];
    for (std::size_t s = 0; s < factor; ++s) {
      const double t = static_cast<double>(s) / static_cast<double>(factor);
      out.push_back(coarse[k] + t * (next - coarse[k]));
    }
  }
  return out;
}

}  // namespace thermoseed::rc

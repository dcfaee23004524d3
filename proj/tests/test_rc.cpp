#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "support.hpp"
#include "thermoseed/rc.hpp"

namespace rc = thermoseed::rc;
namespace ts = thermoseed::ts;
using thermoseed::testing::exciting_rc_params;
using thermoseed::testing::identification;
using thermoseed::testing::rc_data;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;

rc::StepInputs random_inputs(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  rc::StepInputs in;
  for (std::size_t k = 0; k < n; ++k) {
    in.q_heat.push_back(u01(rng) < 0.5 ? 0.0 : 1500.0 * u01(rng));
    in.t_out.push_back(-5.0 + 20.0 * u01(rng));
    in.t_neigh.push_back(18.0 + 5.0 * u01(rng));
    in.q_irr.push_back(400.0 * u01(rng));
  }
  return in;
}

const rc::RcParams kDefaultTruth{8.0e-6, 1.6e-4, 2.0e-4, 1.0e-5};

}  // namespace

TEST(Irradiance, Examples) {
  EXPECT_EQ(rc::irradiance_transform({kPi, 0.5, kPi / 2, 0.0}), 0.0);
  EXPECT_NEAR(rc::irradiance_transform({kPi, kPi / 4, kPi / 2, 100.0}), 100.0, 1e-12);
  EXPECT_EQ(rc::irradiance_transform({kPi, 0.5 * kDeg, kPi / 2, 100.0}), 0.0);
  // Sun behind the facade.
  EXPECT_EQ(rc::irradiance_transform({0.2, kPi / 4, kPi / 2, 100.0}), 0.0);
}

TEST(SolarPosition, EquinoxNoonAtEquatorIsOverhead) {
  // Solar noon differs from 12:00 UTC by the equation of time, a few minutes
  // around the March equinox.
  double best = -1.0;
  for (int m = -30; m <= 30; ++m) {
    const auto t = ts::parse_timestamp("2023-03-20T12:00:00Z") + std::chrono::minutes(m);
    best = std::max(best, rc::solar_position(t, 0.0).altitude);
  }
  EXPECT_NEAR(best, kPi / 2, 2.0 * kDeg);
  const auto midnight = ts::parse_timestamp("2023-06-01T00:00:00Z");
  EXPECT_LT(rc::solar_position(midnight, 47.4 * kDeg).altitude, 0.0);
  const auto a = rc::solar_position(ts::parse_timestamp("2023-05-01T10:31:00Z"), 47.4 * kDeg);
  const auto b = rc::solar_position(ts::parse_timestamp("2023-05-01T10:31:00Z"), 47.4 * kDeg);
  EXPECT_EQ(a.altitude, b.altitude);
  EXPECT_EQ(a.azimuth, b.azimuth);
}

TEST(SolarPosition, NoonSunIsSouthAtMidLatitude) {
  const auto sp = rc::solar_position(ts::parse_timestamp("2023-06-21T12:00:00Z"), 47.4 * kDeg);
  // Greenwich-time noon: azimuth within a few degrees of south, altitude near
  // 90 - 47.4 + 23.44.
  EXPECT_NEAR(sp.azimuth, kPi, 5.0 * kDeg);
  EXPECT_NEAR(sp.altitude, (90.0 - 47.4 + 23.44) * kDeg, 1.5 * kDeg);
}

TEST(Fit, NoiseFreeRecovery) {
  const rc::RcParams p = exciting_rc_params();
  const auto d = rc_data(p, 10000, 0.0, 1);
  const auto r = rc::fit_least_squares(identification(d));
  EXPECT_NEAR(r.params.a, p.a, 1e-6 * p.a);
  EXPECT_NEAR(r.params.b, p.b, 1e-6 * p.b);
  EXPECT_NEAR(r.params.c, p.c, 1e-6 * p.c);
  EXPECT_NEAR(r.params.e1, p.e1, 1e-6 * p.e1);
  EXPECT_LT(r.residual_norm, 1e-9);
  EXPECT_GT(r.condition_number, 1.0);
  EXPECT_EQ(r.rows, 9999u);
}

TEST(Fit, DefaultTruthNoiseFree) {
  const auto d = rc_data(kDefaultTruth, 5000, 0.0, 2);
  const auto r = rc::fit_least_squares(identification(d));
  EXPECT_NEAR(r.params.a, kDefaultTruth.a, 1e-6 * kDefaultTruth.a);
  EXPECT_NEAR(r.params.c, kDefaultTruth.c, 1e-6 * kDefaultTruth.c);
}

TEST(Fit, NoisyIncrementsWithinFivePercent) {
  const rc::RcParams p = exciting_rc_params();
  for (std::uint64_t seed = 10; seed < 15; ++seed) {
    const auto d = rc_data(p, 10000, 0.01, seed);
    const auto r = rc::fit_least_squares(identification(d));
    EXPECT_NEAR(r.params.a, p.a, 0.05 * p.a) << seed;
    EXPECT_NEAR(r.params.b, p.b, 0.05 * p.b) << seed;
    EXPECT_NEAR(r.params.c, p.c, 0.05 * p.c) << seed;
    EXPECT_NEAR(r.params.e1, p.e1, 0.05 * p.e1) << seed;
    // Residuals are orthogonal to the regressors.
    EXPECT_LT(r.normal_residual, 1e-8 * r.normal_rhs);
  }
}

TEST(Fit, MissingRowsSkippedAndRankDeficiencyRejected) {
  auto d = rc_data(exciting_rc_params(), 500, 0.0, 3);
  d.t[100] = ts::kMissing;
  const auto r = rc::fit_least_squares(identification(d));
  EXPECT_EQ(r.rows, 499u - 2u);
  auto flat = d;
  for (auto& q : flat.q_irr) q = 0.0;
  EXPECT_THROW(rc::fit_least_squares(identification(flat)), std::runtime_error);
  auto few = rc_data(exciting_rc_params(), 4, 0.0, 4);
  EXPECT_THROW(rc::fit_least_squares(identification(few)), std::runtime_error);
}

TEST(Step, Examples) {
  EXPECT_EQ(rc::rc_step(kDefaultTruth, 21.0, 0.0, 21.0, 21.0, 0.0), 21.0);
  EXPECT_DOUBLE_EQ(rc::rc_step({8e-6, 0, 0, 0}, 20.0, 1000.0, 5.0, 3.0, 100.0), 20.0 + 8e-3);
  const double hand = 20.5 + 8.0e-6 * 1200.0 - 1.6e-4 * (20.5 - 3.0) - 2.0e-4 * (20.5 - 19.0) + 1.0e-5 * 250.0;
  EXPECT_NEAR(rc::rc_step(kDefaultTruth, 20.5, 1200.0, 3.0, 19.0, 250.0), hand, 1e-15);
}

TEST(Simulate, HoldsAndOracles) {
  rc::ControlGridInputs zero;
  zero.q_heat.assign(4, 0.0);
  zero.t_out.assign(60, 3.0);
  zero.t_neigh.assign(60, 30.0);
  zero.q_irr.assign(60, 500.0);
  for (double t : rc::rc_simulate({0, 0, 0, 0}, 21.0, zero)) EXPECT_EQ(t, 21.0);

  rc::ControlGridInputs one = zero;
  one.q_heat = {1000.0};
  const auto t1 = rc::rc_simulate({8e-6, 0, 0, 0}, 21.0, one);
  ASSERT_EQ(t1.size(), 1u);
  EXPECT_NEAR(t1[0], 21.0 + 15.0 * 8e-6 * 1000.0, 1e-13);

  std::mt19937_64 rng(5);
  const auto minute = random_inputs(15 * 20, rng);
  rc::ControlGridInputs grid;
  for (std::size_t k = 0; k < 20; ++k) grid.q_heat.push_back(minute.q_heat[15 * k]);
  grid.t_out = minute.t_out;
  grid.t_neigh = minute.t_neigh;
  grid.q_irr = minute.q_irr;
  rc::StepInputs held = minute;
  for (std::size_t m = 0; m < held.q_heat.size(); ++m) held.q_heat[m] = grid.q_heat[m / 15];
  const auto sim = rc::rc_simulate(kDefaultTruth, 20.0, grid);
  for (std::size_t k = 0; k < 20; ++k) {
    EXPECT_NEAR(sim[k], rc::rc_closed_form(kDefaultTruth, 20.0, held, 15 * (k + 1)), 1e-10);
  }
}

TEST(ClosedForm, MatchesIteration) {
  std::mt19937_64 rng(6);
  const auto in = random_inputs(100, rng);
  const auto it = rc::rc_iterate(kDefaultTruth, 19.0, in, 100);
  EXPECT_EQ(rc::rc_closed_form(kDefaultTruth, 19.0, in, 1),
            rc::rc_step(kDefaultTruth, 19.0, in.q_heat[0], in.t_out[0], in.t_neigh[0], in.q_irr[0]));
  for (std::size_t i = 1; i <= 100; ++i) {
    EXPECT_NEAR(rc::rc_closed_form(kDefaultTruth, 19.0, in, i), it[i - 1], 1e-10);
  }
  const rc::RcParams no_loss{8e-6, 0.0, 0.0, 1e-5};
  double sum = 19.0;
  for (std::size_t m = 0; m < 50; ++m) sum += 8e-6 * in.q_heat[m] + 1e-5 * in.q_irr[m];
  EXPECT_NEAR(rc::rc_closed_form(no_loss, 19.0, in, 50), sum, 1e-12);
}

TEST(Sensitivity, PowerPerturbationMatchesGeometricWeights) {
  std::mt19937_64 rng(7);
  const auto in = random_inputs(60, rng);
  const double decay = 1.0 - kDefaultTruth.b - kDefaultTruth.c;
  const std::size_t i = 60;
  const double base = rc::rc_closed_form(kDefaultTruth, 0.0, in, i);
  const double delta = 1e4;
  for (std::size_t j = 1; j <= i; j += 7) {
    auto bumped = in;
    bumped.q_heat[i - j] += delta;
    const double numeric = (rc::rc_closed_form(kDefaultTruth, 0.0, bumped, i) - base) / delta;
    const double analytic = std::pow(decay, static_cast<double>(j - 1)) * kDefaultTruth.a;
    EXPECT_NEAR(numeric, analytic, 1e-12 * analytic) << j;
  }
}

TEST(Sensitivity, MonotoneInEveryDriver) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const auto in = random_inputs(200, rng);
  auto up = in;
  for (std::size_t m = 0; m < 200; ++m) {
    up.q_heat[m] += 100.0 * u01(rng);
    up.t_out[m] += u01(rng);
    up.t_neigh[m] += u01(rng);
    up.q_irr[m] += 50.0 * u01(rng);
  }
  const auto a = rc::rc_iterate(kDefaultTruth, 20.0, in, 200);
  const auto b = rc::rc_iterate(kDefaultTruth, 20.0, up, 200);
  for (std::size_t k = 0; k < 200; ++k) EXPECT_GT(b[k], a[k]);
}

TEST(Upsample, LinearBetweenSamples) {
  const std::vector<double> coarse{0.0, 15.0, 15.0};
  const auto fine = rc::upsample_linear(coarse);
  ASSERT_EQ(fine.size(), 45u);
  for (std::size_t m = 0; m < 15; ++m) EXPECT_DOUBLE_EQ(fine[m], static_cast<double>(m));
  for (std::size_t m = 15; m < 45; ++m) EXPECT_DOUBLE_EQ(fine[m], 15.0);
}

TEST(Params, PersistenceAndPlausibility) {
  const auto path = std::filesystem::temp_directory_path() / "thermoseed_rc_params.cfg";
  rc::save(kDefaultTruth, path, 12.5);
  const auto back = rc::load(path);
  EXPECT_EQ(back.a, kDefaultTruth.a);
  EXPECT_EQ(back.e1, kDefaultTruth.e1);
  EXPECT_TRUE(rc::physically_plausible(kDefaultTruth));
  EXPECT_FALSE(rc::physically_plausible({1e-6, -1e-4, 1e-4, 1e-6}));
  EXPECT_TRUE(rc::decay_is_meaningful(kDefaultTruth));
  EXPECT_FALSE(rc::decay_is_meaningful({0, 0.7, 0.5, 0}));
}

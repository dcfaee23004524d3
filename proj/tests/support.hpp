#pragma once
// Builders shared by the unit tests and the acceptance binary.

#include <cstdint>
#include <random>
#include <vector>

#include "thermoseed/pcnn.hpp"
#include "thermoseed/rc.hpp"
#include "thermoseed/synthbuild.hpp"

namespace thermoseed::testing {

// A random normalized window. Heating windows carry u >= 0, cooling windows
// u <= 0, both with a share of zero steps.
inline pcnn::Window random_window(std::size_t rows, std::mt19937_64& rng, bool heating = true,
                                  std::size_t warm = 12) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  pcnn::Window w;
  w.warm = warm;
  w.heating = heating;
  w.start = ts::parse_timestamp("2023-02-06T00:00:00Z");
  w.x = ad::Tensor(rows, pcnn::kFeatureCount);
  double t = 0.5 + 0.1 * u01(rng);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < pcnn::kFeatureCount; ++c) w.x(r, c) = u01(rng);
    const double mag = u01(rng) < 0.4 ? 0.0 : 0.1 + 0.7 * u01(rng);
    w.u.push_back(heating ? mag : -mag);
    w.t_out.push_back(0.1 + 0.4 * u01(rng));
    w.t_neigh.push_back(0.4 + 0.3 * u01(rng));
    t += 0.01 * (u01(rng) - 0.5);
    w.t_meas.push_back(t);
  }
  return w;
}

inline nn::NetConfig tiny_net() {
  nn::NetConfig c;
  c.encoder = {8, 8};
  c.lstm_layers = 1;
  c.lstm_hidden = 8;
  c.decoder = {8, 8};
  return c;
}

// PCNN with the rule-of-thumb physics for a 10 degC span and P_avg = 0.4.
inline pcnn::Model tiny_pcnn(std::uint64_t seed, pcnn::ControlTransform g = pcnn::identity_transform(),
                             nn::NetConfig net = tiny_net()) {
  pcnn::Model m = pcnn::make_pcnn(net, pcnn::init_physics_params(0.4, 0.08), std::move(g), seed);
  m.normalizer.add("T", 15.0, 25.0);
  m.normalizer.add("T_out", 15.0, 25.0);
  m.normalizer.add("T_neigh", 15.0, 25.0);
  m.normalizer.add("I", 0.0, 800.0);
  m.power_max = 1500.0;
  return m;
}

inline void zero_output_layer(pcnn::Model& m) {
  m.net.output.w.fill(0.0);
  m.net.output.b.fill(0.0);
}

// Linear RC data on a 1-minute grid with strongly exciting inputs. `noise`
// is the standard deviation of an additive disturbance on every temperature
// increment, so the regression residual is exactly that disturbance.
struct RcData {
  std::vector<double> t, q, t_out, t_neigh, q_irr;
};

inline RcData rc_data(const rc::RcParams& p, std::size_t rows, double noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  RcData d;
  double t = 21.0;
  for (std::size_t k = 0; k < rows; ++k) {
    const bool on = u01(rng) < (t < 21.0 ? 0.8 : 0.2);
    d.t.push_back(t);
    d.q.push_back(on ? 1500.0 : 0.0);
    d.t_out.push_back(-10.0 + 25.0 * u01(rng));
    d.t_neigh.push_back(11.0 + 20.0 * u01(rng));
    d.q_irr.push_back(600.0 * u01(rng));
    t = rc::rc_step(p, t, d.q.back(), d.t_out.back(), d.t_neigh.back(), d.q_irr.back()) +
        (noise > 0.0 ? noise * gauss(rng) : 0.0);
  }
  return d;
}

inline rc::IdentificationData identification(const RcData& d) {
  return {d.t, d.q, d.t_out, d.t_neigh, d.q_irr};
}

// Parameters large enough that 10^4 rows pin them down under 0.01 degC
// increment noise.
inline rc::RcParams exciting_rc_params() { return {2.0e-5, 1.0e-3, 1.5e-3, 3.0e-5}; }

// The generator with every unmodelled effect removed.
inline synth::BuildingScenario linear_scenario(int days, std::uint64_t seed) {
  synth::BuildingScenario s;
  s.duration_days = days;
  s.noise = 0.0;
  s.outside_noise = 0.0;
  s.occupancy_gain = 0.0;
  s.solar_nonlinearity = 0.0;
  s.thermostat = false;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  s.power_schedule.assign(s.minutes(), 0.0);
  for (std::size_t k = 0; k < s.minutes(); k += 15) {
    const double p = u01(rng) < 0.4 ? 1500.0 * u01(rng) : 0.0;
    for (std::size_t m = k; m < k + 15 && m < s.minutes(); ++m) s.power_schedule[m] = p;
  }
  return s;
}

}  // namespace thermoseed::testing

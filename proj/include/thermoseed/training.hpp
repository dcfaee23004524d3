#pragma once
// Windowing, seasonal splits, scaling, the training loop and evaluation.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "thermoseed/pcnn.hpp"
#include "thermoseed/rc.hpp"
#include "thermoseed/timeseries.hpp"

namespace thermoseed::training {

struct WindowConfig {
  std::size_t warm = 12;
  std::size_t min_horizon = 48;
  std::size_t max_horizon = 288;
  std::size_t stride = 4;
  std::vector<int> heating_months{1, 2, 3, 10, 11, 12};
};

bool in_heating_season(ts::Timestamp t, std::span<const int> heating_months);

// Windows in physical units (degC, W, W/m^2) from a 15-minute table with T,
// T_out, T_neigh, I and Q_heat. Horizon origins sit on the stride grid with
// the warm-start rows before them; each origin yields the longest gap-free
// horizon up to max_horizon, dropped when shorter than min_horizon.
std::vector<pcnn::Window> make_windows(const ts::TimeSeriesTable& table, const WindowConfig& cfg);

struct Split {
  std::vector<pcnn::Window> train;
  std::vector<pcnn::Window> validation;
  std::size_t excluded = 0;
};

// Per season, a chronological cut at the `fraction` quantile of horizon
// origins; windows straddling the cut are dropped, as is any training window
// overlapping a validation window in time. A season with no windows is
// skipped; one with fewer than 5, or whose cut leaves either side empty, is
// an error.
Split split_seasonal(std::vector<pcnn::Window> windows, double fraction = 0.8);

ts::Timestamp window_end(const pcnn::Window& w);
ts::Timestamp horizon_origin(const pcnn::Window& w);

struct Scaling {
  ts::Normalizer normalizer;  // T, T_out, T_neigh share one range; I
  double power_max = 0.0;     // |W| mapped to u = 0.8
  double temp_scale() const { return normalizer.scale("T"); }
};

// Fitted on the training windows only.
Scaling fit_scaling(std::span<const pcnn::Window> physical);
pcnn::Window normalize(const pcnn::Window& physical, const Scaling& s);
std::vector<pcnn::Window> normalize(std::span<const pcnn::Window> physical, const Scaling& s);
void apply_scaling(pcnn::Model& model, const Scaling& s);
Scaling model_scaling(const pcnn::Model& model);

// Mean nonzero |u| over the windows (normalized).
double average_power(std::span<const pcnn::Window> windows);

struct TrainConfig {
  int epochs = 20;
  std::size_t batch = 16;
  std::uint64_t seed = 0;
  bool include_warm_loss = false;
  double base_lr = 1e-3;
  // Keeps the network behind f at its initial weights; only the physics
  // multipliers and the control transform learn.
  bool freeze_dynamics = false;
  // Called after every epoch; may be empty.
  std::function<void(int epoch, double train_loss, double val_loss)> on_epoch;
};

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
  bool conditions_hold = true;
};

struct TrainResult {
  pcnn::Model best;
  int best_epoch = 0;
  double best_validation_loss = 0.0;
  std::vector<EpochStats> curve;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Batches of windows with similar horizon lengths, in a seeded order.
std::vector<std::vector<std::size_t>> make_batches(std::span<const pcnn::Window> windows,
                                                   std::size_t batch, std::uint64_t seed);

// Mean over windows of the per-step horizon MSE (normalized units).
double mean_loss(const pcnn::Model& model, std::span<const pcnn::Window> windows,
                 bool include_warm = false);

TrainResult train(pcnn::Model model, std::span<const pcnn::Window> train_set,
                  std::span<const pcnn::Window> validation_set, const TrainConfig& cfg);

inline constexpr std::size_t kMarkerSteps[] = {4, 24, 48, 96, 192, 288};

struct EvalReport {
  std::vector<double> mean_error;  // per horizon step 1..H, degC (prediction - measurement)
  std::vector<double> std_error;
  std::vector<std::size_t> count;
  std::vector<std::pair<std::size_t, double>> marker_mae;  // (step, MAE degC)
  std::vector<double> window_mae;
  double marker(std::size_t step) const;
};

// predictions / truth per window, horizon rows, degC.
EvalReport summarize(const std::vector<std::vector<double>>& predictions,
                     const std::vector<std::vector<double>>& truth);

EvalReport evaluate(const pcnn::Model& model, std::span<const pcnn::Window> windows);

// RC forecasts on the 15-minute windows: controls held for 15 one-minute
// steps, exogenous inputs linearly upsampled, started from the measured
// temperature at the last warm-start row. Returns degC horizon predictions.
struct SiteGeometry {
  double latitude = 47.4 * 3.14159265358979323846 / 180.0;
  double window_orientation = 3.14159265358979323846 / 2.0;
};
std::vector<double> rc_forecast(const rc::RcParams& p, const pcnn::Window& normalized,
                                const Scaling& s, const SiteGeometry& site);
EvalReport evaluate_rc(const rc::RcParams& p, std::span<const pcnn::Window> windows,
                       const Scaling& s, const SiteGeometry& site);

// Measured horizon temperatures in degC.
std::vector<double> measured_horizon(const pcnn::Window& normalized, const Scaling& s);

// `<prefix>_steps.csv`, `<prefix>_windows.csv`, `<prefix>_markers.cfg`.
void write_report(const EvalReport& r, const std::filesystem::path& dir, const std::string& prefix);

// Everything a training run consumes, derived from a raw 1-minute table.
struct Experiment {
  ts::PreprocessResult data;
  std::vector<pcnn::Window> train;       // normalized
  std::vector<pcnn::Window> validation;  // normalized
  Scaling scaling;
  std::size_t excluded = 0;
};

Experiment prepare_experiment(const ts::TimeSeriesTable& raw, const ts::PreprocessConfig& pre,
                              const WindowConfig& windows);

// RC least squares on the 1-minute rows covered by the training windows.
rc::FitResult fit_rc(const Experiment& ex, const SiteGeometry& site);

// Fresh models sized for an experiment: PCNN physics initialized from the
// training data's average power and temperature scale.
pcnn::Model init_pcnn(const Experiment& ex, const nn::NetConfig& net, std::uint64_t seed,
                      pcnn::ControlTransform g = pcnn::identity_transform());
pcnn::Model init_plain_lstm(const Experiment& ex, const nn::NetConfig& net, std::uint64_t seed);

// Parallelism cap from THERMOSEED_THREADS (default 1).
std::size_t thread_count();

}  // namespace thermoseed::training

#pragma once
// Consistency checks and experiments: sensitivity identities, the control
// ablation, error propagation tables, multi-seed runs and the plain-LSTM
// comparison.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "thermoseed/pcnn.hpp"
#include "thermoseed/rc.hpp"
#include "thermoseed/training.hpp"

namespace thermoseed::verify {

enum class Mode {
  kExact,  // numeric matches analytic to the tolerance and is positive
  kSign,   // numeric is positive
};

struct CheckRecord {
  pcnn::InputKind input = pcnn::InputKind::kControl;
  std::size_t j = 0;
  std::size_t i = 0;
  double analytic = 0.0;  // NaN when there is no analytic target
  double numeric = 0.0;
  double abs_error = 0.0;
  double rel_error = 0.0;
  bool pass = false;
};

struct ConsistencyReport {
  std::vector<CheckRecord> records;
  pcnn::ConditionFlags conditions;
  bool pass = false;
  std::size_t failures = 0;
  double max_rel_error = 0.0;
};

// Samples `pairs` (j, i) pairs and checks every input kind at each. The plain
// LSTM has no analytic target: records are filled but conditions and the
// global flag only reflect the sign of the numeric values.
ConsistencyReport check_consistency(const pcnn::Model& model, const pcnn::Window& window,
                                    std::size_t pairs, Mode mode, double tolerance = 1e-6,
                                    std::uint64_t seed = 0);

// Merges per-window reports; the global flag is the conjunction.
ConsistencyReport merge(std::span<const ConsistencyReport> reports);

void write_consistency(const ConsistencyReport& r, const std::filesystem::path& path);

class ConsistencyBreach : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Variant { kFull, kFirstHalf, kSecondHalf, kNone };
inline constexpr Variant kVariants[] = {Variant::kFull, Variant::kFirstHalf, Variant::kSecondHalf,
                                        Variant::kNone};
std::string_view variant_name(Variant v);

// Steps sorted by decreasing magnitude (ties by time); the first half takes
// the leading steps up to the rank where the cumulative energy reaches half
// of the total, found by bisection. Returns per-step membership of the first
// half.
std::vector<bool> magnitude_split(std::span<const double> controls);

struct AblationRun {
  // Horizon trajectories per variant, degC.
  std::map<Variant, std::vector<double>> pcnn;
  std::map<Variant, std::vector<double>> rc;
  // Variant minus none, degC.
  std::map<Variant, std::vector<double>> pcnn_difference;
  std::map<Variant, std::vector<double>> rc_difference;
  double energy_full = 0.0;
  double energy_first = 0.0;
  double energy_second = 0.0;
  // Largest deviation of the RC difference curves from the closed form.
  double rc_closed_form_error = 0.0;
  bool pcnn_ordering = false;
  bool rc_ordering = false;
  double half_imbalance() const;
};

// The four control variants replace u on the rows driving the horizon
// (warm - 1 onwards). Throws std::invalid_argument for a cooling window and
// ConsistencyBreach when assert_ordering is set and the ordering fails.
AblationRun run_control_ablation(const pcnn::Model& model, const rc::RcParams& rc,
                                 const pcnn::Window& window, const training::SiteGeometry& site,
                                 bool assert_ordering = true);

void write_ablation(const AblationRun& run, const std::filesystem::path& dir, const std::string& prefix);

struct NamedReport {
  std::string name;
  training::EvalReport report;
};

// Per-model step curves, the marker table (one row per marker step) and the
// per-window MAE pairs, as CSV files in dir.
void error_propagation(std::span<const NamedReport> reports, const std::filesystem::path& dir);

struct LossRow {
  std::string model;
  std::string seed;  // "mean" for the aggregate rows
  double train_loss = 0.0;
  double validation_loss = 0.0;
};

struct SeedRun {
  std::uint64_t seed = 0;
  training::TrainResult pcnn;
  training::TrainResult lstm;
};

struct AblationTable {
  std::vector<LossRow> rows;
  std::vector<SeedRun> runs;
};

// Trains a PCNN and a plain LSTM per seed with identical schedules and widths.
AblationTable run_ablation_lstm(const training::Experiment& ex, std::span<const std::uint64_t> seeds,
                                const nn::NetConfig& net, const training::TrainConfig& train);

void write_loss_table(std::span<const LossRow> rows, const std::filesystem::path& path);

struct MarkerAggregate {
  std::size_t step = 0;
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
};

struct MultiSeedResult {
  std::vector<std::uint64_t> seeds;
  std::vector<training::EvalReport> reports;
  std::vector<MarkerAggregate> aggregate;
};

double median(std::vector<double> values);
std::vector<MarkerAggregate> aggregate_markers(std::span<const training::EvalReport> reports);

MultiSeedResult multi_seed(const training::Experiment& ex, std::span<const std::uint64_t> seeds,
                           const nn::NetConfig& net, const training::TrainConfig& train);

struct RunSummary {
  std::string run_id;
  std::string config_hash;
  std::map<std::string, double> metrics;
  std::map<std::string, bool> consistency;
};

void write_summary(const RunSummary& s, const std::filesystem::path& path);

}  // namespace thermoseed::verify

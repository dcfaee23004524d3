#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "support.hpp"
#include "thermoseed/verify.hpp"

using namespace thermoseed;
using namespace thermoseed::verify;
using pcnn::InputKind;
using thermoseed::testing::random_window;
using thermoseed::testing::tiny_net;
using thermoseed::testing::tiny_pcnn;

namespace {

const rc::RcParams kRc{8.0e-6, 1.6e-4, 2.0e-4, 1.0e-5};

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("thermoseed_verify_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

training::EvalReport constant_report(double level, std::size_t windows = 3) {
  std::vector<std::vector<double>> pred(windows, std::vector<double>(288, level));
  std::vector<std::vector<double>> truth(windows, std::vector<double>(288, 0.0));
  return training::summarize(pred, truth);
}

// A small January experiment shared by the training-based tests.
const training::Experiment& small_experiment() {
  static const training::Experiment ex = [] {
    synth::BuildingScenario sc;
    sc.duration_days = 14;
    const auto sim = synth::simulate_building(sc, 2);
    ts::PreprocessConfig pre;
    pre.room_flows = sc.room_flows;
    training::WindowConfig wc;
    wc.max_horizon = 96;
    wc.stride = 16;
    return training::prepare_experiment(sim.measured, pre, wc);
  }();
  return ex;
}

}  // namespace

TEST(Consistency, FreshModelsPassExactly) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const pcnn::Model m = tiny_pcnn(seed);
    std::mt19937_64 rng(40 + seed);
    const pcnn::Window w = random_window(12 + 288, rng, seed != 1);
    const ConsistencyReport r = check_consistency(m, w, 50, Mode::kExact, 1e-6, seed);
    EXPECT_EQ(r.records.size(), 150u);
    EXPECT_TRUE(r.pass) << "max rel error " << r.max_rel_error;
    EXPECT_EQ(r.failures, 0u);
    EXPECT_LT(r.max_rel_error, 1e-6);
    for (const auto& rec : r.records) {
      EXPECT_GE(rec.j, 1u);
      EXPECT_LE(rec.j, rec.i);
      EXPECT_LE(rec.i, w.horizon());
    }
  }
}

TEST(Consistency, NegatedLossCoefficientFails) {
  pcnn::Model m = tiny_pcnn(1);
  m.physics.tilde[1] = -1.0;
  std::mt19937_64 rng(41);
  const pcnn::Window w = random_window(60, rng);
  const ConsistencyReport r = check_consistency(m, w, 20, Mode::kExact);
  EXPECT_FALSE(r.conditions.b_positive);
  EXPECT_FALSE(r.pass);
  EXPECT_GT(r.failures, 0u);
}

TEST(Consistency, FirstStepControlSensitivityIsTheGain) {
  const pcnn::Model m = tiny_pcnn(2);
  std::mt19937_64 rng(42);
  const pcnn::Window w = random_window(13, rng);
  const ConsistencyReport r = check_consistency(m, w, 1, Mode::kExact);
  ASSERT_EQ(r.records.size(), 3u);
  EXPECT_EQ(r.records[0].input, InputKind::kControl);
  EXPECT_EQ(r.records[0].j, 1u);
  EXPECT_EQ(r.records[0].i, 1u);
  EXPECT_EQ(r.records[0].analytic, m.physics.a());
  EXPECT_EQ(r.records[1].analytic, m.physics.b());
  EXPECT_EQ(r.records[2].analytic, m.physics.c());
  EXPECT_TRUE(r.pass);
}

TEST(Consistency, ModesAndModelKinds) {
  std::mt19937_64 rng(43);
  const pcnn::Window w = random_window(60, rng);
  const pcnn::Model learned = tiny_pcnn(3, pcnn::learned_transform(4, 1));
  EXPECT_THROW(check_consistency(learned, w, 5, Mode::kExact), std::invalid_argument);
  EXPECT_TRUE(check_consistency(learned, w, 20, Mode::kSign).pass);

  const pcnn::Model lstm = pcnn::make_plain_lstm(tiny_net(), 1);
  EXPECT_THROW(check_consistency(lstm, w, 5, Mode::kExact), std::invalid_argument);
  const ConsistencyReport r = check_consistency(lstm, w, 10, Mode::kSign);
  EXPECT_EQ(r.records.size(), 30u);
  EXPECT_TRUE(r.conditions.all());
  for (const auto& rec : r.records) {
    EXPECT_TRUE(std::isnan(rec.analytic));
    EXPECT_TRUE(std::isfinite(rec.numeric));
  }
}

TEST(Consistency, MergeIsConjunctionAndFileLayout) {
  std::mt19937_64 rng(44);
  const pcnn::Window w = random_window(40, rng);
  pcnn::Model bad = tiny_pcnn(1);
  bad.physics.tilde[2] = -1.0;
  const std::vector<ConsistencyReport> reports{check_consistency(tiny_pcnn(1), w, 5, Mode::kExact),
                                               check_consistency(bad, w, 5, Mode::kExact)};
  EXPECT_TRUE(reports[0].pass);
  const ConsistencyReport merged = merge(reports);
  EXPECT_FALSE(merged.pass);
  EXPECT_FALSE(merged.conditions.c_positive);
  EXPECT_EQ(merged.records.size(), 30u);
  EXPECT_TRUE(merge(std::span(reports).first(1)).pass);
  EXPECT_FALSE(merge({}).pass);

  const auto dir = scratch("consistency");
  write_consistency(merged, dir / "consistency.csv");
  const auto lines = read_lines(dir / "consistency.csv");
  ASSERT_EQ(lines.size(), 31u);
  EXPECT_EQ(lines[0], "input,j,i,analytic,numeric,abs_error,rel_error,pass");
  EXPECT_EQ(lines[1].substr(0, 2), "u,");
  std::filesystem::remove_all(dir);
}

TEST(MagnitudeSplit, HandExamples) {
  const std::vector<double> a{1.0, 4.0, 2.0, 3.0};
  EXPECT_EQ(magnitude_split(a), (std::vector<bool>{false, true, false, false}));
  const std::vector<double> ties{1.0, 1.0, 1.0, 1.0};
  EXPECT_EQ(magnitude_split(ties), (std::vector<bool>{true, true, false, false}));
  const std::vector<double> zeros{0.0, 0.0, 0.0};
  EXPECT_EQ(magnitude_split(zeros), (std::vector<bool>{false, false, false}));
}

TEST(MagnitudeSplit, HalvesBalanceOnRealisticControls) {
  std::mt19937_64 rng(45);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> u(96);
    for (auto& v : u) v = u01(rng) < 0.5 ? 0.0 : 0.1 + 0.7 * u01(rng);
    const auto first = magnitude_split(u);
    double e1 = 0.0, e2 = 0.0;
    double min_first = 1e9, max_second = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
      (first[k] ? e1 : e2) += u[k];
      if (first[k]) min_first = std::min(min_first, u[k]);
      if (!first[k]) max_second = std::max(max_second, u[k]);
    }
    EXPECT_LT(std::abs(e1 - e2) / (e1 + e2), 0.1);
    EXPECT_GE(min_first, max_second);
  }
}

TEST(Ablation, DifferenceCurvesAndOrdering) {
  const pcnn::Model m = tiny_pcnn(5);
  std::mt19937_64 rng(46);
  pcnn::Window w = random_window(12 + 96, rng);
  for (std::size_t r = w.warm - 1; r < w.warm + 4; ++r) w.u[r] = 0.0;
  w.u[w.warm + 4] = 0.6;
  const AblationRun run = run_control_ablation(m, kRc, w, training::SiteGeometry{});
  EXPECT_TRUE(run.pcnn_ordering);
  EXPECT_TRUE(run.rc_ordering);
  for (double d : run.pcnn_difference.at(Variant::kNone)) EXPECT_EQ(d, 0.0);
  for (double d : run.rc_difference.at(Variant::kNone)) EXPECT_EQ(d, 0.0);
  // Zero-based horizon index s is driven by controls up to row warm + s - 1.
  for (std::size_t s = 0; s < 5; ++s) {
    EXPECT_NEAR(run.pcnn_difference.at(Variant::kFull)[s], 0.0, 1e-12);
    EXPECT_NEAR(run.rc_difference.at(Variant::kFull)[s], 0.0, 1e-12);
  }
  EXPECT_GT(run.pcnn_difference.at(Variant::kFull)[5], 0.0);
  EXPECT_LT(run.rc_closed_form_error, 1e-10);
  EXPECT_LT(run.half_imbalance(), 0.1);
  EXPECT_NEAR(run.energy_first + run.energy_second, run.energy_full, 1e-12);
  EXPECT_EQ(run.pcnn.at(Variant::kFull).size(), w.horizon());

  // The PCNN part is linear in the control: halves add up to the full curve.
  for (std::size_t s = 0; s < w.horizon(); ++s) {
    EXPECT_NEAR(run.pcnn_difference.at(Variant::kFirstHalf)[s] + run.pcnn_difference.at(Variant::kSecondHalf)[s],
                run.pcnn_difference.at(Variant::kFull)[s], 1e-9);
  }

  const auto dir = scratch("ablation");
  write_ablation(run, dir, "window0");
  const auto lines = read_lines(dir / "window0_differences.csv");
  ASSERT_EQ(lines.size(), w.horizon() + 1);
  EXPECT_EQ(lines[0],
            "step,pcnn_full,pcnn_first_half,pcnn_second_half,pcnn_none,rc_full,rc_first_half,rc_second_half,rc_none");
  EXPECT_TRUE(std::filesystem::exists(dir / "window0_trajectories.csv"));
  std::filesystem::remove_all(dir);
}

TEST(Ablation, RejectsCoolingWindowsAndFlagsBreaches) {
  std::mt19937_64 rng(47);
  const pcnn::Window cool = random_window(60, rng, false);
  EXPECT_THROW(run_control_ablation(tiny_pcnn(1), kRc, cool, {}), std::invalid_argument);
  pcnn::Model inverted = tiny_pcnn(1);
  inverted.physics.tilde[0] = -1.0;
  const pcnn::Window heat = random_window(60, rng);
  EXPECT_THROW(run_control_ablation(inverted, kRc, heat, {}), ConsistencyBreach);
  const AblationRun run = run_control_ablation(inverted, kRc, heat, {}, false);
  EXPECT_FALSE(run.pcnn_ordering);
  EXPECT_TRUE(run.rc_ordering);
}

TEST(ErrorPropagation, TablesAndDiagonalPairs) {
  const training::EvalReport r = constant_report(0.5);
  const std::vector<NamedReport> reports{{"pcnn", r}, {"pcnn_copy", r}};
  const auto dir = scratch("propagation");
  error_propagation(reports, dir);
  const auto markers = read_lines(dir / "marker_table.csv");
  ASSERT_EQ(markers.size(), 7u);
  EXPECT_EQ(markers[0], "step,hours,pcnn,pcnn_copy");
  EXPECT_EQ(markers[1].substr(0, 4), "4,1,");
  for (const auto& line : read_lines(dir / "mae_pairs.csv")) {
    if (line.rfind("window_id", 0) == 0) continue;
    std::stringstream ss(line);
    std::string id, a, b;
    std::getline(ss, id, ',');
    std::getline(ss, a, ',');
    std::getline(ss, b, ',');
    EXPECT_EQ(a, b);
  }
  EXPECT_TRUE(std::filesystem::exists(dir / "pcnn_steps.csv"));
  const std::vector<NamedReport> mismatched{{"a", r}, {"b", constant_report(0.5, 2)}};
  EXPECT_THROW(error_propagation(mismatched, dir), std::invalid_argument);
  EXPECT_THROW(error_propagation({}, dir), std::invalid_argument);
  std::filesystem::remove_all(dir);
}

TEST(Aggregate, MedianAndMarkers) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 3.0, 2.0}), 2.5);
  EXPECT_THROW(median({}), std::invalid_argument);
  const std::vector<training::EvalReport> reports{constant_report(0.9), constant_report(0.2), constant_report(0.4)};
  const auto agg = aggregate_markers(reports);
  ASSERT_EQ(agg.size(), 6u);
  EXPECT_EQ(agg.back().step, 288u);
  EXPECT_NEAR(agg.back().median, 0.4, 1e-15);
  EXPECT_NEAR(agg.back().min, 0.2, 1e-15);
  EXPECT_NEAR(agg.back().max, 0.9, 1e-15);
}

TEST(Reports, LossTableAndSummary) {
  const auto dir = scratch("reports");
  const std::vector<LossRow> rows{{"PCNN", "0", 1e-3, 2e-3}, {"PCNN", "mean", 1e-3, 2e-3}};
  write_loss_table(rows, dir / "loss.csv");
  const auto lines = read_lines(dir / "loss.csv");
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0], "model,seed,train_loss,validation_loss");
  EXPECT_EQ(lines[2].substr(0, 10), "PCNN,mean,");

  RunSummary s;
  s.run_id = "run-1";
  s.config_hash = "abc";
  s.metrics["mae_96"] = 0.75;
  s.consistency["exact"] = true;
  write_summary(s, dir / "summary.json");
  std::ifstream in(dir / "summary.json");
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j.at("run_id"), "run-1");
  EXPECT_EQ(j.at("config_hash"), "abc");
  EXPECT_EQ(j.at("metrics").at("mae_96"), 0.75);
  EXPECT_EQ(j.at("consistency").at("exact"), true);
  std::filesystem::remove_all(dir);
}

TEST(Experiments, PlainLstmAblationTableLayout) {
  const auto& ex = small_experiment();
  training::TrainConfig cfg;
  cfg.epochs = 1;
  const std::vector<std::uint64_t> seeds{0, 1};
  const AblationTable t = run_ablation_lstm(ex, seeds, tiny_net(), cfg);
  ASSERT_EQ(t.runs.size(), 2u);
  ASSERT_EQ(t.rows.size(), 6u);
  EXPECT_EQ(t.rows[0].model, "PCNN");
  EXPECT_EQ(t.rows[2].seed, "mean");
  EXPECT_EQ(t.rows[3].model, "LSTM");
  EXPECT_EQ(t.rows[5].seed, "mean");
  EXPECT_NEAR(t.rows[2].validation_loss, 0.5 * (t.rows[0].validation_loss + t.rows[1].validation_loss), 1e-15);
  for (const auto& run : t.runs) {
    EXPECT_EQ(run.pcnn.best.kind, pcnn::ModelKind::kPcnn);
    EXPECT_EQ(run.lstm.best.kind, pcnn::ModelKind::kPlainLstm);
  }
}

TEST(Experiments, MultiSeedIsReproducible) {
  const auto& ex = small_experiment();
  training::TrainConfig cfg;
  cfg.epochs = 1;
  const std::vector<std::uint64_t> seeds{0, 1, 2};
  const MultiSeedResult r = multi_seed(ex, seeds, tiny_net(), cfg);
  ASSERT_EQ(r.reports.size(), 3u);
  EXPECT_FALSE(r.aggregate.empty());
  for (const auto& a : r.aggregate) {
    std::vector<double> v;
    for (const auto& rep : r.reports) v.push_back(rep.marker(a.step));
    EXPECT_EQ(a.median, median(v));
  }
  const std::vector<std::uint64_t> again{0};
  const MultiSeedResult r0 = multi_seed(ex, again, tiny_net(), cfg);
  EXPECT_EQ(r0.reports[0].window_mae, r.reports[0].window_mae);
  EXPECT_EQ(r0.reports[0].mean_error, r.reports[0].mean_error);
}

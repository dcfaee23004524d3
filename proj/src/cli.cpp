#include "thermoseed/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "thermoseed/pcnn.hpp"
#include "thermoseed/rc.hpp"
#include "thermoseed/synthbuild.hpp"
#include "thermoseed/verify.hpp"

namespace thermoseed::cli {

namespace fs = std::filesystem;

namespace {

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(static_cast<std::size_t>(std::stoull(item)));
  }
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (std::size_t v : parse_sizes(s)) out.push_back(v);
  if (out.empty()) throw std::invalid_argument("empty seed list");
  return out;
}

// Evenly spaced picks, optionally restricted to heating windows.
std::vector<const pcnn::Window*> pick_windows(std::span<const pcnn::Window> all, std::size_t count,
                                              bool heating_only) {
  std::vector<const pcnn::Window*> pool;
  for (const auto& w : all) {
    if (!heating_only || w.heating) pool.push_back(&w);
  }
  if (pool.empty()) throw std::invalid_argument("no eligible validation windows");
  count = std::min(count, pool.size());
  std::vector<const pcnn::Window*> out;
  for (std::size_t k = 0; k < count; ++k) out.push_back(pool[k * pool.size() / count]);
  return out;
}

class Workdir {
 public:
  explicit Workdir(fs::path root) : root_(std::move(root)) {}
  fs::path operator()(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() ? path : root_ / path;
  }

 private:
  fs::path root_;
};

void write_curve(const training::TrainResult& r, const fs::path& path) {
  std::ofstream out(path);
  out << "epoch,lr,train_loss,validation_loss,conditions_hold\n";
  for (const auto& e : r.curve) {
    out << e.epoch << ',' << format_double(e.lr) << ',' << format_double(e.train_loss) << ','
        << format_double(e.validation_loss) << ',' << (e.conditions_hold ? 1 : 0) << '\n';
  }
}

void add_markers(verify::RunSummary& s, const std::string& prefix, const training::EvalReport& r) {
  for (const auto& [step, mae] : r.marker_mae) s.metrics[prefix + "mae_" + std::to_string(step)] = mae;
}

}  // namespace

KeyValueFile config_to_kv(const RunConfig& c) {
  KeyValueFile kv;
  kv.set("data", c.data);
  kv.set("output", c.output);
  kv.set("model", c.model);
  kv.set("delete_streaks", c.delete_streaks ? "true" : "false");
  kv.set("clip", c.clip ? "true" : "false");
  kv.set("smooth", c.smooth ? "true" : "false");
  kv.set("interpolate", c.interpolate ? "true" : "false");
  kv.set_int("warm", static_cast<long long>(c.windows.warm));
  kv.set_int("min_horizon", static_cast<long long>(c.windows.min_horizon));
  kv.set_int("max_horizon", static_cast<long long>(c.windows.max_horizon));
  kv.set_int("stride", static_cast<long long>(c.windows.stride));
  kv.set("encoder", join_sizes(c.net.encoder));
  kv.set_int("lstm_layers", static_cast<long long>(c.net.lstm_layers));
  kv.set_int("lstm_hidden", static_cast<long long>(c.net.lstm_hidden));
  kv.set("decoder", join_sizes(c.net.decoder));
  kv.set("output_init_scale", c.net.output_init_scale);
  kv.set_int("epochs", c.epochs);
  kv.set_int("batch", static_cast<long long>(c.batch));
  kv.set("base_lr", c.base_lr);
  kv.set("include_warm_loss", c.include_warm_loss ? "true" : "false");
  std::vector<std::size_t> seeds(c.seeds.begin(), c.seeds.end());
  kv.set("seeds", join_sizes(seeds));
  kv.set_int("seed", static_cast<long long>(c.seed));
  return kv;
}

RunConfig config_from_kv(const KeyValueFile& kv) {
  static const std::set<std::string, std::less<>> known = {
      "data",       "output",      "model",       "delete_streaks",    "clip",
      "smooth",     "interpolate", "warm",        "min_horizon",       "max_horizon",
      "stride",     "encoder",     "lstm_layers", "lstm_hidden",       "decoder",
      "output_init_scale", "epochs", "batch",     "base_lr",           "include_warm_loss",
      "seeds",      "seed",        "config_hash"};
  for (const auto& entry : kv.entries()) {
    if (!known.contains(entry.first)) throw std::invalid_argument("unknown config key: " + entry.first);
  }
  RunConfig c;
  c.data = kv.get("data", c.data);
  c.output = kv.get("output", c.output);
  c.model = kv.get("model", c.model);
  if (c.model != "pcnn" && c.model != "lstm") throw std::invalid_argument("model must be pcnn or lstm");
  c.delete_streaks = kv.get_bool("delete_streaks", c.delete_streaks);
  c.clip = kv.get_bool("clip", c.clip);
  c.smooth = kv.get_bool("smooth", c.smooth);
  c.interpolate = kv.get_bool("interpolate", c.interpolate);
  c.windows.warm = static_cast<std::size_t>(kv.get_int("warm", static_cast<long long>(c.windows.warm)));
  c.windows.min_horizon =
      static_cast<std::size_t>(kv.get_int("min_horizon", static_cast<long long>(c.windows.min_horizon)));
  c.windows.max_horizon =
      static_cast<std::size_t>(kv.get_int("max_horizon", static_cast<long long>(c.windows.max_horizon)));
  c.windows.stride = static_cast<std::size_t>(kv.get_int("stride", static_cast<long long>(c.windows.stride)));
  if (kv.contains("encoder")) c.net.encoder = parse_sizes(kv.get("encoder"));
  c.net.lstm_layers =
      static_cast<std::size_t>(kv.get_int("lstm_layers", static_cast<long long>(c.net.lstm_layers)));
  c.net.lstm_hidden =
      static_cast<std::size_t>(kv.get_int("lstm_hidden", static_cast<long long>(c.net.lstm_hidden)));
  if (kv.contains("decoder")) c.net.decoder = parse_sizes(kv.get("decoder"));
  c.net.output_init_scale = kv.get_double("output_init_scale", c.net.output_init_scale);
  c.epochs = static_cast<int>(kv.get_int("epochs", c.epochs));
  c.batch = static_cast<std::size_t>(kv.get_int("batch", static_cast<long long>(c.batch)));
  c.base_lr = kv.get_double("base_lr", c.base_lr);
  c.include_warm_loss = kv.get_bool("include_warm_loss", c.include_warm_loss);
  if (kv.contains("seeds")) c.seeds = parse_seeds(kv.get("seeds"));
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(c.seed)));
  if (c.epochs < 1 || c.batch < 1 || c.windows.warm < 1 || c.windows.stride < 1 ||
      c.windows.min_horizon < 1 || c.windows.max_horizon < c.windows.min_horizon || c.base_lr <= 0.0) {
    throw std::invalid_argument("invalid run config");
  }
  return c;
}

std::string config_hash(const RunConfig& c) { return content_hash(config_to_kv(c).to_string()); }

void write_resolved_config(const RunConfig& c, const fs::path& dir) {
  fs::create_directories(dir);
  KeyValueFile kv = config_to_kv(c);
  kv.set("config_hash", config_hash(c));
  kv.write(dir / "config.cfg", "thermoseed run config v1");
}

LoadedData load_experiment(const RunConfig& c, const fs::path& data_dir) {
  const synth::BuildingScenario scenario = synth::load_scenario(data_dir / "scenario.cfg");
  const ts::TimeSeriesTable raw = synth::load_raw_dataset(data_dir, scenario.room_flows.size());
  ts::PreprocessConfig pre;
  pre.delete_streaks = c.delete_streaks;
  pre.clip = c.clip;
  pre.smooth = c.smooth;
  pre.interpolate = c.interpolate;
  pre.room_flows = scenario.room_flows;
  LoadedData out;
  training::WindowConfig wc = c.windows;
  wc.heating_months = scenario.heating_months;
  out.experiment = training::prepare_experiment(raw, pre, wc);
  out.site.latitude = scenario.latitude;
  out.site.window_orientation = scenario.window_orientation;
  return out;
}

int run(int argc, const char* const* argv) {
  CLI::App app{"thermoseed: physically consistent building temperature forecasting"};
  app.require_subcommand(1);
  std::string workdir = ".";
  std::string config_path;
  app.add_option("--workdir", workdir, "root for every relative path");
  app.add_option("--config", config_path, "run config (key-value file)");

  std::string scenario_path, data_opt, out_opt, checkpoint, rc_path, mode = "exact", kind = "control";
  std::string seeds_opt, model_opt;
  std::uint64_t seed = 0;
  int epochs = 0;
  std::size_t count = 10, pairs = 50;
  double tolerance = 1e-6;
  std::vector<std::string> named;
  std::vector<CLI::Option*> seed_opts;

  auto* generate = app.add_subcommand("generate", "simulate a synthetic building dataset");
  generate->add_option("--scenario", scenario_path, "scenario file; defaults apply when absent");
  seed_opts.push_back(generate->add_option("--seed", seed, "simulation seed"));
  generate->add_option("--out", out_opt, "dataset directory")->required();

  auto* preprocess = app.add_subcommand("preprocess", "clean, subsample and window a dataset");
  preprocess->add_option("--data", data_opt, "dataset directory");
  preprocess->add_option("--out", out_opt, "output directory")->required();

  auto* fit = app.add_subcommand("fit-rc", "identify the RC baseline on the training windows");
  fit->add_option("--data", data_opt, "dataset directory");
  fit->add_option("--out", out_opt, "output directory")->required();

  auto* train = app.add_subcommand("train", "train a PCNN or the plain LSTM");
  train->add_option("--data", data_opt, "dataset directory");
  train->add_option("--out", out_opt, "output directory")->required();
  seed_opts.push_back(train->add_option("--seed", seed, "initialization and batching seed"));
  train->add_option("--model", model_opt, "pcnn or lstm")->check(CLI::IsMember({"pcnn", "lstm"}));
  train->add_option("--epochs", epochs, "override the configured epoch count")->check(CLI::PositiveNumber);

  auto* evaluate = app.add_subcommand("evaluate", "forecast errors on the validation windows");
  evaluate->add_option("--data", data_opt, "dataset directory");
  evaluate->add_option("--out", out_opt, "output directory")->required();
  auto* ev_ckpt = evaluate->add_option("--checkpoint", checkpoint, "model checkpoint");
  auto* ev_rc = evaluate->add_option("--rc", rc_path, "RC parameter file");
  ev_ckpt->excludes(ev_rc);

  auto* consistency = app.add_subcommand("verify-consistency", "check sensitivity identities");
  consistency->add_option("--data", data_opt, "dataset directory");
  consistency->add_option("--out", out_opt, "output directory")->required();
  consistency->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  consistency->add_option("--windows", count, "validation windows to check")->check(CLI::PositiveNumber);
  consistency->add_option("--pairs", pairs, "(j, i) pairs per window")->check(CLI::PositiveNumber);
  consistency->add_option("--mode", mode, "exact or sign")->check(CLI::IsMember({"exact", "sign"}));
  consistency->add_option("--tolerance", tolerance, "relative tolerance in exact mode");
  seed_opts.push_back(consistency->add_option("--seed", seed, "pair sampling seed"));

  auto* ablate = app.add_subcommand("ablate", "control ablation or the plain-LSTM comparison");
  ablate->add_option("--kind", kind, "control or lstm")->check(CLI::IsMember({"control", "lstm"}));
  ablate->add_option("--data", data_opt, "dataset directory");
  ablate->add_option("--out", out_opt, "output directory")->required();
  ablate->add_option("--checkpoint", checkpoint, "PCNN checkpoint (control)");
  ablate->add_option("--rc", rc_path, "RC parameter file (control)");
  ablate->add_option("--windows", count, "heating windows (control)")->check(CLI::PositiveNumber);
  ablate->add_option("--seeds", seeds_opt, "comma-separated seeds (lstm)");

  auto* report = app.add_subcommand("report", "model-vs-model error propagation tables");
  report->add_option("--data", data_opt, "dataset directory");
  report->add_option("--out", out_opt, "output directory")->required();
  report->add_option("--model", named, "name=checkpoint, repeatable")->required();
  report->add_option("--rc", rc_path, "RC parameter file, reported as RC");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const Workdir at(workdir);
    RunConfig cfg;
    if (!config_path.empty()) cfg = config_from_kv(KeyValueFile::read(at(config_path)));
    if (!data_opt.empty()) cfg.data = data_opt;
    if (!model_opt.empty()) cfg.model = model_opt;
    if (epochs > 0) cfg.epochs = epochs;
    if (!seeds_opt.empty()) cfg.seeds = parse_seeds(seeds_opt);
    for (const auto* o : seed_opts) {
      if (o->count() > 0) cfg.seed = seed;
    }
    seed = cfg.seed;
    const fs::path out = at(out_opt);

    if (*generate) {
      const synth::BuildingScenario s =
          scenario_path.empty() ? synth::BuildingScenario{} : synth::load_scenario(at(scenario_path));
      synth::validate(s);
      synth::make_dataset(s, seed, out);
      std::cout << "dataset written to " << out.string() << '\n';
      return kExitOk;
    }

    write_resolved_config(cfg, out);
    const LoadedData loaded = load_experiment(cfg, at(cfg.data));
    const training::Experiment& ex = loaded.experiment;
    verify::RunSummary summary;
    summary.config_hash = config_hash(cfg);
    int status = kExitOk;

    if (*preprocess) {
      ts::write_csv(ex.data.clean_1min, out / "clean_1min.csv");
      ts::write_csv(ex.data.model_15min, out / "model_15min.csv");
      ex.scaling.normalizer.save(out / "normalizer.cfg");
      summary.run_id = "preprocess";
      summary.metrics["train_windows"] = static_cast<double>(ex.train.size());
      summary.metrics["validation_windows"] = static_cast<double>(ex.validation.size());
      summary.metrics["excluded_windows"] = static_cast<double>(ex.excluded);
      summary.metrics["power_max"] = ex.scaling.power_max;
    } else if (*fit) {
      const rc::FitResult r = training::fit_rc(ex, loaded.site);
      rc::save(r.params, out / "rc.cfg", r.condition_number);
      summary.run_id = "fit-rc";
      summary.metrics = {{"a", r.params.a},          {"b", r.params.b},
                         {"c", r.params.c},          {"e1", r.params.e1},
                         {"condition_number", r.condition_number}, {"rows", static_cast<double>(r.rows)}};
      const training::EvalReport ev = training::evaluate_rc(r.params, ex.validation, ex.scaling, loaded.site);
      training::write_report(ev, out, "rc");
      add_markers(summary, "", ev);
      summary.consistency["physically_plausible"] = rc::physically_plausible(r.params);
    } else if (*train) {
      pcnn::Model model = cfg.model == "pcnn" ? training::init_pcnn(ex, cfg.net, seed)
                                              : training::init_plain_lstm(ex, cfg.net, seed);
      training::TrainConfig tc;
      tc.epochs = cfg.epochs;
      tc.batch = cfg.batch;
      tc.seed = seed;
      tc.base_lr = cfg.base_lr;
      tc.include_warm_loss = cfg.include_warm_loss;
      tc.on_epoch = [](int epoch, double tl, double vl) {
        std::cerr << "epoch " << epoch << " train " << tl << " validation " << vl << '\n';
      };
      const training::TrainResult result = training::train(std::move(model), ex.train, ex.validation, tc);
      pcnn::save_model(result.best, out / "checkpoint.cfg");
      write_curve(result, out / "metrics.csv");
      const training::EvalReport ev = training::evaluate(result.best, ex.validation);
      training::write_report(ev, out, cfg.model);
      summary.run_id = "train-" + cfg.model + "-seed" + std::to_string(seed);
      summary.metrics["best_epoch"] = result.best_epoch;
      summary.metrics["best_validation_loss"] = result.best_validation_loss;
      add_markers(summary, "", ev);
      const bool exact = cfg.model == "pcnn";
      std::vector<verify::ConsistencyReport> reports;
      for (const auto* w : pick_windows(ex.validation, 3, false)) {
        reports.push_back(verify::check_consistency(result.best, *w, pairs,
                                                    exact ? verify::Mode::kExact : verify::Mode::kSign));
      }
      const verify::ConsistencyReport merged = verify::merge(reports);
      verify::write_consistency(merged, out / "consistency.csv");
      summary.consistency["sensitivities"] = merged.pass;
      if (exact) {
        summary.consistency["conditions"] = merged.conditions.all();
        if (!merged.pass) status = kExitFailure;
      }
    } else if (*evaluate) {
      training::EvalReport ev;
      if (!checkpoint.empty()) {
        ev = training::evaluate(pcnn::load_model(at(checkpoint)), ex.validation);
        summary.run_id = "evaluate-checkpoint";
      } else if (!rc_path.empty()) {
        ev = training::evaluate_rc(rc::load(at(rc_path)), ex.validation, ex.scaling, loaded.site);
        summary.run_id = "evaluate-rc";
      } else {
        std::cerr << "evaluate needs --checkpoint or --rc\n";
        return kExitUsage;
      }
      training::write_report(ev, out, "eval");
      add_markers(summary, "", ev);
    } else if (*consistency) {
      const pcnn::Model model = pcnn::load_model(at(checkpoint));
      const verify::Mode m = mode == "exact" ? verify::Mode::kExact : verify::Mode::kSign;
      std::vector<verify::ConsistencyReport> reports;
      std::uint64_t s = seed;
      for (const auto* w : pick_windows(ex.validation, count, false)) {
        reports.push_back(verify::check_consistency(model, *w, pairs, m, tolerance, s++));
      }
      const verify::ConsistencyReport merged = verify::merge(reports);
      verify::write_consistency(merged, out / "consistency.csv");
      summary.run_id = "verify-consistency";
      summary.metrics["checks"] = static_cast<double>(merged.records.size());
      summary.metrics["failures"] = static_cast<double>(merged.failures);
      summary.metrics["max_rel_error"] = merged.max_rel_error;
      summary.consistency["pass"] = merged.pass;
      summary.consistency["conditions"] = merged.conditions.all();
      if (!merged.pass) status = kExitFailure;
    } else if (*ablate && kind == "control") {
      if (checkpoint.empty() || rc_path.empty()) {
        std::cerr << "control ablation needs --checkpoint and --rc\n";
        return kExitUsage;
      }
      const pcnn::Model model = pcnn::load_model(at(checkpoint));
      const rc::RcParams rcp = rc::load(at(rc_path));
      summary.run_id = "ablate-control";
      bool ordering = true;
      std::size_t k = 0;
      for (const auto* w : pick_windows(ex.validation, count, true)) {
        const verify::AblationRun r = verify::run_control_ablation(model, rcp, *w, loaded.site, false);
        verify::write_ablation(r, out, "window" + std::to_string(k));
        const bool ok = r.pcnn_ordering && r.rc_ordering;
        ordering = ordering && ok;
        summary.metrics["window" + std::to_string(k) + "_half_imbalance"] = r.half_imbalance();
        summary.metrics["window" + std::to_string(k) + "_rc_closed_form_error"] = r.rc_closed_form_error;
        ++k;
      }
      summary.consistency["ordering"] = ordering;
      if (!ordering) status = kExitFailure;
    } else if (*ablate) {
      training::TrainConfig tc;
      tc.epochs = cfg.epochs;
      tc.batch = cfg.batch;
      tc.base_lr = cfg.base_lr;
      tc.include_warm_loss = cfg.include_warm_loss;
      const verify::AblationTable table = verify::run_ablation_lstm(ex, cfg.seeds, cfg.net, tc);
      verify::write_loss_table(table.rows, out / "loss_table.csv");
      summary.run_id = "ablate-lstm";
      for (const auto& row : table.rows) {
        summary.metrics[row.model + "_" + row.seed + "_validation_loss"] = row.validation_loss;
      }
      for (const auto& run : table.runs) {
        const verify::ConsistencyReport rep =
            verify::check_consistency(run.lstm.best, *pick_windows(ex.validation, 1, false)[0], pairs,
                                      verify::Mode::kSign);
        summary.consistency["lstm_seed" + std::to_string(run.seed) + "_sign"] = rep.pass;
        summary.consistency["pcnn_seed" + std::to_string(run.seed) + "_conditions"] =
            pcnn::check_conditions(run.pcnn.best.physics).all();
      }
    } else if (*report) {
      std::vector<verify::NamedReport> reports;
      std::vector<training::EvalReport> pcnn_reports;
      for (const auto& item : named) {
        const std::size_t eq = item.find('=');
        if (eq == std::string::npos || eq == 0) {
          std::cerr << "--model expects name=checkpoint\n";
          return kExitUsage;
        }
        const pcnn::Model model = pcnn::load_model(at(item.substr(eq + 1)));
        reports.push_back({item.substr(0, eq), training::evaluate(model, ex.validation)});
        if (model.kind == pcnn::ModelKind::kPcnn) pcnn_reports.push_back(reports.back().report);
      }
      if (!rc_path.empty()) {
        reports.push_back(
            {"RC", training::evaluate_rc(rc::load(at(rc_path)), ex.validation, ex.scaling, loaded.site)});
      }
      verify::error_propagation(reports, out);
      summary.run_id = "report";
      for (const auto& r : reports) add_markers(summary, r.name + "_", r.report);
      for (const auto& agg : verify::aggregate_markers(pcnn_reports)) {
        summary.metrics["pcnn_median_mae_" + std::to_string(agg.step)] = agg.median;
      }
    }
    verify::write_summary(summary, out / "summary.json");
    return status;
  } catch (const verify::ConsistencyBreach& e) {
    std::cerr << "consistency failure: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace thermoseed::cli

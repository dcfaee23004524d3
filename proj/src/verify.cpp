#include "thermoseed/verify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include <json.hpp>

#include "thermoseed/kvfile.hpp"

namespace thermoseed::verify {

using pcnn::InputKind;
using pcnn::Window;

ConsistencyReport check_consistency(const pcnn::Model& model, const Window& window, std::size_t pairs,
                                    Mode mode, double tolerance, std::uint64_t seed) {
  const bool physical = model.kind == pcnn::ModelKind::kPcnn;
  if (mode == Mode::kExact && (!physical || model.g.kind != pcnn::ControlKind::kIdentity)) {
    throw std::invalid_argument("exact consistency mode needs a PCNN with the identity control transform");
  }
  pcnn::validate_window(window);
  std::mt19937_64 rng(seed);
  std::vector<pcnn::SensitivityQuery> queries;
  for (std::size_t p = 0; p < pairs; ++p) {
    const std::size_t i = std::uniform_int_distribution<std::size_t>(1, window.horizon())(rng);
    const std::size_t j = std::uniform_int_distribution<std::size_t>(1, i)(rng);
    for (InputKind k : {InputKind::kControl, InputKind::kOutside, InputKind::kNeighbor}) {
      queries.push_back({k, j, i});
    }
  }
  const std::vector<double> numeric = pcnn::numeric_sensitivities(model, window, queries);

  ConsistencyReport r;
  if (physical) {
    r.conditions = pcnn::check_conditions(model.physics);
  } else {
    r.conditions = {true, true, true, true, true};
  }
  for (std::size_t q = 0; q < queries.size(); ++q) {
    CheckRecord rec;
    rec.input = queries[q].input;
    rec.j = queries[q].j;
    rec.i = queries[q].i;
    rec.numeric = numeric[q];
    rec.analytic = physical ? pcnn::analytic_sensitivity(model, window, queries[q])
                            : std::numeric_limits<double>::quiet_NaN();
    if (physical) {
      rec.abs_error = std::abs(rec.numeric - rec.analytic);
      rec.rel_error = rec.abs_error / std::max(std::abs(rec.analytic), std::numeric_limits<double>::min());
      r.max_rel_error = std::max(r.max_rel_error, rec.rel_error);
    }
    rec.pass = rec.numeric > 0.0;
    if (mode == Mode::kExact) rec.pass = rec.pass && rec.analytic > 0.0 && rec.rel_error < tolerance;
    if (!rec.pass) ++r.failures;
    r.records.push_back(rec);
  }
  r.pass = r.failures == 0 && r.conditions.all();
  return r;
}

ConsistencyReport merge(std::span<const ConsistencyReport> reports) {
  ConsistencyReport out;
  out.conditions = {true, true, true, true, true};
  for (const auto& r : reports) {
    out.records.insert(out.records.end(), r.records.begin(), r.records.end());
    out.failures += r.failures;
    out.max_rel_error = std::max(out.max_rel_error, r.max_rel_error);
    out.conditions.a_positive &= r.conditions.a_positive;
    out.conditions.b_positive &= r.conditions.b_positive;
    out.conditions.c_positive &= r.conditions.c_positive;
    out.conditions.d_positive &= r.conditions.d_positive;
    out.conditions.decay_positive &= r.conditions.decay_positive;
  }
  out.pass = !reports.empty() && out.failures == 0 && out.conditions.all();
  return out;
}

void write_consistency(const ConsistencyReport& r, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out << "input,j,i,analytic,numeric,abs_error,rel_error,pass\n";
  for (const auto& rec : r.records) {
    out << pcnn::input_name(rec.input) << ',' << rec.j << ',' << rec.i << ',' << format_double(rec.analytic)
        << ',' << format_double(rec.numeric) << ',' << format_double(rec.abs_error) << ','
        << format_double(rec.rel_error) << ',' << (rec.pass ? 1 : 0) << '\n';
  }
}

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kFirstHalf: return "first_half";
    case Variant::kSecondHalf: return "second_half";
    case Variant::kNone: return "none";
  }
  return "none";
}

std::vector<bool> magnitude_split(std::span<const double> controls) {
  const std::size_t n = controls.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(controls[a]) > std::abs(controls[b]);
  });
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t k = 0; k < n; ++k) prefix[k + 1] = prefix[k] + std::abs(controls[order[k]]);
  const double half = prefix[n] / 2.0;
  // Smallest rank whose cumulative energy reaches half of the total.
  std::size_t lo = 0, hi = n;
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (prefix[mid] >= half) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  std::size_t k = lo;
  if (k > 0 && std::abs(prefix[n] - 2.0 * prefix[k - 1]) < std::abs(prefix[n] - 2.0 * prefix[k])) --k;
  std::vector<bool> first(n, false);
  for (std::size_t r = 0; r < k; ++r) first[order[r]] = true;
  return first;
}

double AblationRun::half_imbalance() const {
  return energy_full > 0.0 ? std::abs(energy_first - energy_second) / energy_full : 0.0;
}

namespace {

// hi >= lo everywhere, and hi > lo from the first differing control on.
bool ordered(const std::vector<double>& hi, const std::vector<double>& lo, std::span<const double> c_hi,
             std::span<const double> c_lo) {
  std::size_t first = c_hi.size();
  for (std::size_t m = 0; m < c_hi.size(); ++m) {
    if (c_hi[m] != c_lo[m]) {
      first = m;
      break;
    }
  }
  for (std::size_t s = 0; s < hi.size(); ++s) {
    if (hi[s] < lo[s]) return false;
    if (s >= first && !(hi[s] > lo[s])) return false;
  }
  return true;
}

}  // namespace

AblationRun run_control_ablation(const pcnn::Model& model, const rc::RcParams& rc_params,
                                 const Window& window, const training::SiteGeometry& site,
                                 bool assert_ordering) {
  if (model.kind != pcnn::ModelKind::kPcnn) throw std::invalid_argument("control ablation needs a PCNN");
  if (!window.heating) throw std::invalid_argument("control ablation needs a heating-season window");
  pcnn::validate_window(window);
  const training::Scaling scaling = training::model_scaling(model);
  const std::size_t k0 = window.warm - 1;
  const std::size_t h = window.horizon();
  const std::vector<double> full(window.u.begin() + static_cast<std::ptrdiff_t>(k0),
                                 window.u.begin() + static_cast<std::ptrdiff_t>(k0 + h));
  for (double u : full) {
    if (u < 0.0) throw std::invalid_argument("control ablation: heating window carries negative power");
  }
  const std::vector<bool> first = magnitude_split(full);

  std::map<Variant, std::vector<double>> controls;
  for (Variant v : kVariants) {
    std::vector<double> c(h, 0.0);
    for (std::size_t m = 0; m < h; ++m) {
      if (v == Variant::kFull || (v == Variant::kFirstHalf && first[m]) ||
          (v == Variant::kSecondHalf && !first[m])) {
        c[m] = full[m];
      }
    }
    controls[v] = std::move(c);
  }

  AblationRun run;
  std::vector<Window> variants;
  for (Variant v : kVariants) {
    Window w = window;
    std::copy(controls[v].begin(), controls[v].end(), w.u.begin() + static_cast<std::ptrdiff_t>(k0));
    variants.push_back(std::move(w));
  }
  std::vector<const Window*> ptrs;
  for (const auto& w : variants) ptrs.push_back(&w);
  const auto preds = pcnn::predict(model, ptrs);
  for (std::size_t k = 0; k < 4; ++k) {
    std::vector<double> t = preds[k];
    for (auto& v : t) v = scaling.normalizer.invert("T", v);
    run.pcnn[kVariants[k]] = std::move(t);
    run.rc[kVariants[k]] = training::rc_forecast(rc_params, variants[k], scaling, site);
  }
  for (Variant v : kVariants) {
    std::vector<double> dp(h), dr(h);
    for (std::size_t s = 0; s < h; ++s) {
      dp[s] = run.pcnn[v][s] - run.pcnn[Variant::kNone][s];
      dr[s] = run.rc[v][s] - run.rc[Variant::kNone][s];
    }
    run.pcnn_difference[v] = std::move(dp);
    run.rc_difference[v] = std::move(dr);
  }
  for (double u : controls[Variant::kFull]) run.energy_full += u;
  for (double u : controls[Variant::kFirstHalf]) run.energy_first += u;
  for (double u : controls[Variant::kSecondHalf]) run.energy_second += u;

  // RC difference curves against sum_j (1-b-c)^(j-1) a dQ.
  for (Variant v : {Variant::kFull, Variant::kFirstHalf, Variant::kSecondHalf}) {
    rc::StepInputs delta;
    for (double u : controls[v]) {
      for (int m = 0; m < 15; ++m) delta.q_heat.push_back(u * scaling.power_max / 0.8);
    }
    delta.t_out.assign(delta.q_heat.size(), 0.0);
    delta.t_neigh.assign(delta.q_heat.size(), 0.0);
    delta.q_irr.assign(delta.q_heat.size(), 0.0);
    for (std::size_t s = 0; s < h; ++s) {
      const double cf = rc::rc_closed_form(rc_params, 0.0, delta, 15 * (s + 1));
      run.rc_closed_form_error = std::max(run.rc_closed_form_error, std::abs(cf - run.rc_difference[v][s]));
    }
  }

  auto check = [&](const std::map<Variant, std::vector<double>>& t) {
    return ordered(t.at(Variant::kFull), t.at(Variant::kFirstHalf), controls[Variant::kFull],
                   controls[Variant::kFirstHalf]) &&
           ordered(t.at(Variant::kFull), t.at(Variant::kSecondHalf), controls[Variant::kFull],
                   controls[Variant::kSecondHalf]) &&
           ordered(t.at(Variant::kFirstHalf), t.at(Variant::kNone), controls[Variant::kFirstHalf],
                   controls[Variant::kNone]) &&
           ordered(t.at(Variant::kSecondHalf), t.at(Variant::kNone), controls[Variant::kSecondHalf],
                   controls[Variant::kNone]);
  };
  run.pcnn_ordering = check(run.pcnn);
  run.rc_ordering = check(run.rc);
  if (assert_ordering && !(run.pcnn_ordering && run.rc_ordering)) {
    throw ConsistencyBreach(std::string("control ablation ordering violated for") +
                            (run.pcnn_ordering ? "" : " PCNN") + (run.rc_ordering ? "" : " RC"));
  }
  return run;
}

void write_ablation(const AblationRun& run, const std::filesystem::path& dir, const std::string& prefix) {
  std::filesystem::create_directories(dir);
  auto emit = [&](const std::string& name, const std::map<Variant, std::vector<double>>& pc,
                  const std::map<Variant, std::vector<double>>& rcv) {
    std::ofstream out(dir / (prefix + name));
    out << "step";
    for (Variant v : kVariants) out << ",pcnn_" << variant_name(v);
    for (Variant v : kVariants) out << ",rc_" << variant_name(v);
    out << '\n';
    const std::size_t h = pc.at(Variant::kNone).size();
    for (std::size_t s = 0; s < h; ++s) {
      out << s + 1;
      for (Variant v : kVariants) out << ',' << format_double(pc.at(v)[s]);
      for (Variant v : kVariants) out << ',' << format_double(rcv.at(v)[s]);
      out << '\n';
    }
  };
  emit("_trajectories.csv", run.pcnn, run.rc);
  emit("_differences.csv", run.pcnn_difference, run.rc_difference);
}

void error_propagation(std::span<const NamedReport> reports, const std::filesystem::path& dir) {
  if (reports.empty()) throw std::invalid_argument("error_propagation: no reports");
  const std::size_t windows = reports[0].report.window_mae.size();
  for (const auto& r : reports) {
    if (r.report.window_mae.size() != windows) {
      throw std::invalid_argument("error_propagation: reports cover different window sets");
    }
  }
  std::filesystem::create_directories(dir);
  for (const auto& r : reports) training::write_report(r.report, dir, r.name);
  {
    std::ofstream out(dir / "marker_table.csv");
    out << "step,hours";
    for (const auto& r : reports) out << ',' << r.name;
    out << '\n';
    for (std::size_t m : training::kMarkerSteps) {
      out << m << ',' << format_double(static_cast<double>(m) / 4.0);
      for (const auto& r : reports) {
        out << ',';
        for (const auto& [step, mae] : r.report.marker_mae) {
          if (step == m) out << format_double(mae);
        }
      }
      out << '\n';
    }
  }
  std::ofstream out(dir / "mae_pairs.csv");
  out << "window_id";
  for (const auto& r : reports) out << ',' << r.name;
  out << '\n';
  for (std::size_t w = 0; w < windows; ++w) {
    out << w;
    for (const auto& r : reports) out << ',' << format_double(r.report.window_mae[w]);
    out << '\n';
  }
}

AblationTable run_ablation_lstm(const training::Experiment& ex, std::span<const std::uint64_t> seeds,
                                const nn::NetConfig& net, const training::TrainConfig& train) {
  AblationTable table;
  for (std::uint64_t seed : seeds) {
    training::TrainConfig cfg = train;
    cfg.seed = seed;
    SeedRun run;
    run.seed = seed;
    run.pcnn = training::train(training::init_pcnn(ex, net, seed), ex.train, ex.validation, cfg);
    run.lstm = training::train(training::init_plain_lstm(ex, net, seed), ex.train, ex.validation, cfg);
    table.runs.push_back(std::move(run));
  }
  auto best_train = [](const training::TrainResult& r) {
    return r.curve[static_cast<std::size_t>(r.best_epoch - 1)].train_loss;
  };
  for (const char* model : {"PCNN", "LSTM"}) {
    const bool is_pcnn = std::string_view(model) == "PCNN";
    double tr = 0.0, va = 0.0;
    for (const auto& run : table.runs) {
      const auto& r = is_pcnn ? run.pcnn : run.lstm;
      table.rows.push_back({model, std::to_string(run.seed), best_train(r), r.best_validation_loss});
      tr += best_train(r);
      va += r.best_validation_loss;
    }
    const double n = static_cast<double>(std::max<std::size_t>(1, table.runs.size()));
    table.rows.push_back({model, "mean", tr / n, va / n});
  }
  return table;
}

void write_loss_table(std::span<const LossRow> rows, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out << "model,seed,train_loss,validation_loss\n";
  for (const auto& r : rows) {
    out << r.model << ',' << r.seed << ',' << format_double(r.train_loss) << ','
        << format_double(r.validation_loss) << '\n';
  }
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<MarkerAggregate> aggregate_markers(std::span<const training::EvalReport> reports) {
  std::vector<MarkerAggregate> out;
  for (std::size_t m : training::kMarkerSteps) {
    std::vector<double> vals;
    for (const auto& r : reports) {
      for (const auto& [step, mae] : r.marker_mae) {
        if (step == m) vals.push_back(mae);
      }
    }
    if (vals.empty()) continue;
    out.push_back({m, median(vals), *std::min_element(vals.begin(), vals.end()),
                   *std::max_element(vals.begin(), vals.end())});
  }
  return out;
}

MultiSeedResult multi_seed(const training::Experiment& ex, std::span<const std::uint64_t> seeds,
                           const nn::NetConfig& net, const training::TrainConfig& train) {
  MultiSeedResult out;
  for (std::uint64_t seed : seeds) {
    training::TrainConfig cfg = train;
    cfg.seed = seed;
    const auto result = training::train(training::init_pcnn(ex, net, seed), ex.train, ex.validation, cfg);
    out.seeds.push_back(seed);
    out.reports.push_back(training::evaluate(result.best, ex.validation));
  }
  out.aggregate = aggregate_markers(out.reports);
  return out;
}

void write_summary(const RunSummary& s, const std::filesystem::path& path) {
  nlohmann::json j;
  j["run_id"] = s.run_id;
  j["config_hash"] = s.config_hash;
  j["metrics"] = nlohmann::json::object();
  for (const auto& [k, v] : s.metrics) j["metrics"][k] = v;
  j["consistency"] = nlohmann::json::object();
  for (const auto& [k, v] : s.consistency) j["consistency"][k] = v;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream(path) << j.dump(2) << '\n';
}

}  // namespace thermoseed::verify

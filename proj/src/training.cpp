#include "thermoseed/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

#include "thermoseed/kvfile.hpp"

namespace thermoseed::training {

using namespace std::chrono;
using pcnn::Window;

namespace {

constexpr std::size_t kLossChunk = 64;
constexpr double kUScale = 0.8;

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  const std::size_t threads = std::min(thread_count(), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += threads) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

bool finite_tensor(const ad::Tensor& t) {
  for (double v : t.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace

std::size_t thread_count() {
  const char* env = std::getenv("THERMOSEED_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (end == env || v < 1) return 1;
  return static_cast<std::size_t>(v);
}

bool in_heating_season(ts::Timestamp t, std::span<const int> heating_months) {
  const year_month_day ymd{floor<days>(t)};
  const int m = static_cast<int>(static_cast<unsigned>(ymd.month()));
  return std::find(heating_months.begin(), heating_months.end(), m) != heating_months.end();
}

ts::Timestamp window_end(const Window& w) {
  return w.start + minutes(15 * static_cast<long long>(w.rows() - 1));
}

ts::Timestamp horizon_origin(const Window& w) {
  return w.start + minutes(15 * static_cast<long long>(w.warm));
}

std::vector<Window> make_windows(const ts::TimeSeriesTable& table, const WindowConfig& cfg) {
  if (table.step() != 900) throw std::invalid_argument("make_windows expects a 15-minute table");
  if (cfg.stride == 0 || cfg.min_horizon == 0 || cfg.min_horizon > cfg.max_horizon) {
    throw std::invalid_argument("make_windows: inconsistent window configuration");
  }
  using namespace ts::channels;
  const auto& t = table.channel(kZoneTemp);
  const auto& to = table.channel(kOutTemp);
  const auto& tn = table.channel(kNeighTemp);
  const auto& irr = table.channel(kIrradiation);
  const auto& q = table.channel(kZonePower);
  const std::size_t n = table.length();
  std::vector<char> valid(n);
  for (std::size_t r = 0; r < n; ++r) {
    valid[r] = std::isfinite(t[r]) && std::isfinite(to[r]) && std::isfinite(tn[r]) &&
               std::isfinite(irr[r]) && std::isfinite(q[r]);
  }
  // run[r]: number of consecutive valid rows starting at r.
  std::vector<std::size_t> run(n + 1, 0);
  for (std::size_t r = n; r-- > 0;) run[r] = valid[r] ? run[r + 1] + 1 : 0;

  std::vector<Window> out;
  std::size_t first = (cfg.warm + cfg.stride - 1) / cfg.stride * cfg.stride;
  for (std::size_t o = first; o < n; o += cfg.stride) {
    const std::size_t s = o - cfg.warm;
    if (run[s] < cfg.warm) continue;
    const std::size_t h = std::min(run[s] - cfg.warm, cfg.max_horizon);
    if (h < cfg.min_horizon) continue;
    Window w;
    w.warm = cfg.warm;
    w.start = table.timestamp(s);
    w.heating = in_heating_season(table.timestamp(o), cfg.heating_months);
    const std::size_t rows = cfg.warm + h;
    w.x = ad::Tensor(rows, pcnn::kFeatureCount);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t src = s + r;
      const ts::TimeEncoding e = ts::encode_time(table.timestamp(src));
      w.x(r, 0) = irr[src];
      w.x(r, 1) = e.month_sin;
      w.x(r, 2) = e.month_cos;
      w.x(r, 3) = e.tod_sin;
      w.x(r, 4) = e.tod_cos;
      w.x(r, 5) = e.weekday;
      w.u.push_back(q[src]);
      w.t_out.push_back(to[src]);
      w.t_neigh.push_back(tn[src]);
      w.t_meas.push_back(t[src]);
    }
    out.push_back(std::move(w));
  }
  return out;
}

Split split_seasonal(std::vector<Window> windows, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("split fraction must be in (0, 1)");
  if (windows.empty()) throw std::invalid_argument("split_seasonal: no windows");
  Split out;
  for (const bool heating : {true, false}) {
    std::vector<Window*> season;
    for (auto& w : windows) {
      if (w.heating == heating) season.push_back(&w);
    }
    if (season.empty()) continue;
    const char* name = heating ? "heating" : "cooling";
    if (season.size() < 5) {
      throw std::invalid_argument(std::string("split_seasonal: fewer than 5 ") + name + " windows");
    }
    std::stable_sort(season.begin(), season.end(),
                     [](const Window* a, const Window* b) { return a->start < b->start; });
    const std::size_t idx = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(season.size())));
    const ts::Timestamp cut = horizon_origin(*season[std::min(idx, season.size() - 1)]);
    std::size_t train = 0, val = 0;
    for (Window* w : season) {
      if (window_end(*w) < cut) {
        out.train.push_back(std::move(*w));
        ++train;
      } else if (w->start >= cut) {
        out.validation.push_back(std::move(*w));
        ++val;
      } else {
        ++out.excluded;
      }
    }
    if (train == 0 || val == 0) {
      throw std::invalid_argument(std::string("split_seasonal: degenerate ") + name +
                                  " split (all windows on one side of the cut)");
    }
  }
  // Cross-season guard: seasons meet in time, so a training window of one
  // season can still overlap a validation window of the other.
  std::vector<std::pair<ts::Timestamp, ts::Timestamp>> spans;
  for (const auto& v : out.validation) spans.emplace_back(v.start, window_end(v));
  std::sort(spans.begin(), spans.end());
  std::vector<Window> kept;
  for (auto& w : out.train) {
    const ts::Timestamp s = w.start;
    const ts::Timestamp e = window_end(w);
    bool overlaps = false;
    for (const auto& [vs, ve] : spans) {
      if (vs > e) break;
      if (ve >= s) {
        overlaps = true;
        break;
      }
    }
    if (overlaps) {
      ++out.excluded;
    } else {
      kept.push_back(std::move(w));
    }
  }
  out.train = std::move(kept);
  return out;
}

Scaling fit_scaling(std::span<const Window> physical) {
  if (physical.empty()) throw std::invalid_argument("fit_scaling: no training windows");
  double tmin = std::numeric_limits<double>::infinity(), tmax = -tmin;
  double imin = tmin, imax = -tmin;
  double pmax = 0.0;
  for (const auto& w : physical) {
    for (std::size_t r = 0; r < w.rows(); ++r) {
      for (double v : {w.t_meas[r], w.t_out[r], w.t_neigh[r]}) {
        tmin = std::min(tmin, v);
        tmax = std::max(tmax, v);
      }
      imin = std::min(imin, w.x(r, 0));
      imax = std::max(imax, w.x(r, 0));
      pmax = std::max(pmax, std::abs(w.u[r]));
    }
  }
  if (!(pmax > 0.0)) throw std::invalid_argument("fit_scaling: no nonzero power in the training data");
  Scaling s;
  for (const char* name : {"T", "T_out", "T_neigh"}) s.normalizer.add(name, tmin, tmax);
  s.normalizer.add("I", imin, imax);
  s.power_max = pmax;
  return s;
}

Window normalize(const Window& physical, const Scaling& s) {
  Window w = physical;
  const ts::Normalizer& n = s.normalizer;
  for (std::size_t r = 0; r < w.rows(); ++r) {
    w.x(r, 0) = n.apply("I", w.x(r, 0));
    w.u[r] = kUScale * w.u[r] / s.power_max;
    w.t_out[r] = n.apply("T_out", w.t_out[r]);
    w.t_neigh[r] = n.apply("T_neigh", w.t_neigh[r]);
    w.t_meas[r] = n.apply("T", w.t_meas[r]);
  }
  return w;
}

std::vector<Window> normalize(std::span<const Window> physical, const Scaling& s) {
  std::vector<Window> out;
  out.reserve(physical.size());
  for (const auto& w : physical) out.push_back(normalize(w, s));
  return out;
}

void apply_scaling(pcnn::Model& model, const Scaling& s) {
  model.normalizer = s.normalizer;
  model.power_max = s.power_max;
}

Scaling model_scaling(const pcnn::Model& model) {
  if (!(model.power_max > 0.0) || !model.normalizer.contains("T")) {
    throw std::invalid_argument("model carries no scaling");
  }
  return Scaling{model.normalizer, model.power_max};
}

double average_power(std::span<const Window> windows) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& w : windows) {
    for (double u : w.u) {
      if (u != 0.0) {
        sum += std::abs(u);
        ++n;
      }
    }
  }
  if (n == 0) throw std::invalid_argument("average_power: no nonzero control in the windows");
  return sum / static_cast<double>(n);
}

std::vector<std::vector<std::size_t>> make_batches(std::span<const Window> windows,
                                                   std::size_t batch, std::uint64_t seed) {
  if (batch == 0) throw std::invalid_argument("batch size must be positive");
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t bucket = batch * 8;
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t begin = 0; begin < order.size(); begin += bucket) {
    const auto first = order.begin() + static_cast<std::ptrdiff_t>(begin);
    const auto last = order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), begin + bucket));
    std::stable_sort(first, last, [&](std::size_t a, std::size_t b) {
      return windows[a].rows() < windows[b].rows();
    });
    for (auto it = first; it < last; it += static_cast<std::ptrdiff_t>(batch)) {
      const auto stop = std::min(last, it + static_cast<std::ptrdiff_t>(batch));
      out.emplace_back(it, stop);
    }
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

double mean_loss(const pcnn::Model& model, std::span<const Window> windows, bool include_warm) {
  if (windows.empty()) throw std::invalid_argument("mean_loss: no windows");
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return windows[a].rows() < windows[b].rows(); });
  const std::size_t chunks = (order.size() + kLossChunk - 1) / kLossChunk;
  std::vector<double> partial(chunks, 0.0);
  parallel_for(chunks, [&](std::size_t c) {
    std::vector<const Window*> batch;
    for (std::size_t i = c * kLossChunk; i < std::min(order.size(), (c + 1) * kLossChunk); ++i) {
      batch.push_back(&windows[order[i]]);
    }
    ad::Tape tape;
    const auto bound = pcnn::bind(tape, model, false);
    const auto fr = pcnn::forward(tape, bound, batch);
    partial[c] = tape.scalar_value(pcnn::window_loss(tape, fr, batch, include_warm)) *
                 static_cast<double>(batch.size());
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total / static_cast<double>(windows.size());
}

TrainResult train(pcnn::Model model, std::span<const Window> train_set,
                  std::span<const Window> validation_set, const TrainConfig& cfg) {
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  if (cfg.epochs < 1) throw std::invalid_argument("train: need at least one epoch");
  TrainResult result;
  result.best = model;
  result.best_validation_loss = std::numeric_limits<double>::infinity();
  ad::AdamState adam;
  const std::vector<ad::Tensor*> params = model.parameters();
  const std::size_t frozen = model.net.parameters().size();

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochStats st;
    st.epoch = epoch;
    st.lr = ad::learning_rate_schedule(epoch, cfg.base_lr);
    const auto batches = make_batches(train_set, cfg.batch, cfg.seed * 1000003ull + static_cast<std::uint64_t>(epoch));
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (const auto& idx : batches) {
      std::vector<const Window*> batch;
      for (std::size_t i : idx) batch.push_back(&train_set[i]);
      ad::Tape tape;
      const auto bound = pcnn::bind(tape, model, true);
      const auto fr = pcnn::forward(tape, bound, batch);
      const ad::Var loss = pcnn::window_loss(tape, fr, batch, cfg.include_warm_loss);
      const double value = tape.scalar_value(loss);
      if (!std::isfinite(value)) {
        throw TrainingDiverged("training loss became non-finite in epoch " + std::to_string(epoch));
      }
      tape.backward(loss);
      std::vector<ad::Tensor> grads;
      grads.reserve(bound.params.size());
      for (const ad::Var v : bound.params) {
        grads.push_back(tape.grad(v));
        if (!finite_tensor(grads.back())) {
          throw TrainingDiverged("non-finite gradient in epoch " + std::to_string(epoch));
        }
      }
      if (cfg.freeze_dynamics) {
        for (std::size_t k = 0; k < frozen; ++k) grads[k].fill(0.0);
      }
      ad::adam_step(params, grads, adam, st.lr);
      loss_sum += value * static_cast<double>(batch.size());
      seen += batch.size();
    }
    st.train_loss = loss_sum / static_cast<double>(seen);
    st.validation_loss = validation_set.empty() ? st.train_loss
                                                : mean_loss(model, validation_set, cfg.include_warm_loss);
    if (!std::isfinite(st.validation_loss)) {
      throw TrainingDiverged("validation loss became non-finite in epoch " + std::to_string(epoch));
    }
    st.conditions_hold = model.kind != pcnn::ModelKind::kPcnn || pcnn::check_conditions(model.physics).all();
    result.curve.push_back(st);
    if (st.validation_loss < result.best_validation_loss) {
      result.best_validation_loss = st.validation_loss;
      result.best_epoch = epoch;
      result.best = model;
    }
    if (cfg.on_epoch) cfg.on_epoch(epoch, st.train_loss, st.validation_loss);
  }
  return result;
}

double EvalReport::marker(std::size_t step) const {
  for (const auto& [s, mae] : marker_mae) {
    if (s == step) return mae;
  }
  throw std::out_of_range("no MAE recorded for step " + std::to_string(step));
}

EvalReport summarize(const std::vector<std::vector<double>>& predictions,
                     const std::vector<std::vector<double>>& truth) {
  if (predictions.size() != truth.size()) throw std::invalid_argument("summarize: size mismatch");
  if (predictions.empty()) throw std::invalid_argument("summarize: no windows");
  std::size_t h = 0;
  for (std::size_t w = 0; w < predictions.size(); ++w) {
    if (predictions[w].size() != truth[w].size()) throw std::invalid_argument("summarize: horizon mismatch");
    h = std::max(h, predictions[w].size());
  }
  EvalReport r;
  r.mean_error.assign(h, 0.0);
  r.std_error.assign(h, 0.0);
  r.count.assign(h, 0);
  std::vector<double> abs_sum(h, 0.0);
  for (std::size_t w = 0; w < predictions.size(); ++w) {
    double mae = 0.0;
    for (std::size_t s = 0; s < predictions[w].size(); ++s) {
      const double e = predictions[w][s] - truth[w][s];
      r.mean_error[s] += e;
      r.count[s] += 1;
      abs_sum[s] += std::abs(e);
      mae += std::abs(e);
    }
    r.window_mae.push_back(mae / static_cast<double>(predictions[w].size()));
  }
  for (std::size_t s = 0; s < h; ++s) r.mean_error[s] /= static_cast<double>(r.count[s]);
  for (std::size_t w = 0; w < predictions.size(); ++w) {
    for (std::size_t s = 0; s < predictions[w].size(); ++s) {
      const double d = predictions[w][s] - truth[w][s] - r.mean_error[s];
      r.std_error[s] += d * d;
    }
  }
  for (std::size_t s = 0; s < h; ++s) r.std_error[s] = std::sqrt(r.std_error[s] / static_cast<double>(r.count[s]));
  for (std::size_t m : kMarkerSteps) {
    if (m <= h) r.marker_mae.emplace_back(m, abs_sum[m - 1] / static_cast<double>(r.count[m - 1]));
  }
  return r;
}

std::vector<double> measured_horizon(const Window& w, const Scaling& s) {
  std::vector<double> out;
  for (std::size_t r = w.warm; r < w.rows(); ++r) out.push_back(s.normalizer.invert("T", w.t_meas[r]));
  return out;
}

EvalReport evaluate(const pcnn::Model& model, std::span<const Window> windows) {
  const Scaling s = model_scaling(model);
  std::vector<const Window*> ptrs;
  for (const auto& w : windows) ptrs.push_back(&w);
  const std::size_t chunks = (ptrs.size() + kLossChunk - 1) / kLossChunk;
  std::vector<std::vector<std::vector<double>>> parts(chunks);
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t begin = c * kLossChunk;
    const std::size_t count = std::min(kLossChunk, ptrs.size() - begin);
    parts[c] = pcnn::predict(model, std::span<const Window* const>(ptrs).subspan(begin, count));
  });
  std::vector<std::vector<double>> preds, truth;
  for (auto& part : parts) {
    for (auto& p : part) {
      for (auto& v : p) v = s.normalizer.invert("T", v);
      preds.push_back(std::move(p));
    }
  }
  for (const auto& w : windows) truth.push_back(measured_horizon(w, s));
  return summarize(preds, truth);
}

std::vector<double> rc_forecast(const rc::RcParams& p, const Window& w, const Scaling& s,
                                const SiteGeometry& site) {
  const ts::Normalizer& n = s.normalizer;
  const std::size_t k0 = w.warm - 1;
  const std::size_t h = w.horizon();
  std::vector<double> t_out, t_neigh, irr;
  rc::ControlGridInputs in;
  for (std::size_t r = k0; r < w.rows(); ++r) {
    t_out.push_back(n.invert("T_out", w.t_out[r]));
    t_neigh.push_back(n.invert("T_neigh", w.t_neigh[r]));
    irr.push_back(std::max(0.0, n.invert("I", w.x(r, 0))));
    if (r + 1 < w.rows()) in.q_heat.push_back(w.u[r] * s.power_max / kUScale);
  }
  in.t_out = rc::upsample_linear(t_out);
  in.t_neigh = rc::upsample_linear(t_neigh);
  const std::vector<double> irr_min = rc::upsample_linear(irr);
  const ts::Timestamp t0 = w.start + minutes(15 * static_cast<long long>(k0));
  in.q_irr.resize(h * 15);
  for (std::size_t m = 0; m < h * 15; ++m) {
    const rc::SolarPosition sp = rc::solar_position(t0 + minutes(static_cast<long long>(m)), site.latitude);
    in.q_irr[m] = rc::irradiance_transform({sp.azimuth, sp.altitude, site.window_orientation, irr_min[m]});
  }
  return rc::rc_simulate(p, n.invert("T", w.t_meas[k0]), in);
}

EvalReport evaluate_rc(const rc::RcParams& p, std::span<const Window> windows, const Scaling& s,
                       const SiteGeometry& site) {
  std::vector<std::vector<double>> preds, truth;
  for (const auto& w : windows) {
    preds.push_back(rc_forecast(p, w, s, site));
    truth.push_back(measured_horizon(w, s));
  }
  return summarize(preds, truth);
}

void write_report(const EvalReport& r, const std::filesystem::path& dir, const std::string& prefix) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / (prefix + "_steps.csv"));
    out << "step,mean_err,std_err\n";
    for (std::size_t s = 0; s < r.mean_error.size(); ++s) {
      out << s + 1 << ',' << format_double(r.mean_error[s]) << ',' << format_double(r.std_error[s]) << '\n';
    }
  }
  {
    std::ofstream out(dir / (prefix + "_windows.csv"));
    out << "window_id,mae\n";
    for (std::size_t w = 0; w < r.window_mae.size(); ++w) out << w << ',' << format_double(r.window_mae[w]) << '\n';
  }
  KeyValueFile kv;
  for (const auto& [step, mae] : r.marker_mae) kv.set("mae_" + std::to_string(step), mae);
  kv.write(dir / (prefix + "_markers.cfg"), "marker-step MAE in degC");
}

Experiment prepare_experiment(const ts::TimeSeriesTable& raw, const ts::PreprocessConfig& pre,
                              const WindowConfig& wc) {
  Experiment ex;
  ex.data = ts::preprocess(raw, pre);
  Split split = split_seasonal(make_windows(ex.data.model_15min, wc));
  ex.scaling = fit_scaling(split.train);
  ex.train = normalize(split.train, ex.scaling);
  ex.validation = normalize(split.validation, ex.scaling);
  ex.excluded = split.excluded;
  return ex;
}

pcnn::Model init_pcnn(const Experiment& ex, const nn::NetConfig& net, std::uint64_t seed,
                      pcnn::ControlTransform g) {
  const double p_avg = average_power(ex.train);
  pcnn::Model m = pcnn::make_pcnn(net, pcnn::init_physics_params(p_avg, ex.scaling.temp_scale()),
                                  std::move(g), seed);
  apply_scaling(m, ex.scaling);
  return m;
}

pcnn::Model init_plain_lstm(const Experiment& ex, const nn::NetConfig& net, std::uint64_t seed) {
  pcnn::Model m = pcnn::make_plain_lstm(net, seed);
  apply_scaling(m, ex.scaling);
  return m;
}

rc::FitResult fit_rc(const Experiment& ex, const SiteGeometry& site) {
  const ts::TimeSeriesTable& clean = ex.data.clean_1min;
  const std::size_t n = clean.length();
  std::vector<int> cover(n + 1, 0);
  for (const auto& w : ex.train) {
    const auto first = duration_cast<minutes>(w.start - clean.start()).count();
    const auto last = duration_cast<minutes>(window_end(w) - clean.start()).count() + 15;
    const auto lo = static_cast<std::size_t>(std::clamp<long long>(first, 0, static_cast<long long>(n)));
    const auto hi = static_cast<std::size_t>(std::clamp<long long>(last, 0, static_cast<long long>(n)));
    cover[lo] += 1;
    cover[hi] -= 1;
  }
  using namespace ts::channels;
  std::vector<double> t = clean.channel(kZoneTemp);
  int depth = 0;
  for (std::size_t r = 0; r < n; ++r) {
    depth += cover[r];
    if (depth == 0) t[r] = ts::kMissing;
  }
  const std::vector<double> q_irr = rc::irradiance_series(clean, site.latitude, site.window_orientation);
  return rc::fit_least_squares({t, clean.channel(kZonePower), clean.channel(kOutTemp),
                                clean.channel(kNeighTemp), q_irr});
}

}  // namespace thermoseed::training

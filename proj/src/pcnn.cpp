#include "thermoseed/pcnn.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace thermoseed::pcnn {

using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

constexpr std::string_view kFormat = "thermoseed-checkpoint-1";
constexpr std::size_t kPredictChunk = 64;

std::string kind_name(ModelKind k) { return k == ModelKind::kPcnn ? "pcnn" : "plain_lstm"; }

std::string control_name(ControlKind k) {
  switch (k) {
    case ControlKind::kIdentity: return "identity";
    case ControlKind::kRadiator: return "radiator";
    case ControlKind::kLearned: return "learned";
  }
  return "identity";
}

ControlKind parse_control(const std::string& s) {
  if (s == "identity") return ControlKind::kIdentity;
  if (s == "radiator") return ControlKind::kRadiator;
  if (s == "learned") return ControlKind::kLearned;
  throw std::runtime_error("unknown control transform '" + s + "'");
}

std::size_t common_warm(std::span<const Window* const> batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const std::size_t warm = batch[0]->warm;
  for (const Window* w : batch) {
    validate_window(*w);
    if (w->warm != warm) throw std::invalid_argument("batch mixes warm-start lengths");
  }
  return warm;
}

// Column tensor (batch x 1) of a per-row channel, holding the last row for
// shorter windows.
template <typename Get>
Tensor column(std::span<const Window* const> batch, std::size_t r, Get get) {
  Tensor out(batch.size(), 1);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const std::vector<double>& v = get(*batch[b]);
    out[b] = v[std::min(r, v.size() - 1)];
  }
  return out;
}

Tensor features(std::span<const Window* const> batch, std::size_t r) {
  const std::size_t nx = batch[0]->x.cols();
  Tensor out(batch.size(), nx);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Tensor& x = batch[b]->x;
    const std::size_t rr = std::min(r, x.rows() - 1);
    for (std::size_t c = 0; c < nx; ++c) out(b, c) = x(rr, c);
  }
  return out;
}

const std::vector<double>& meas(const Window& w) { return w.t_meas; }
const std::vector<double>& ctrl(const Window& w) { return w.u; }
const std::vector<double>& tout(const Window& w) { return w.t_out; }
const std::vector<double>& tneigh(const Window& w) { return w.t_neigh; }

}  // namespace

ConditionFlags check_conditions(const PhysicsParams& p) {
  ConditionFlags f;
  f.a_positive = p.a() > 0.0;
  f.b_positive = p.b() > 0.0;
  f.c_positive = p.c() > 0.0;
  f.d_positive = p.d() > 0.0;
  f.decay_positive = p.decay() > 0.0;
  return f;
}

PhysicsParams init_physics_params(double p_avg, double temp_scale) {
  if (!(p_avg > 0.0)) throw std::invalid_argument("init_physics_params: average power must be positive");
  if (!(temp_scale > 0.0)) throw std::invalid_argument("init_physics_params: temperature scale must be positive");
  PhysicsParams p;
  p.a0 = temp_scale / (8.0 * p_avg);
  p.d0 = p.a0;
  p.b0 = 1.5 * temp_scale / (24.0 * 25.0 * temp_scale);
  p.c0 = p.b0;
  return p;
}

double ControlTransform::apply(double u, double t) const {
  switch (kind) {
    case ControlKind::kIdentity: return u;
    case ControlKind::kRadiator: return u * mass_flow * (water_temperature - t);
    case ControlKind::kLearned: {
      double g = 0.0;
      for (std::size_t j = 0; j < beta.size(); ++j) {
        const double w = w_raw[j] * w_raw[j];
        g += v_raw[j] * v_raw[j] * (std::tanh(w * u + beta[j]) - std::tanh(beta[j]));
      }
      return g;
    }
  }
  return u;
}

double ControlTransform::derivative(double u, double t) const {
  switch (kind) {
    case ControlKind::kIdentity: return 1.0;
    case ControlKind::kRadiator: return mass_flow * (water_temperature - t);
    case ControlKind::kLearned: {
      double h = 0.0;
      for (std::size_t j = 0; j < beta.size(); ++j) {
        const double w = w_raw[j] * w_raw[j];
        const double th = std::tanh(w * u + beta[j]);
        h += v_raw[j] * v_raw[j] * w * (1.0 - th * th);
      }
      return h;
    }
  }
  return 1.0;
}

ControlTransform identity_transform() { return {}; }

ControlTransform radiator_transform(double mass_flow, double water_temperature) {
  if (!(mass_flow > 0.0)) throw std::invalid_argument("radiator: mass flow must be positive");
  ControlTransform g;
  g.kind = ControlKind::kRadiator;
  g.mass_flow = mass_flow;
  g.water_temperature = water_temperature;
  return g;
}

ControlTransform learned_transform(std::size_t units, std::uint64_t seed) {
  if (units == 0) throw std::invalid_argument("learned control transform needs at least one unit");
  ControlTransform g;
  g.kind = ControlKind::kLearned;
  g.w_raw = Tensor(1, units);
  g.beta = Tensor(1, units);
  g.v_raw = Tensor(units, 1);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mag(0.5, 1.5);
  std::uniform_real_distribution<double> off(-1.0, 1.0);
  // Start close to the identity: sum_j v_j^2 w_j^2 (1 - tanh^2 beta_j) ~ 1.
  for (std::size_t j = 0; j < units; ++j) {
    g.w_raw[j] = mag(rng);
    g.beta[j] = off(rng);
  }
  double slope = 0.0;
  for (std::size_t j = 0; j < units; ++j) {
    const double th = std::tanh(g.beta[j]);
    slope += g.w_raw[j] * g.w_raw[j] * (1.0 - th * th);
  }
  for (std::size_t j = 0; j < units; ++j) g.v_raw[j] = 1.0 / std::sqrt(slope);
  return g;
}

std::vector<std::string> x_feature_names() {
  return {"I", "month_sin", "month_cos", "tod_sin", "tod_cos", "weekday"};
}

std::vector<Tensor*> Model::parameters() {
  std::vector<Tensor*> out = net.parameters();
  if (kind == ModelKind::kPcnn) {
    out.push_back(&physics.tilde);
    if (g.kind == ControlKind::kLearned) {
      out.push_back(&g.w_raw);
      out.push_back(&g.beta);
      out.push_back(&g.v_raw);
    }
  }
  return out;
}

std::vector<std::string> Model::parameter_names() const {
  std::vector<std::string> out = net.parameter_names();
  if (kind == ModelKind::kPcnn) {
    out.push_back("physics.tilde");
    if (g.kind == ControlKind::kLearned) {
      out.push_back("g.w_raw");
      out.push_back("g.beta");
      out.push_back("g.v_raw");
    }
  }
  return out;
}

Model make_pcnn(const nn::NetConfig& config, const PhysicsParams& physics, ControlTransform g,
                std::uint64_t seed) {
  std::vector<std::string> layout = x_feature_names();
  layout.push_back("D");
  nn::require_unforced(layout);
  Model m;
  m.kind = ModelKind::kPcnn;
  m.net = nn::init_net(config, std::move(layout), seed);
  m.physics = physics;
  m.g = std::move(g);
  return m;
}

Model make_plain_lstm(const nn::NetConfig& config, std::uint64_t seed) {
  std::vector<std::string> layout = x_feature_names();
  for (const char* name : {"u1", "T_out", "T_neigh", "T"}) layout.emplace_back(name);
  Model m;
  m.kind = ModelKind::kPlainLstm;
  m.net = nn::init_net(config, std::move(layout), seed);
  return m;
}

void validate_window(const Window& w) {
  const std::size_t n = w.t_meas.size();
  if (w.u.size() != n || w.t_out.size() != n || w.t_neigh.size() != n || w.x.rows() != n) {
    throw std::invalid_argument("window channels disagree in length");
  }
  if (w.x.cols() != kFeatureCount) throw std::invalid_argument("window feature width mismatch");
  if (n < w.warm + 1) throw std::invalid_argument("window shorter than warm start + 1");
}

BoundModel bind(Tape& tape, const Model& model, bool trainable) {
  std::vector<Var> vars;
  for (const Tensor* t : const_cast<Model&>(model).parameters()) {
    vars.push_back(trainable ? tape.leaf(*t) : tape.constant(*t));
  }
  return bind_vars(model, vars);
}

BoundModel bind_vars(const Model& model, std::span<const Var> vars) {
  const std::size_t n_net = model.net.parameters().size();
  const std::size_t n_g = model.g.kind == ControlKind::kLearned ? 3 : 0;
  const std::size_t expected = n_net + (model.kind == ModelKind::kPcnn ? 1 + n_g : 0);
  if (vars.size() != expected) throw std::invalid_argument("bind_vars: variable count does not match the model");
  BoundModel b;
  b.model = &model;
  b.net = nn::bind_vars(model.net, vars.first(n_net));
  b.params.assign(vars.begin(), vars.end());
  if (model.kind == ModelKind::kPcnn) {
    b.tilde = vars[n_net];
    if (n_g > 0) {
      b.w_raw = vars[n_net + 1];
      b.beta = vars[n_net + 2];
      b.v_raw = vars[n_net + 3];
    }
  }
  return b;
}

ForwardResult forward(Tape& tape, const BoundModel& bound, std::span<const Window* const> batch) {
  const Model& model = *bound.model;
  const std::size_t warm = common_warm(batch);
  const std::size_t n = batch.size();
  std::size_t rows = 0;
  for (const Window* w : batch) rows = std::max(rows, w->rows());

  ForwardResult fr;
  fr.rows = rows;
  const Var t0 = tape.constant(column(batch, 0, meas));
  fr.t.push_back(t0);
  nn::LstmState state = nn::initial_state(tape, bound.net, n);

  if (model.kind == ModelKind::kPlainLstm) {
    Var t_prev = t0;
    for (std::size_t k = 0; k + 1 < rows; ++k) {
      const Var tk = k < warm ? tape.constant(column(batch, k, meas)) : t_prev;
      Tensor drivers(n, 3);
      for (std::size_t b = 0; b < n; ++b) {
        const std::size_t r = std::min(k, batch[b]->rows() - 1);
        drivers(b, 0) = batch[b]->u[r];
        drivers(b, 1) = batch[b]->t_out[r];
        drivers(b, 2) = batch[b]->t_neigh[r];
      }
      const Var in = tape.concat_cols({tape.constant(features(batch, k)), tape.constant(std::move(drivers)), tk});
      t_prev = tape.add(tk, nn::f_forward(tape, bound.net, in, state));
      fr.t.push_back(t_prev);
    }
    return fr;
  }

  const PhysicsParams& p = model.physics;
  const Var a = tape.scale(tape.slice_cols(bound.tilde, 0, 1), p.a0);
  const Var bb = tape.scale(tape.slice_cols(bound.tilde, 1, 1), p.b0);
  const Var c = tape.scale(tape.slice_cols(bound.tilde, 2, 1), p.c0);
  const Var d = tape.scale(tape.slice_cols(bound.tilde, 3, 1), p.d0);
  const ControlTransform& g = model.g;
  Var sq_w, sq_v, tanh_beta;
  if (g.kind == ControlKind::kLearned) {
    sq_w = tape.square(bound.w_raw);
    sq_v = tape.square(bound.v_raw);
    tanh_beta = tape.broadcast_rows(tape.tanh(bound.beta), n);
  }

  Var dk = t0;
  Var ek = tape.constant(Tensor(n, 1));
  fr.d.push_back(dk);
  fr.e.push_back(ek);
  Var t_prev = t0;
  for (std::size_t k = 0; k + 1 < rows; ++k) {
    const Var tk = k < warm ? tape.constant(column(batch, k, meas)) : t_prev;
    const Var in = tape.concat_cols({tape.constant(features(batch, k)), dk});
    const Var dn = tape.add(dk, nn::f_forward(tape, bound.net, in, state));

    const Tensor uk = column(batch, k, ctrl);
    Var gk;
    switch (g.kind) {
      case ControlKind::kIdentity:
        gk = tape.constant(uk);
        break;
      case ControlKind::kRadiator: {
        Tensor um = uk;
        for (auto& v : um.values()) v *= g.mass_flow;
        gk = tape.mul(tape.constant(std::move(um)),
                      tape.sub(tape.constant(Tensor(n, 1, g.water_temperature)), tk));
        break;
      }
      case ControlKind::kLearned: {
        const Var z = tape.tanh(tape.add_row(tape.matmul(tape.constant(uk), sq_w), bound.beta));
        gk = tape.matmul(tape.sub(z, tanh_beta), sq_v);
        break;
      }
    }
    Tensor heat_mask(n, 1), cool_mask(n, 1);
    const Tensor& gv = tape.value(gk);
    for (std::size_t b = 0; b < n; ++b) {
      heat_mask[b] = gv[b] >= 0.0 ? 1.0 : 0.0;
      cool_mask[b] = 1.0 - heat_mask[b];
    }
    const Var forced = tape.add(tape.mul_scalar(tape.mul(gk, tape.constant(std::move(heat_mask))), a),
                                tape.mul_scalar(tape.mul(gk, tape.constant(std::move(cool_mask))), d));
    const Var loss_out = tape.mul_scalar(tape.sub(tk, tape.constant(column(batch, k, tout))), bb);
    const Var loss_neigh = tape.mul_scalar(tape.sub(tk, tape.constant(column(batch, k, tneigh))), c);
    const Var en = tape.sub(tape.sub(tape.add(ek, forced), loss_out), loss_neigh);

    dk = dn;
    ek = en;
    t_prev = tape.add(dk, ek);
    fr.d.push_back(dk);
    fr.e.push_back(ek);
    fr.t.push_back(t_prev);
  }
  return fr;
}

Var window_loss(Tape& tape, const ForwardResult& fr, std::span<const Window* const> batch,
                bool include_warm) {
  const std::size_t warm = common_warm(batch);
  const std::size_t first = include_warm ? 1 : warm;
  const std::size_t n = batch.size();
  const std::size_t cols = fr.rows - first;
  Tensor target(n, cols), weight(n, cols);
  for (std::size_t b = 0; b < n; ++b) {
    const Window& w = *batch[b];
    const double steps = static_cast<double>(w.rows() - first);
    for (std::size_t r = first; r < fr.rows; ++r) {
      if (r < w.rows()) {
        target(b, r - first) = w.t_meas[r];
        weight(b, r - first) = 1.0 / (steps * static_cast<double>(n));
      } else {
        target(b, r - first) = w.t_meas.back();
      }
    }
  }
  const Var pred = tape.concat_cols(std::span<const Var>(fr.t).subspan(first));
  const Var err = tape.square(tape.sub(pred, tape.constant(std::move(target))));
  return tape.sum(tape.mul(err, tape.constant(std::move(weight))));
}

std::vector<std::vector<double>> predict(const Model& model, std::span<const Window* const> windows) {
  std::vector<std::vector<double>> out;
  out.reserve(windows.size());
  for (std::size_t begin = 0; begin < windows.size(); begin += kPredictChunk) {
    const auto chunk = windows.subspan(begin, std::min(kPredictChunk, windows.size() - begin));
    Tape tape;
    const BoundModel bound = bind(tape, model, false);
    const ForwardResult fr = forward(tape, bound, chunk);
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      std::vector<double> horizon;
      for (std::size_t r = chunk[b]->warm; r < chunk[b]->rows(); ++r) horizon.push_back(tape.value(fr.t[r])[b]);
      out.push_back(std::move(horizon));
    }
  }
  return out;
}

std::vector<double> predict(const Model& model, const Window& window) {
  const Window* w = &window;
  return predict(model, std::span<const Window* const>(&w, 1)).front();
}

Trace trace(const Model& model, const Window& window) {
  const Window* w = &window;
  Tape tape;
  const BoundModel bound = bind(tape, model, false);
  const ForwardResult fr = forward(tape, bound, std::span<const Window* const>(&w, 1));
  Trace tr;
  for (std::size_t r = 0; r < fr.rows; ++r) {
    tr.t.push_back(tape.value(fr.t[r])[0]);
    if (!fr.d.empty()) {
      tr.d.push_back(tape.value(fr.d[r])[0]);
      tr.e.push_back(tape.value(fr.e[r])[0]);
    }
  }
  return tr;
}

UnforcedTrajectory unforced_trajectory(const Model& model, const Window& window) {
  if (model.kind != ModelKind::kPcnn) throw std::invalid_argument("unforced trajectory needs a PCNN");
  validate_window(window);
  const Window* w = &window;
  const std::span<const Window* const> batch(&w, 1);
  Tape tape;
  const nn::BoundNet net = nn::bind(tape, model.net, false);
  nn::LstmState state = nn::initial_state(tape, net, 1);
  UnforcedTrajectory out;
  Var dk = tape.constant(Tensor::scalar(window.t_meas[0]));
  out.d.push_back(window.t_meas[0]);
  for (std::size_t k = 0; k + 1 < window.rows(); ++k) {
    const Var f = nn::f_forward(tape, net, tape.concat_cols({tape.constant(features(batch, k)), dk}), state);
    dk = tape.add(dk, f);
    out.f.push_back(tape.value(f)[0]);
    out.d.push_back(tape.value(dk)[0]);
  }
  return out;
}

std::vector<double> closed_form(const Model& model, const Window& window) {
  if (model.g.depends_on_temperature()) {
    throw std::invalid_argument("closed form needs a temperature-independent control transform");
  }
  const UnforcedTrajectory uf = unforced_trajectory(model, window);
  const PhysicsParams& p = model.physics;
  const std::size_t warm = window.warm;
  auto forced = [&](std::size_t r) {
    const double g = model.g.apply(window.u[r], 0.0);
    return (g >= 0.0 ? p.a() : p.d()) * g;
  };
  // Teacher-forced warm start: E collects forcing and losses against the
  // measured temperatures.
  double e = 0.0;
  for (std::size_t r = 0; r < warm; ++r) {
    e += forced(r) - p.b() * (window.t_meas[r] - window.t_out[r]) -
         p.c() * (window.t_meas[r] - window.t_neigh[r]);
  }
  const double t_origin = uf.d[warm] + e;
  const double decay = p.decay();
  std::vector<double> out{t_origin};
  for (std::size_t i = 1; i < window.horizon(); ++i) {
    double sum = 0.0;
    double power = 1.0;
    for (std::size_t j = 1; j <= i; ++j) {
      const std::size_t m = warm + i - j;
      sum += power * (uf.f[m] + forced(m) + p.b() * window.t_out[m] + p.c() * window.t_neigh[m]);
      power *= decay;
    }
    out.push_back(power * t_origin + sum);
  }
  return out;
}

StepState initial_step_state(const Model& model, double t0) {
  StepState s;
  s.d = t0;
  const std::size_t hidden = model.net.h0.cols();
  for (std::size_t l = 0; l < model.net.h0.rows(); ++l) {
    Tensor h(1, hidden), c(1, hidden);
    for (std::size_t j = 0; j < hidden; ++j) {
      h[j] = model.net.h0(l, j);
      c[j] = model.net.c0(l, j);
    }
    s.h.push_back(std::move(h));
    s.c.push_back(std::move(c));
  }
  return s;
}

StepResult pcnn_step(const Model& model, const StepState& state, std::span<const double> x, double u,
                     double t_out, double t_neigh, double t_k) {
  if (model.kind != ModelKind::kPcnn) throw std::invalid_argument("pcnn_step needs a PCNN");
  if (x.size() != kFeatureCount) throw std::invalid_argument("pcnn_step: wrong feature count");
  Tape tape;
  const nn::BoundNet net = nn::bind(tape, model.net, false);
  nn::LstmState ls;
  for (std::size_t l = 0; l < state.h.size(); ++l) {
    ls.h.push_back(tape.constant(state.h[l]));
    ls.c.push_back(tape.constant(state.c[l]));
  }
  Tensor in(1, kFeatureCount + 1);
  std::copy(x.begin(), x.end(), in.data());
  in[kFeatureCount] = state.d;
  const Var f = nn::f_forward(tape, net, tape.constant(std::move(in)), ls);

  const PhysicsParams& p = model.physics;
  const double g = model.g.apply(u, t_k);
  StepResult r;
  r.f = tape.value(f)[0];
  r.state.d = state.d + r.f;
  r.state.e = state.e + (g >= 0.0 ? p.a() : p.d()) * g - p.b() * (t_k - t_out) - p.c() * (t_k - t_neigh);
  for (std::size_t l = 0; l < ls.h.size(); ++l) {
    r.state.h.push_back(tape.value(ls.h[l]));
    r.state.c.push_back(tape.value(ls.c[l]));
  }
  r.t_next = r.state.d + r.state.e;
  return r;
}

std::string_view input_name(InputKind kind) {
  switch (kind) {
    case InputKind::kControl: return "u";
    case InputKind::kOutside: return "T_out";
    case InputKind::kNeighbor: return "T_neigh";
  }
  return "u";
}

namespace {

std::size_t query_row(const Window& w, const SensitivityQuery& q) {
  if (q.j < 1 || q.j > q.i || q.i > w.horizon()) {
    throw std::out_of_range("sensitivity query needs 1 <= j <= i <= horizon");
  }
  return w.warm - 1 + q.i - q.j;
}

std::vector<double>& channel(Window& w, InputKind kind) {
  switch (kind) {
    case InputKind::kControl: return w.u;
    case InputKind::kOutside: return w.t_out;
    case InputKind::kNeighbor: return w.t_neigh;
  }
  return w.u;
}

}  // namespace

double analytic_sensitivity(const Model& model, const Window& window, const SensitivityQuery& q) {
  if (model.kind != ModelKind::kPcnn) throw std::invalid_argument("analytic sensitivity needs a PCNN");
  const std::size_t m = query_row(window, q);
  const PhysicsParams& p = model.physics;
  const double decay_power = std::pow(p.decay(), static_cast<double>(q.j - 1));
  switch (q.input) {
    case InputKind::kControl: {
      double t_used = window.t_meas[m];
      if (model.g.depends_on_temperature() && m >= window.warm) t_used = trace(model, window).t[m];
      const double g = model.g.apply(window.u[m], t_used);
      return decay_power * (g >= 0.0 ? p.a() : p.d()) * model.g.derivative(window.u[m], t_used);
    }
    case InputKind::kOutside: return decay_power * p.b();
    case InputKind::kNeighbor: return decay_power * p.c();
  }
  return 0.0;
}

std::vector<double> numeric_sensitivities(const Model& model, const Window& window,
                                          std::span<const SensitivityQuery> queries, double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("perturbation must be positive");
  std::vector<Window> variants{window};
  struct Plan {
    std::size_t plus, minus;
    double step;
  };
  std::vector<Plan> plans;
  for (const auto& q : queries) {
    const std::size_t m = query_row(window, q);
    Plan plan{0, 0, delta};
    Window shifted = window;
    if (q.input == InputKind::kControl && model.kind == ModelKind::kPcnn) {
      const bool heating = model.g.apply(window.u[m], window.t_meas[m]) >= 0.0;
      shifted.u[m] += heating ? delta : -delta;
      (heating ? plan.plus : plan.minus) = variants.size();
      variants.push_back(std::move(shifted));
    } else {
      Window lowered = window;
      channel(shifted, q.input)[m] += delta;
      channel(lowered, q.input)[m] -= delta;
      plan.step = 2.0 * delta;
      plan.plus = variants.size();
      variants.push_back(std::move(shifted));
      plan.minus = variants.size();
      variants.push_back(std::move(lowered));
    }
    plans.push_back(plan);
  }
  std::vector<const Window*> ptrs;
  for (const auto& v : variants) ptrs.push_back(&v);
  const auto preds = predict(model, ptrs);
  std::vector<double> out;
  for (std::size_t k = 0; k < queries.size(); ++k) {
    const std::size_t idx = queries[k].i - 1;
    out.push_back((preds[plans[k].plus][idx] - preds[plans[k].minus][idx]) / plans[k].step);
  }
  return out;
}

GreyBoxView grey_box_coeffs(const Model& model) {
  const PhysicsParams& p = model.physics;
  GreyBoxView v;
  v.a_matrix = p.decay();
  v.b_u_heating = p.a();
  v.b_u_cooling = p.d();
  v.b_w1[0] = p.b();
  v.b_w1[1] = p.c();
  v.b_d = -1.0;
  return v;
}

KeyValueFile model_to_kv(const Model& model) {
  KeyValueFile kv;
  kv.set("format", std::string(kFormat));
  kv.set("model.kind", kind_name(model.kind));
  nn::save_net(model.net, kv, "net.");
  if (model.kind == ModelKind::kPcnn) {
    const PhysicsParams& p = model.physics;
    kv.set("physics.a0", p.a0);
    kv.set("physics.b0", p.b0);
    kv.set("physics.c0", p.c0);
    kv.set("physics.d0", p.d0);
    kv.set("physics.a_tilde", p.tilde[0]);
    kv.set("physics.b_tilde", p.tilde[1]);
    kv.set("physics.c_tilde", p.tilde[2]);
    kv.set("physics.d_tilde", p.tilde[3]);
    kv.set("g.kind", control_name(model.g.kind));
    if (model.g.kind == ControlKind::kRadiator) {
      kv.set("g.mass_flow", model.g.mass_flow);
      kv.set("g.water_temperature", model.g.water_temperature);
    }
    if (model.g.kind == ControlKind::kLearned) {
      kv.set("g.w_raw", encode_tensor(model.g.w_raw));
      kv.set("g.beta", encode_tensor(model.g.beta));
      kv.set("g.v_raw", encode_tensor(model.g.v_raw));
    }
  }
  if (model.power_max > 0.0) kv.set("scaling.power_max", model.power_max);
  for (const auto& [name, range] : model.normalizer.ranges()) {
    kv.set("norm." + name + ".min", range.first);
    kv.set("norm." + name + ".max", range.second);
  }
  return kv;
}

Model model_from_kv(const KeyValueFile& kv) {
  if (kv.get("format", "") != kFormat) throw std::runtime_error("not a thermoseed checkpoint");
  Model m;
  const std::string kind = kv.get("model.kind");
  if (kind == "pcnn") {
    m.kind = ModelKind::kPcnn;
  } else if (kind == "plain_lstm") {
    m.kind = ModelKind::kPlainLstm;
  } else {
    throw std::runtime_error("unknown model kind '" + kind + "'");
  }
  m.net = nn::load_net(kv, "net.");
  if (m.kind == ModelKind::kPcnn) {
    nn::require_unforced(m.net.layout);
    PhysicsParams& p = m.physics;
    p.a0 = kv.get_double("physics.a0");
    p.b0 = kv.get_double("physics.b0");
    p.c0 = kv.get_double("physics.c0");
    p.d0 = kv.get_double("physics.d0");
    p.tilde[0] = kv.get_double("physics.a_tilde");
    p.tilde[1] = kv.get_double("physics.b_tilde");
    p.tilde[2] = kv.get_double("physics.c_tilde");
    p.tilde[3] = kv.get_double("physics.d_tilde");
    m.g.kind = parse_control(kv.get("g.kind"));
    if (m.g.kind == ControlKind::kRadiator) {
      m.g.mass_flow = kv.get_double("g.mass_flow");
      m.g.water_temperature = kv.get_double("g.water_temperature");
    }
    if (m.g.kind == ControlKind::kLearned) {
      m.g.w_raw = parse_tensor(kv.get("g.w_raw"));
      m.g.beta = parse_tensor(kv.get("g.beta"));
      m.g.v_raw = parse_tensor(kv.get("g.v_raw"));
    }
  }
  m.power_max = kv.get_double("scaling.power_max", 0.0);
  for (const auto& [key, value] : kv.entries()) {
    if (key.rfind("norm.", 0) != 0 || !key.ends_with(".min")) continue;
    const std::string name = key.substr(5, key.size() - 9);
    m.normalizer.add(name, kv.get_double(key), kv.get_double("norm." + name + ".max"));
  }
  return m;
}

void save_model(const Model& model, const std::filesystem::path& path) {
  model_to_kv(model).write(path, "thermoseed checkpoint v1");
}

Model load_model(const std::filesystem::path& path) { return model_from_kv(KeyValueFile::read(path)); }

}  // namespace thermoseed::pcnn

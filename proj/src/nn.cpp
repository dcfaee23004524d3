#include "thermoseed/nn.hpp"

#include <cctype>
#include <cmath>
#include <random>
#include <stdexcept>

namespace thermoseed::nn {

using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

Dense make_dense(std::size_t in, std::size_t out, std::mt19937_64& rng, double scale = 1.0) {
  Dense d{Tensor(in, out), Tensor(1, out)};
  const double bound = scale / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : d.w.values()) v = dist(rng);
  return d;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t end = s.find(',', pos);
    if (end == std::string::npos) end = s.size();
    if (end > pos) out.push_back(std::stoul(s.substr(pos, end - pos)));
    pos = end + 1;
  }
  return out;
}

}  // namespace

bool is_forced_feature(std::string_view name) {
  if (name == "T_out" || name == "T_neigh" || name == "Q_heat" || name == "P_tot") return true;
  if (name.empty() || name[0] != 'u') return false;
  for (std::size_t i = 1; i < name.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(name[i]))) return false;
  }
  return true;
}

void require_unforced(std::span<const std::string> layout) {
  for (const auto& name : layout) {
    if (is_forced_feature(name)) {
      throw std::invalid_argument("feature '" + name +
                                  "' is a control or exogenous temperature and may not enter f");
    }
  }
}

std::vector<Tensor*> DynamicsNet::parameters() {
  std::vector<Tensor*> out;
  for (auto& d : encoder) {
    out.push_back(&d.w);
    out.push_back(&d.b);
  }
  for (auto& l : lstm) {
    out.push_back(&l.w);
    out.push_back(&l.b);
  }
  out.push_back(&h0);
  out.push_back(&c0);
  for (auto& d : decoder) {
    out.push_back(&d.w);
    out.push_back(&d.b);
  }
  out.push_back(&output.w);
  out.push_back(&output.b);
  return out;
}

std::vector<const Tensor*> DynamicsNet::parameters() const {
  std::vector<const Tensor*> out;
  for (Tensor* t : const_cast<DynamicsNet*>(this)->parameters()) out.push_back(t);
  return out;
}

std::vector<std::string> DynamicsNet::parameter_names() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    out.push_back("enc" + std::to_string(i) + ".w");
    out.push_back("enc" + std::to_string(i) + ".b");
  }
  for (std::size_t i = 0; i < lstm.size(); ++i) {
    out.push_back("lstm" + std::to_string(i) + ".w");
    out.push_back("lstm" + std::to_string(i) + ".b");
  }
  out.push_back("lstm.h0");
  out.push_back("lstm.c0");
  for (std::size_t i = 0; i < decoder.size(); ++i) {
    out.push_back("dec" + std::to_string(i) + ".w");
    out.push_back("dec" + std::to_string(i) + ".b");
  }
  out.push_back("out.w");
  out.push_back("out.b");
  return out;
}

std::size_t DynamicsNet::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : parameters()) n += t->size();
  return n;
}

std::size_t parameter_count(const NetConfig& c, std::size_t input_dim) {
  std::size_t n = 0;
  std::size_t in = input_dim;
  for (std::size_t w : c.encoder) {
    n += in * w + w;
    in = w;
  }
  const std::size_t h = c.lstm_hidden;
  for (std::size_t l = 0; l < c.lstm_layers; ++l) {
    n += (in + h) * 4 * h + 4 * h;
    in = h;
  }
  n += 2 * c.lstm_layers * h;
  for (std::size_t w : c.decoder) {
    n += in * w + w;
    in = w;
  }
  return n + in + 1;
}

DynamicsNet init_net(const NetConfig& config, std::vector<std::string> layout, std::uint64_t seed) {
  if (layout.empty()) throw std::invalid_argument("init_net: empty input layout");
  if (config.lstm_layers == 0 || config.lstm_hidden == 0) {
    throw std::invalid_argument("init_net: LSTM needs at least one layer of positive width");
  }
  DynamicsNet net;
  net.config = config;
  net.layout = std::move(layout);
  std::mt19937_64 rng(seed);
  std::size_t in = net.layout.size();
  for (std::size_t w : config.encoder) {
    net.encoder.push_back(make_dense(in, w, rng));
    in = w;
  }
  const std::size_t h = config.lstm_hidden;
  for (std::size_t l = 0; l < config.lstm_layers; ++l) {
    Dense d = make_dense(in + h, 4 * h, rng);
    net.lstm.push_back(LstmLayer{std::move(d.w), std::move(d.b)});
    in = h;
  }
  net.h0 = Tensor(config.lstm_layers, h);
  net.c0 = Tensor(config.lstm_layers, h);
  for (std::size_t w : config.decoder) {
    net.decoder.push_back(make_dense(in, w, rng));
    in = w;
  }
  net.output = make_dense(in, 1, rng, config.output_init_scale);
  return net;
}

BoundNet bind(Tape& tape, const DynamicsNet& net, bool trainable) {
  std::vector<Var> vars;
  for (const Tensor* t : net.parameters()) vars.push_back(trainable ? tape.leaf(*t) : tape.constant(*t));
  return bind_vars(net, vars);
}

BoundNet bind_vars(const DynamicsNet& net, std::span<const Var> vars) {
  if (vars.size() != 2 * (net.encoder.size() + net.lstm.size() + net.decoder.size()) + 4) {
    throw std::invalid_argument("bind_vars: variable count does not match the network");
  }
  BoundNet b;
  b.net = &net;
  b.params.assign(vars.begin(), vars.end());
  std::size_t k = 0;
  for (std::size_t i = 0; i < net.encoder.size(); ++i) {
    b.enc_w.push_back(vars[k++]);
    b.enc_b.push_back(vars[k++]);
  }
  for (std::size_t i = 0; i < net.lstm.size(); ++i) {
    b.lstm_w.push_back(vars[k++]);
    b.lstm_b.push_back(vars[k++]);
  }
  b.h0 = vars[k++];
  b.c0 = vars[k++];
  for (std::size_t i = 0; i < net.decoder.size(); ++i) {
    b.dec_w.push_back(vars[k++]);
    b.dec_b.push_back(vars[k++]);
  }
  b.out_w = vars[k++];
  b.out_b = vars[k++];
  return b;
}

LstmState initial_state(Tape& tape, const BoundNet& bound, std::size_t batch) {
  LstmState s;
  const std::size_t layers = bound.lstm_w.size();
  for (std::size_t l = 0; l < layers; ++l) {
    s.h.push_back(tape.broadcast_rows(tape.slice_rows(bound.h0, l, 1), batch));
    s.c.push_back(tape.broadcast_rows(tape.slice_rows(bound.c0, l, 1), batch));
  }
  return s;
}

Var lstm_step(Tape& tape, const BoundNet& bound, Var input, LstmState& state) {
  const std::size_t layers = bound.lstm_w.size();
  if (state.h.size() != layers || state.c.size() != layers) {
    throw std::invalid_argument("lstm_step: state does not match the stack depth");
  }
  Var x = input;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t h = tape.value(state.h[l]).cols();
    const Var z = tape.add_row(tape.matmul(tape.concat_cols({x, state.h[l]}), bound.lstm_w[l]),
                               bound.lstm_b[l]);
    const Var i = tape.sigmoid(tape.slice_cols(z, 0, h));
    const Var f = tape.sigmoid(tape.slice_cols(z, h, h));
    const Var g = tape.tanh(tape.slice_cols(z, 2 * h, h));
    const Var o = tape.sigmoid(tape.slice_cols(z, 3 * h, h));
    state.c[l] = tape.add(tape.mul(f, state.c[l]), tape.mul(i, g));
    state.h[l] = tape.mul(o, tape.tanh(state.c[l]));
    x = state.h[l];
  }
  return x;
}

Var dense(Tape& tape, Var w, Var b, Var x, bool relu) {
  const Var y = tape.add_row(tape.matmul(x, w), b);
  return relu ? tape.relu(y) : y;
}

Var f_forward(Tape& tape, const BoundNet& bound, Var input, LstmState& state) {
  if (tape.value(input).cols() != bound.net->input_dim()) {
    throw std::invalid_argument("f_forward: input has " + tape.value(input).shape_string() +
                                ", expected " + std::to_string(bound.net->input_dim()) +
                                " columns");
  }
  Var x = input;
  for (std::size_t i = 0; i < bound.enc_w.size(); ++i) x = dense(tape, bound.enc_w[i], bound.enc_b[i], x, true);
  x = lstm_step(tape, bound, x, state);
  for (std::size_t i = 0; i < bound.dec_w.size(); ++i) x = dense(tape, bound.dec_w[i], bound.dec_b[i], x, true);
  return dense(tape, bound.out_w, bound.out_b, x, false);
}

void save_net(const DynamicsNet& net, KeyValueFile& kv, std::string_view prefix) {
  const std::string p(prefix);
  kv.set(p + "encoder", join_sizes(net.config.encoder));
  kv.set_int(p + "lstm_layers", static_cast<long long>(net.config.lstm_layers));
  kv.set_int(p + "lstm_hidden", static_cast<long long>(net.config.lstm_hidden));
  kv.set(p + "decoder", join_sizes(net.config.decoder));
  kv.set(p + "output_init_scale", net.config.output_init_scale);
  std::string layout;
  for (std::size_t i = 0; i < net.layout.size(); ++i) {
    if (i) layout += ',';
    layout += net.layout[i];
  }
  kv.set(p + "layout", layout);
  const auto names = net.parameter_names();
  const auto params = net.parameters();
  for (std::size_t i = 0; i < names.size(); ++i) kv.set(p + names[i], encode_tensor(*params[i]));
}

DynamicsNet load_net(const KeyValueFile& kv, std::string_view prefix) {
  const std::string p(prefix);
  NetConfig cfg;
  cfg.encoder = parse_sizes(kv.get(p + "encoder"));
  cfg.lstm_layers = static_cast<std::size_t>(kv.get_int(p + "lstm_layers"));
  cfg.lstm_hidden = static_cast<std::size_t>(kv.get_int(p + "lstm_hidden"));
  cfg.decoder = parse_sizes(kv.get(p + "decoder"));
  cfg.output_init_scale = kv.get_double(p + "output_init_scale", 1.0);
  std::vector<std::string> layout;
  const std::string& text = kv.get(p + "layout");
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find(',', pos);
    if (end == std::string::npos) end = text.size();
    layout.push_back(text.substr(pos, end - pos));
    pos = end + 1;
  }
  DynamicsNet net = init_net(cfg, std::move(layout), 0);
  const auto names = net.parameter_names();
  const auto params = net.parameters();
  for (std::size_t i = 0; i < names.size(); ++i) {
    Tensor t = parse_tensor(kv.get(p + names[i]));
    if (!t.same_shape(*params[i])) {
      throw std::runtime_error("checkpoint tensor " + p + names[i] + " has shape " +
                               t.shape_string() + ", expected " + params[i]->shape_string());
    }
    *params[i] = std::move(t);
  }
  return net;
}

}  // namespace thermoseed::nn

#pragma once
// Dense layers, a stacked LSTM and the encoder-LSTM-decoder network used for
// the unforced dynamics f(D, x).
//
// Parameters live in plain tensors owned by DynamicsNet. A forward pass binds
// them to a tape (as leaves when gradients are wanted) and then runs on
// batches: every activation is a (batch x width) matrix.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "thermoseed/autograd.hpp"
#include "thermoseed/kvfile.hpp"

namespace thermoseed::nn {

struct NetConfig {
  std::vector<std::size_t> encoder{32, 32};
  std::size_t lstm_layers = 2;
  std::size_t lstm_hidden = 64;
  std::vector<std::size_t> decoder{32, 32};
  // Multiplies the initial weights of the final scalar layer.
  double output_init_scale = 1.0;
};

struct Dense {
  ad::Tensor w;  // in x out
  ad::Tensor b;  // 1 x out
};

// Gate layout along the 4H columns: input, forget, candidate, output.
struct LstmLayer {
  ad::Tensor w;  // (in + H) x 4H, rows ordered [input; hidden]
  ad::Tensor b;  // 1 x 4H
};

struct DynamicsNet {
  NetConfig config;
  std::vector<std::string> layout;  // input feature names, in column order
  std::vector<Dense> encoder;
  std::vector<LstmLayer> lstm;
  ad::Tensor h0;  // L x H, learned
  ad::Tensor c0;  // L x H, learned
  std::vector<Dense> decoder;
  Dense output;  // last width x 1, linear

  std::size_t input_dim() const { return layout.size(); }
  std::vector<ad::Tensor*> parameters();
  std::vector<const ad::Tensor*> parameters() const;
  std::vector<std::string> parameter_names() const;
  std::size_t parameter_count() const;
};

// Feature names a PCNN's f must never see.
bool is_forced_feature(std::string_view name);
// Throws std::invalid_argument naming the first forced feature in layout.
void require_unforced(std::span<const std::string> layout);

// Weights uniform in +/- 1/sqrt(fan_in), biases and initial states zero.
DynamicsNet init_net(const NetConfig& config, std::vector<std::string> layout, std::uint64_t seed);
std::size_t parameter_count(const NetConfig& config, std::size_t input_dim);

// Tape handles for one bound network.
struct BoundNet {
  const DynamicsNet* net = nullptr;
  std::vector<ad::Var> params;  // same order as DynamicsNet::parameters()
  std::vector<ad::Var> enc_w, enc_b, lstm_w, lstm_b, dec_w, dec_b;
  ad::Var out_w, out_b, h0, c0;
};

BoundNet bind(ad::Tape& tape, const DynamicsNet& net, bool trainable);
// Existing tape variables in DynamicsNet::parameters() order.
BoundNet bind_vars(const DynamicsNet& net, std::span<const ad::Var> vars);

struct LstmState {
  std::vector<ad::Var> h;  // per layer, batch x H
  std::vector<ad::Var> c;
};

LstmState initial_state(ad::Tape& tape, const BoundNet& bound, std::size_t batch);

// One step through all layers; returns the top layer's hidden output.
ad::Var lstm_step(ad::Tape& tape, const BoundNet& bound, ad::Var input, LstmState& state);

ad::Var dense(ad::Tape& tape, ad::Var w, ad::Var b, ad::Var x, bool relu);

// Increment decoder(lstm(encoder(input))), batch x 1. input is batch x
// input_dim with columns in layout order.
ad::Var f_forward(ad::Tape& tape, const BoundNet& bound, ad::Var input, LstmState& state);

// Checkpoint entries under `prefix` (e.g. "net."): config, layout and one
// `name shape hex...` line per tensor.
void save_net(const DynamicsNet& net, KeyValueFile& kv, std::string_view prefix = "net.");
DynamicsNet load_net(const KeyValueFile& kv, std::string_view prefix = "net.");

}  // namespace thermoseed::nn

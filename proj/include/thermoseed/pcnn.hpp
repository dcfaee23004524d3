#pragma once
// Physically consistent forecaster: a neural unforced-dynamics state D in
// parallel with a linear energy accumulator E, predicting T = D + E.
//
//   D[k+1] = D[k] + f(D[k], x[k])
//   E[k+1] = E[k] + ah g(u[k]) - b (T[k] - T_out[k]) - c (T[k] - T_neigh[k])
//
// with ah = a when g(u[k]) >= 0 and d otherwise. Each physical constant is
// s = s0 * s~, where s0 is fixed at initialization and the multiplier s~
// (initially 1) is trained. All quantities are in normalized units.
//
// The same container also holds the plain encoder-LSTM-decoder baseline,
// which sees u, T_out and T_neigh directly and predicts T[k+1] = T[k] + f.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "thermoseed/autograd.hpp"
#include "thermoseed/kvfile.hpp"
#include "thermoseed/nn.hpp"
#include "thermoseed/timeseries.hpp"

namespace thermoseed::pcnn {

struct PhysicsParams {
  double a0 = 0.0;
  double b0 = 0.0;
  double c0 = 0.0;
  double d0 = 0.0;
  ad::Tensor tilde{1, 4, 1.0};  // multipliers [a~, b~, c~, d~]

  double a() const { return a0 * tilde[0]; }
  double b() const { return b0 * tilde[1]; }
  double c() const { return c0 * tilde[2]; }
  double d() const { return d0 * tilde[3]; }
  double decay() const { return 1.0 - b() - c(); }
};

struct ConditionFlags {
  bool a_positive = false;
  bool b_positive = false;
  bool c_positive = false;
  bool d_positive = false;
  bool decay_positive = false;  // 1 - b - c > 0
  bool all() const { return a_positive && b_positive && c_positive && d_positive && decay_positive; }
};

ConditionFlags check_conditions(const PhysicsParams& p);

// p_avg: mean nonzero |g(u)| on the training data; temp_scale: normalized
// units per degree C. Rules of thumb at 15-minute steps: the average power
// moves the zone by 1 degC in 2 h, and a 25 degC colder surrounding cools it
// by 1.5 degC in 6 h.
PhysicsParams init_physics_params(double p_avg, double temp_scale);

enum class ControlKind { kIdentity, kRadiator, kLearned };

// g(u, T). Every variant has g(0, T) = 0 and dg/du > 0.
struct ControlTransform {
  ControlKind kind = ControlKind::kIdentity;
  // Radiator: g = u * mass_flow * (water_temperature - T).
  double mass_flow = 1.0;
  double water_temperature = 0.0;
  // Learned: g = sum_j v_j^2 (tanh(w_j^2 u + beta_j) - tanh(beta_j)).
  ad::Tensor w_raw;  // 1 x J
  ad::Tensor beta;   // 1 x J
  ad::Tensor v_raw;  // J x 1

  double apply(double u, double t) const;
  double derivative(double u, double t) const;  // h(u) = dg/du
  bool depends_on_temperature() const { return kind == ControlKind::kRadiator; }
};

ControlTransform identity_transform();
ControlTransform radiator_transform(double mass_flow, double water_temperature);
// Throws std::invalid_argument for units == 0.
ControlTransform learned_transform(std::size_t units, std::uint64_t seed);

enum class ModelKind { kPcnn, kPlainLstm };

// Feature columns of x, in order.
std::vector<std::string> x_feature_names();
inline constexpr std::size_t kFeatureCount = 6;

struct Model {
  ModelKind kind = ModelKind::kPcnn;
  nn::DynamicsNet net;
  PhysicsParams physics;
  ControlTransform g;
  // Temperatures share one range; u = 0.8 P / power_max keeps u = 0 at zero
  // power.
  ts::Normalizer normalizer;
  double power_max = 0.0;

  std::vector<ad::Tensor*> parameters();
  std::vector<std::string> parameter_names() const;
};

// Throws std::invalid_argument when layout contains a forced feature.
Model make_pcnn(const nn::NetConfig& config, const PhysicsParams& physics, ControlTransform g,
                std::uint64_t seed);
Model make_plain_lstm(const nn::NetConfig& config, std::uint64_t seed);

// One warm-start-plus-horizon sequence in normalized units. Row r carries the
// drivers applied between r and r + 1 and the measured temperature at r.
struct Window {
  std::size_t warm = 12;
  ad::Tensor x;  // rows x kFeatureCount
  std::vector<double> u;
  std::vector<double> t_out;
  std::vector<double> t_neigh;
  std::vector<double> t_meas;
  ts::Timestamp start{};  // timestamp of row 0
  bool heating = true;

  std::size_t rows() const { return t_meas.size(); }
  std::size_t horizon() const { return rows() - warm; }
};

// Throws std::invalid_argument when channels disagree in length or the window
// is shorter than warm + 1.
void validate_window(const Window& w);

struct BoundModel {
  const Model* model = nullptr;
  nn::BoundNet net;
  ad::Var tilde;
  ad::Var w_raw, beta, v_raw;
  std::vector<ad::Var> params;  // same order as Model::parameters()
};

BoundModel bind(ad::Tape& tape, const Model& model, bool trainable);
// Existing tape variables in Model::parameters() order.
BoundModel bind_vars(const Model& model, std::span<const ad::Var> vars);

struct ForwardResult {
  std::size_t rows = 0;
  std::vector<ad::Var> t;  // per row, batch x 1; row 0 is the measurement
  std::vector<ad::Var> d;  // PCNN only
  std::vector<ad::Var> e;
};

// Records the batched recursion. Windows shorter than the longest one are
// padded with their last row; padded outputs are meaningless and must be
// masked by the caller.
ForwardResult forward(ad::Tape& tape, const BoundModel& bound, std::span<const Window* const> batch);

// Mean over windows of the per-step MSE over the horizon (and the warm-start
// predictions too when include_warm is set).
ad::Var window_loss(ad::Tape& tape, const ForwardResult& fr, std::span<const Window* const> batch,
                    bool include_warm = false);

// Horizon predictions T[warm .. rows-1] per window.
std::vector<std::vector<double>> predict(const Model& model, std::span<const Window* const> windows);
std::vector<double> predict(const Model& model, const Window& window);

struct Trace {
  std::vector<double> t;  // every row, row 0 = measurement
  std::vector<double> d;
  std::vector<double> e;
};
Trace trace(const Model& model, const Window& window);

// Unforced trajectory: D per row and f per step, independent of u, T_out and
// T_neigh.
struct UnforcedTrajectory {
  std::vector<double> d;
  std::vector<double> f;
};
UnforcedTrajectory unforced_trajectory(const Model& model, const Window& window);

// Horizon predictions from the explicit sum over the unforced trajectory.
// Throws std::invalid_argument for temperature-dependent g.
std::vector<double> closed_form(const Model& model, const Window& window);

// One step of the recursion carrying the LSTM state explicitly.
struct StepState {
  double d = 0.0;
  double e = 0.0;
  std::vector<ad::Tensor> h;  // per layer, 1 x H
  std::vector<ad::Tensor> c;
};
StepState initial_step_state(const Model& model, double t0);
struct StepResult {
  StepState state;
  double t_next = 0.0;
  double f = 0.0;
};
StepResult pcnn_step(const Model& model, const StepState& state, std::span<const double> x, double u,
                     double t_out, double t_neigh, double t_k);

enum class InputKind { kControl, kOutside, kNeighbor };
std::string_view input_name(InputKind kind);

// Horizon step i in 1..H predicts row warm - 1 + i; lag j in 1..i refers to the
// driver at row warm - 1 + i - j.
struct SensitivityQuery {
  InputKind input = InputKind::kControl;
  std::size_t j = 1;
  std::size_t i = 1;
};

// (1 - b - c)^(j-1) times ah h(u), b or c.
double analytic_sensitivity(const Model& model, const Window& window, const SensitivityQuery& q);

// Finite differences by re-running predict on perturbed copies, all queries
// batched together. Controls use a one-sided difference towards the branch
// of the unperturbed step so the perturbation never crosses a = d switching.
std::vector<double> numeric_sensitivities(const Model& model, const Window& window,
                                          std::span<const SensitivityQuery> queries,
                                          double delta = 1e-3);

// z[k+1] = A z[k] + B_u g(u[k]) + B_w1 . [T_out, T_neigh][k] + B_d xi[k] + xi[k+1]
// with z = T and xi = D.
struct GreyBoxView {
  double a_matrix = 1.0;
  double b_u_heating = 0.0;
  double b_u_cooling = 0.0;
  double b_w1[2] = {0.0, 0.0};
  double b_d = -1.0;
};
GreyBoxView grey_box_coeffs(const Model& model);

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);
KeyValueFile model_to_kv(const Model& model);
Model model_from_kv(const KeyValueFile& kv);

}  // namespace thermoseed::pcnn

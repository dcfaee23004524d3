#pragma once
// Define-by-run reverse-mode automatic differentiation over dense 64-bit
// tensors, plus the Adam optimizer.
//
// A Tape records primitive operations in execution order; node ids are
// therefore already topologically sorted. backward() sweeps the tape in
// reverse and may be called repeatedly: each call recomputes all gradients
// from scratch.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace thermoseed::ad {

class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(1, 1, v); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  // Row-major 2-D view: the last extent is the column count, the rest fold
  // into rows.
  std::size_t rows() const;
  std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  const double& operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  void fill(double v);
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_string() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Handle to a node on a specific tape.
struct Var {
  std::uint32_t id = 0;
};

enum class Op : std::uint8_t {
  kConstant,
  kLeaf,
  kMatmul,
  kAdd,
  kSub,
  kMul,
  kAddRow,
  kScale,
  kMulScalar,
  kSigmoid,
  kTanh,
  kRelu,
  kConcatCols,
  kSliceCols,
  kSliceRows,
  kBroadcastRows,
  kSum,
  kSquare,
};

class Tape {
 public:
  Tape() = default;

  Var constant(Tensor value);
  // A differentiable input. Its gradient is available after backward().
  Var leaf(Tensor value);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  // m (r x c) + row (1 x c) broadcast over rows.
  Var add_row(Var m, Var row);
  Var scale(Var a, double k);
  // a * s where s is 1 x 1.
  Var mul_scalar(Var a, Var s);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var relu(Var a);
  Var concat_cols(std::span<const Var> parts);
  Var concat_cols(std::initializer_list<Var> parts);
  Var slice_cols(Var a, std::size_t start, std::size_t count);
  Var slice_rows(Var a, std::size_t start, std::size_t count);
  Var broadcast_rows(Var row, std::size_t rows);
  Var sum(Var a);
  Var square(Var a);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  double scalar_value(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  // Throws std::invalid_argument if loss is not 1 x 1.
  void backward(Var loss);
  // Zeros (shaped like the node) when the node is not on any path to the loss.
  Tensor grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }
  void clear();

  // Hash of every ReLU activation pattern recorded so far. Two evaluations of
  // the same program with equal signatures lie in the same linear region of
  // all ReLUs.
  std::uint64_t relu_signature() const { return relu_signature_; }

 private:
  struct Node {
    Op op = Op::kConstant;
    bool requires_grad = false;
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    std::size_t offset = 0;
    double k = 0.0;
    std::vector<std::uint32_t> parts;
    Tensor value;
  };

  Var push(Node node);
  void check(Var v) const;
  void accumulate(std::uint32_t id, const Tensor& g);
  Tensor& grad_slot(std::uint32_t id);

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::uint64_t relu_signature_ = 1469598103934665603ull;
};

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

// One bias-corrected Adam update. Moments are created on first use.
// Throws std::invalid_argument on any shape mismatch.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               double lr);

// 0.001 / sqrt(epoch), epoch counted from 1.
double learning_rate_schedule(int epoch, double base = 1e-3);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Coordinates (param index, element index) whose +/- perturbation changed
  // the ReLU activation pattern; differences there are not meaningful.
  std::vector<std::pair<std::size_t, std::size_t>> excluded;
};

// Builds a scalar loss on the given tape from leaves created for `params`.
using TapeFunction = std::function<Var(Tape&, std::span<const Var> leaves)>;

// Central differences per coordinate against backward(); error per
// coordinate is |g_ad - g_fd| / max(1, |g_fd|).
GradCheckResult finite_diff_check(const TapeFunction& f, std::vector<Tensor> params,
                                  double h = 1e-5);

}  // namespace thermoseed::ad

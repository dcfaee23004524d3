#include "thermoseed/autograd.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "thermoseed/kernels.hpp"

namespace thermoseed::ad {

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : shape_{rows, cols}, data_(rows * cols, fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)) {
  std::size_t n = 1;
  for (std::size_t e : shape_) {
    if (e == 0) throw std::invalid_argument("tensor extents must be positive");
    n *= e;
  }
  data_.assign(shape_.empty() ? 0 : n, fill);
}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : shape_{rows, cols}, data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw std::invalid_argument("tensor data length does not match shape");
  }
}

std::size_t Tensor::rows() const {
  if (shape_.empty()) return 0;
  std::size_t r = 1;
  for (std::size_t i = 0; i + 1 < shape_.size(); ++i) r *= shape_[i];
  return r;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string Tensor::shape_string() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << 'x';
    os << shape_[i];
  }
  return os.str();
}

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                                b.shape_string());
  }
}

inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

void Tape::check(Var v) const {
  if (v.id >= nodes_.size()) throw std::out_of_range("variable does not belong to this tape");
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::clear() {
  nodes_.clear();
  grads_.clear();
  relu_signature_ = 1469598103934665603ull;
}

double Tape::scalar_value(Var v) const {
  check(v);
  const Tensor& t = nodes_[v.id].value;
  if (t.size() != 1) throw std::invalid_argument("scalar_value: node is not 1 x 1");
  return t[0];
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = Op::kConstant;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.op = Op::kLeaf;
  n.requires_grad = true;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& A = nodes_[a.id].value;
  const Tensor& B = nodes_[b.id].value;
  if (A.cols() != B.rows()) {
    throw std::invalid_argument("matmul: inner extents differ " + A.shape_string() + " * " +
                                B.shape_string());
  }
  Node n;
  n.op = Op::kMatmul;
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
  n.value = Tensor(A.rows(), B.cols());
  kernels::active().gemm_nn(A.rows(), B.cols(), A.cols(), A.data(), B.data(), n.value.data(),
                            false);
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& A = nodes_[a.id].value;
  const Tensor& B = nodes_[b.id].value;
  require_same(A, B, "add");
  Node n;
  n.op = Op::kAdd;
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
  n.value = Tensor(A.shape());
  kernels::active().add(A.size(), A.data(), B.data(), n.value.data());
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& A = nodes_[a.id].value;
  const Tensor& B = nodes_[b.id].value;
  require_same(A, B, "sub");
  Node n;
  n.op = Op::kSub;
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
  n.value = A;
  kernels::active().axpy(A.size(), -1.0, B.data(), n.value.data());
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& A = nodes_[a.id].value;
  const Tensor& B = nodes_[b.id].value;
  require_same(A, B, "mul");
  Node n;
  n.op = Op::kMul;
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
  n.value = Tensor(A.shape());
  kernels::active().mul(A.size(), A.data(), B.data(), n.value.data());
  return push(std::move(n));
}

Var Tape::add_row(Var m, Var row) {
  check(m);
  check(row);
  const Tensor& M = nodes_[m.id].value;
  const Tensor& R = nodes_[row.id].value;
  if (R.rows() != 1 || R.cols() != M.cols()) {
    throw std::invalid_argument("add_row: row " + R.shape_string() + " does not fit " +
                                M.shape_string());
  }
  Node n;
  n.op = Op::kAddRow;
  n.a = m.id;
  n.b = row.id;
  n.requires_grad = nodes_[m.id].requires_grad || nodes_[row.id].requires_grad;
  n.value = M;
  const auto& k = kernels::active();
  for (std::size_t r = 0; r < M.rows(); ++r) k.axpy(M.cols(), 1.0, R.data(), &n.value(r, 0));
  return push(std::move(n));
}

Var Tape::scale(Var a, double factor) {
  check(a);
  Node n;
  n.op = Op::kScale;
  n.a = a.id;
  n.k = factor;
  n.requires_grad = nodes_[a.id].requires_grad;
  n.value = nodes_[a.id].value;
  for (double& x : n.value.values()) x *= factor;
  return push(std::move(n));
}

Var Tape::mul_scalar(Var a, Var s) {
  check(a);
  check(s);
  const Tensor& S = nodes_[s.id].value;
  if (S.size() != 1) throw std::invalid_argument("mul_scalar: second operand must be 1 x 1");
  Node n;
  n.op = Op::kMulScalar;
  n.a = a.id;
  n.b = s.id;
  n.requires_grad = nodes_[a.id].requires_grad || nodes_[s.id].requires_grad;
  n.value = nodes_[a.id].value;
  const double sv = S[0];
  for (double& x : n.value.values()) x *= sv;
  return push(std::move(n));
}

Var Tape::sigmoid(Var a) {
  check(a);
  Node n;
  n.op = Op::kSigmoid;
  n.a = a.id;
  n.requires_grad = nodes_[a.id].requires_grad;
  n.value = nodes_[a.id].value;
  for (double& x : n.value.values()) x = stable_sigmoid(x);
  return push(std::move(n));
}

Var Tape::tanh(Var a) {
  check(a);
  Node n;
  n.op = Op::kTanh;
  n.a = a.id;
  n.requires_grad = nodes_[a.id].requires_grad;
  n.value = nodes_[a.id].value;
  for (double& x : n.value.values()) x = std::tanh(x);
  return push(std::move(n));
}

Var Tape::relu(Var a) {
  check(a);
  const Tensor& A = nodes_[a.id].value;
  Node n;
  n.op = Op::kRelu;
  n.a = a.id;
  n.requires_grad = nodes_[a.id].requires_grad;
  n.value = Tensor(A.shape());
  kernels::active().relu(A.size(), A.data(), n.value.data());
  for (double x : A.values()) {
    relu_signature_ ^= (x > 0.0) ? 0x9eu : 0x3bu;
    relu_signature_ *= 1099511628211ull;
  }
  return push(std::move(n));
}

Var Tape::concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

Var Tape::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  std::size_t rows = 0;
  std::size_t cols = 0;
  Node n;
  n.op = Op::kConcatCols;
  for (Var p : parts) {
    check(p);
    const Tensor& t = nodes_[p.id].value;
    if (rows == 0) rows = t.rows();
    if (t.rows() != rows) throw std::invalid_argument("concat_cols: row counts differ");
    cols += t.cols();
    n.parts.push_back(p.id);
    n.requires_grad = n.requires_grad || nodes_[p.id].requires_grad;
  }
  n.value = Tensor(rows, cols);
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& t = nodes_[p.id].value;
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(&t(r, 0), t.cols(), &n.value(r, off));
    }
    off += t.cols();
  }
  return push(std::move(n));
}

Var Tape::slice_cols(Var a, std::size_t start, std::size_t count) {
  check(a);
  const Tensor& A = nodes_[a.id].value;
  if (count == 0 || start + count > A.cols()) throw std::out_of_range("slice_cols: bad range");
  Node n;
  n.op = Op::kSliceCols;
  n.a = a.id;
  n.offset = start;
  n.requires_grad = nodes_[a.id].requires_grad;
  n.value = Tensor(A.rows(), count);
  for (std::size_t r = 0; r < A.rows(); ++r) std::copy_n(&A(r, start), count, &n.value(r, 0));
  return push(std::move(n));
}

Var Tape::slice_rows(Var a, std::size_t start, std::size_t count) {
  check(a);
  const Tensor& A = nodes_[a.id].value;
  if (count == 0 || start + count > A.rows()) throw std::out_of_range("slice_rows: bad range");
  Node n;
  n.op = Op::kSliceRows;
  n.a = a.id;
  n.offset = start;
  n.requires_grad = nodes_[a.id].requires_grad;
  n.value = Tensor(count, A.cols());
  std::copy_n(&A(start, 0), count * A.cols(), n.value.data());
  return push(std::move(n));
}

Var Tape::broadcast_rows(Var row, std::size_t rows) {
  check(row);
  const Tensor& R = nodes_[row.id].value;
  if (R.rows() != 1 || rows == 0) throw std::invalid_argument("broadcast_rows: need a 1 x c row");
  Node n;
  n.op = Op::kBroadcastRows;
  n.a = row.id;
  n.requires_grad = nodes_[row.id].requires_grad;
  n.value = Tensor(rows, R.cols());
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(R.data(), R.cols(), &n.value(r, 0));
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  check(a);
  const Tensor& A = nodes_[a.id].value;
  Node n;
  n.op = Op::kSum;
  n.a = a.id;
  n.requires_grad = nodes_[a.id].requires_grad;
  n.value = Tensor::scalar(kernels::active().sum(A.size(), A.data()));
  return push(std::move(n));
}

Var Tape::square(Var a) {
  check(a);
  const Tensor& A = nodes_[a.id].value;
  Node n;
  n.op = Op::kSquare;
  n.a = a.id;
  n.requires_grad = nodes_[a.id].requires_grad;
  n.value = Tensor(A.shape());
  kernels::active().mul(A.size(), A.data(), A.data(), n.value.data());
  return push(std::move(n));
}

Tensor& Tape::grad_slot(std::uint32_t id) {
  Tensor& g = grads_[id];
  if (g.empty()) g = Tensor(nodes_[id].value.shape(), 0.0);
  return g;
}

void Tape::accumulate(std::uint32_t id, const Tensor& g) {
  if (!nodes_[id].requires_grad) return;
  Tensor& slot = grads_[id];
  if (slot.empty()) {
    slot = g;
    return;
  }
  kernels::active().axpy(g.size(), 1.0, g.data(), slot.data());
}

void Tape::backward(Var loss) {
  check(loss);
  if (nodes_[loss.id].value.size() != 1) {
    throw std::invalid_argument("backward: loss must be a 1 x 1 tensor, got " +
                                nodes_[loss.id].value.shape_string());
  }
  grads_.assign(nodes_.size(), Tensor());
  if (!nodes_[loss.id].requires_grad) return;
  grads_[loss.id] = Tensor(nodes_[loss.id].value.shape(), 1.0);
  const auto& k = kernels::active();

  for (std::size_t idx = loss.id + 1; idx-- > 0;) {
    const Node& n = nodes_[idx];
    if (!n.requires_grad || grads_[idx].empty()) continue;
    const Tensor& g = grads_[idx];
    const bool ga = n.op != Op::kConstant && n.op != Op::kLeaf && n.op != Op::kConcatCols &&
                    nodes_[n.a].requires_grad;
    switch (n.op) {
      case Op::kConstant:
      case Op::kLeaf:
        break;
      case Op::kMatmul: {
        const Tensor& A = nodes_[n.a].value;
        const Tensor& B = nodes_[n.b].value;
        if (ga) {
          k.gemm_nt(A.rows(), A.cols(), B.cols(), g.data(), B.data(), grad_slot(n.a).data(),
                    true);
        }
        if (nodes_[n.b].requires_grad) {
          k.gemm_tn(B.rows(), B.cols(), A.rows(), A.data(), g.data(), grad_slot(n.b).data(),
                    true);
        }
        break;
      }
      case Op::kAdd:
        accumulate(n.a, g);
        accumulate(n.b, g);
        break;
      case Op::kSub:
        accumulate(n.a, g);
        if (nodes_[n.b].requires_grad) k.axpy(g.size(), -1.0, g.data(), grad_slot(n.b).data());
        break;
      case Op::kMul:
        if (ga) k.mul_acc(g.size(), g.data(), nodes_[n.b].value.data(), grad_slot(n.a).data());
        if (nodes_[n.b].requires_grad) {
          k.mul_acc(g.size(), g.data(), nodes_[n.a].value.data(), grad_slot(n.b).data());
        }
        break;
      case Op::kAddRow: {
        accumulate(n.a, g);
        if (nodes_[n.b].requires_grad) {
          Tensor& gr = grad_slot(n.b);
          for (std::size_t r = 0; r < g.rows(); ++r) k.axpy(g.cols(), 1.0, &g(r, 0), gr.data());
        }
        break;
      }
      case Op::kScale:
        if (ga) k.axpy(g.size(), n.k, g.data(), grad_slot(n.a).data());
        break;
      case Op::kMulScalar: {
        const Tensor& A = nodes_[n.a].value;
        const double s = nodes_[n.b].value[0];
        if (ga) k.axpy(g.size(), s, g.data(), grad_slot(n.a).data());
        if (nodes_[n.b].requires_grad) grad_slot(n.b)[0] += k.dot(g.size(), g.data(), A.data());
        break;
      }
      case Op::kSigmoid: {
        if (!ga) break;
        Tensor& gs = grad_slot(n.a);
        const Tensor& y = n.value;
        for (std::size_t i = 0; i < g.size(); ++i) gs[i] += g[i] * y[i] * (1.0 - y[i]);
        break;
      }
      case Op::kTanh: {
        if (!ga) break;
        Tensor& gs = grad_slot(n.a);
        const Tensor& y = n.value;
        for (std::size_t i = 0; i < g.size(); ++i) gs[i] += g[i] * (1.0 - y[i] * y[i]);
        break;
      }
      case Op::kRelu:
        if (ga) {
          k.relu_backward(g.size(), nodes_[n.a].value.data(), g.data(), grad_slot(n.a).data());
        }
        break;
      case Op::kConcatCols: {
        std::size_t off = 0;
        for (std::uint32_t p : n.parts) {
          const std::size_t pc = nodes_[p].value.cols();
          if (nodes_[p].requires_grad) {
            Tensor& gp = grad_slot(p);
            for (std::size_t r = 0; r < g.rows(); ++r) k.axpy(pc, 1.0, &g(r, off), &gp(r, 0));
          }
          off += pc;
        }
        break;
      }
      case Op::kSliceCols: {
        if (!ga) break;
        Tensor& gs = grad_slot(n.a);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          k.axpy(g.cols(), 1.0, &g(r, 0), &gs(r, n.offset));
        }
        break;
      }
      case Op::kSliceRows:
        if (ga) k.axpy(g.size(), 1.0, g.data(), &grad_slot(n.a)(n.offset, 0));
        break;
      case Op::kBroadcastRows: {
        if (!ga) break;
        Tensor& gs = grad_slot(n.a);
        for (std::size_t r = 0; r < g.rows(); ++r) k.axpy(g.cols(), 1.0, &g(r, 0), gs.data());
        break;
      }
      case Op::kSum: {
        if (!ga) break;
        Tensor& gs = grad_slot(n.a);
        for (double& x : gs.values()) x += g[0];
        break;
      }
      case Op::kSquare:
        if (ga) {
          Tensor& gs = grad_slot(n.a);
          const Tensor& A = nodes_[n.a].value;
          for (std::size_t i = 0; i < g.size(); ++i) gs[i] += 2.0 * A[i] * g[i];
        }
        break;
    }
  }
}

Tensor Tape::grad(Var v) const {
  check(v);
  if (v.id < grads_.size() && !grads_[v.id].empty()) return grads_[v.id];
  return Tensor(nodes_[v.id].value.shape(), 0.0);
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               double lr) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("adam_step: parameter and gradient counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) require_same(*params[i], grads[i], "adam_step");
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.emplace_back(p->shape(), 0.0);
      state.v.emplace_back(p->shape(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: optimizer state belongs to a different parameter set");
  }
  for (std::size_t i = 0; i < params.size(); ++i) require_same(*params[i], state.m[i], "adam_step");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    const Tensor& g = grads[i];
    for (std::size_t e = 0; e < p.size(); ++e) {
      m[e] = state.beta1 * m[e] + (1.0 - state.beta1) * g[e];
      v[e] = state.beta2 * v[e] + (1.0 - state.beta2) * g[e] * g[e];
      const double mhat = m[e] / c1;
      const double vhat = v[e] / c2;
      p[e] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

double learning_rate_schedule(int epoch, double base) {
  if (epoch < 1) throw std::invalid_argument("epochs are counted from 1");
  return base / std::sqrt(static_cast<double>(epoch));
}

namespace {

struct Evaluation {
  double loss;
  std::uint64_t signature;
};

Evaluation evaluate(const TapeFunction& f, const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const Tensor& p : params) leaves.push_back(tape.leaf(p));
  const Var loss = f(tape, leaves);
  return {tape.scalar_value(loss), tape.relu_signature()};
}

}  // namespace

GradCheckResult finite_diff_check(const TapeFunction& f, std::vector<Tensor> params, double h) {
  Tape tape;
  std::vector<Var> leaves;
  for (const Tensor& p : params) leaves.push_back(tape.leaf(p));
  const Var loss = f(tape, leaves);
  tape.backward(loss);
  const std::uint64_t base_signature = tape.relu_signature();

  GradCheckResult out;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const Tensor analytic = tape.grad(leaves[pi]);
    for (std::size_t e = 0; e < params[pi].size(); ++e) {
      const double orig = params[pi][e];
      params[pi][e] = orig + h;
      const Evaluation plus = evaluate(f, params);
      params[pi][e] = orig - h;
      const Evaluation minus = evaluate(f, params);
      params[pi][e] = orig;
      if (plus.signature != base_signature || minus.signature != base_signature) {
        out.excluded.emplace_back(pi, e);
        continue;
      }
      const double fd = (plus.loss - minus.loss) / (2.0 * h);
      const double err = std::abs(analytic[e] - fd) / std::max(1.0, std::abs(fd));
      out.max_rel_error = std::max(out.max_rel_error, err);
      ++out.checked;
    }
  }
  return out;
}

}  // namespace thermoseed::ad

#include "mma/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>

#include "mma/error.hpp"

namespace mma {

namespace detail {

struct TensorNode {
  std::vector<std::size_t> shape;
  std::vector<double> values;
  std::vector<double> grad;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;
  const char* op = "leaf";
  bool requires_grad = false;
  bool leaf = true;
  bool consumed = false;

  std::size_t numel() const { return values.size(); }

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
};

}  // namespace detail

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

namespace {

thread_local int g_no_grad_depth = 0;

bool grad_enabled() { return g_no_grad_depth == 0; }

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

void validate_shape(const std::vector<std::size_t>& shape, const char* op) {
  if (shape.empty())
    throw Error(std::string(op) + ": rank-0 shapes are not supported");
  for (std::size_t d : shape) {
    if (d == 0)
      throw Error(std::string(op) + ": shape " + shape_str(shape) +
                  " has a zero-length axis");
  }
}

void check_finite(const std::vector<double>& values, const char* op) {
  for (double v : values) {
    if (!std::isfinite(v))
      throw Error(std::string(op) +
                  ": produced a non-finite value (overflow or invalid input)");
  }
}

// ---------------------------------------------------------------------------
// Broadcasting machinery

struct BcastPlan {
  std::vector<std::size_t> out_shape;
  std::vector<std::size_t> a_stride;  // 0 on stretched axes
  std::vector<std::size_t> b_stride;
  std::size_t total = 1;
};

std::vector<std::size_t> row_major_strides(const std::vector<std::size_t>& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;)
    strides[i - 1] = strides[i] * shape[i];
  return strides;
}

BcastPlan make_bcast_plan(const std::vector<std::size_t>& a,
                          const std::vector<std::size_t>& b, const char* op) {
  const std::size_t rank = std::max(a.size(), b.size());
  BcastPlan plan;
  plan.out_shape.resize(rank);
  std::vector<std::size_t> a_pad(rank, 1), b_pad(rank, 1);
  std::copy(a.begin(), a.end(), a_pad.begin() + (rank - a.size()));
  std::copy(b.begin(), b.end(), b_pad.begin() + (rank - b.size()));
  for (std::size_t i = 0; i < rank; ++i) {
    if (a_pad[i] == b_pad[i]) {
      plan.out_shape[i] = a_pad[i];
    } else if (a_pad[i] == 1) {
      plan.out_shape[i] = b_pad[i];
    } else if (b_pad[i] == 1) {
      plan.out_shape[i] = a_pad[i];
    } else {
      throw Error(std::string(op) + ": cannot broadcast shapes " +
                  shape_str(a) + " and " + shape_str(b));
    }
  }
  plan.a_stride = row_major_strides(a_pad);
  plan.b_stride = row_major_strides(b_pad);
  for (std::size_t i = 0; i < rank; ++i) {
    if (a_pad[i] == 1 && plan.out_shape[i] > 1) plan.a_stride[i] = 0;
    if (b_pad[i] == 1 && plan.out_shape[i] > 1) plan.b_stride[i] = 0;
  }
  plan.total = shape_numel(plan.out_shape);
  return plan;
}

/// Calls f(out_index, a_index, b_index) for every output element in
/// ascending output order.
template <typename F>
void for_each_broadcast(const BcastPlan& plan, F&& f) {
  const std::size_t rank = plan.out_shape.size();
  if (rank == 0) {
    f(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ai = 0, bi = 0;
  for (std::size_t o = 0; o < plan.total; ++o) {
    f(o, ai, bi);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      ai += plan.a_stride[d];
      bi += plan.b_stride[d];
      if (idx[d] < plan.out_shape[d]) break;
      ai -= plan.a_stride[d] * plan.out_shape[d];
      bi -= plan.b_stride[d] * plan.out_shape[d];
      idx[d] = 0;
    }
  }
}

enum class BinKind { add, sub, mul, divide };

}  // namespace

// OpAccess: the one place allowed to construct Tensors from nodes.
struct OpAccess {
  static Tensor make(NodePtr node) { return Tensor(std::move(node)); }
  static const NodePtr& node_ptr(const Tensor& t) { return t.node_; }
};

namespace {

const NodePtr& node_of(const Tensor& t, const char* op) {
  if (!t.defined()) throw Error(std::string(op) + ": undefined tensor operand");
  return OpAccess::node_ptr(t);
}

/// Builds an op result node. Attaches the tape entry (parents + backprop)
/// only when gradients are enabled and some parent requires them.
Tensor make_op(const char* op, std::vector<std::size_t> shape,
               std::vector<double> values, std::vector<NodePtr> parents,
               std::function<void(TensorNode&)> backprop) {
  validate_shape(shape, op);
  if (shape_numel(shape) != values.size())
    throw Error(std::string(op) + ": internal shape/value size mismatch");
  check_finite(values, op);
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->op = op;
  node->leaf = false;
  bool rg = false;
  if (grad_enabled()) {
    for (const auto& p : parents)
      if (p->requires_grad) rg = true;
  }
  node->requires_grad = rg;
  if (rg) {
    node->parents = std::move(parents);
    node->backprop = std::move(backprop);
  }
  return OpAccess::make(std::move(node));
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor member functions

Tensor::Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}

Tensor Tensor::from_values(std::vector<std::size_t> shape,
                           std::vector<double> values, bool requires_grad) {
  validate_shape(shape, "Tensor::from_values");
  if (shape_numel(shape) != values.size())
    throw Error("Tensor::from_values: shape " + shape_str(shape) +
                " does not match value count " + std::to_string(values.size()));
  check_finite(values, "Tensor::from_values");
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  return OpAccess::make(std::move(node));
}

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
  std::vector<double> values(shape_numel(shape), 0.0);
  return from_values(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value,
                    bool requires_grad) {
  std::vector<double> values(shape_numel(shape), value);
  return from_values(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

const std::vector<std::size_t>& Tensor::shape() const {
  if (!node_) throw Error("Tensor::shape: undefined tensor");
  return node_->shape;
}

std::size_t Tensor::numel() const {
  if (!node_) throw Error("Tensor::numel: undefined tensor");
  return node_->numel();
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::is_leaf() const { return node_ && node_->leaf; }

const std::vector<double>& Tensor::values() const {
  if (!node_) throw Error("Tensor::values: undefined tensor");
  return node_->values;
}

std::vector<double>& Tensor::mutable_values() {
  if (!node_) throw Error("Tensor::mutable_values: undefined tensor");
  if (!node_->leaf)
    throw Error("Tensor::mutable_values: only leaf tensors may be mutated");
  return node_->values;
}

std::vector<double> Tensor::grad() const {
  if (!node_) throw Error("Tensor::grad: undefined tensor");
  if (!node_->requires_grad)
    throw Error("Tensor::grad: tensor does not require gradients");
  if (node_->grad.empty()) return std::vector<double>(node_->numel(), 0.0);
  return node_->grad;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

double Tensor::item() const {
  if (numel() != 1) throw Error("Tensor::item: tensor is not a single element");
  return node_->values[0];
}

double Tensor::at(const std::vector<std::size_t>& index) const {
  const auto& s = shape();
  if (index.size() != s.size())
    throw Error("Tensor::at: index rank mismatch");
  std::size_t flat = 0;
  const auto strides = row_major_strides(s);
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (index[i] >= s[i]) throw Error("Tensor::at: index out of range");
    flat += index[i] * strides[i];
  }
  return node_->values[flat];
}

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

// ---------------------------------------------------------------------------
// Elementwise binary ops

namespace {

Tensor elementwise_binary(const char* name, BinKind kind, const Tensor& ta,
                          const Tensor& tb) {
  const NodePtr a = node_of(ta, name);
  const NodePtr b = node_of(tb, name);
  BcastPlan plan = make_bcast_plan(a->shape, b->shape, name);
  std::vector<double> out(plan.total);
  const auto& av = a->values;
  const auto& bv = b->values;
  switch (kind) {
    case BinKind::add:
      for_each_broadcast(plan, [&](std::size_t o, std::size_t ai, std::size_t bi) {
        out[o] = av[ai] + bv[bi];
      });
      break;
    case BinKind::sub:
      for_each_broadcast(plan, [&](std::size_t o, std::size_t ai, std::size_t bi) {
        out[o] = av[ai] - bv[bi];
      });
      break;
    case BinKind::mul:
      for_each_broadcast(plan, [&](std::size_t o, std::size_t ai, std::size_t bi) {
        out[o] = av[ai] * bv[bi];
      });
      break;
    case BinKind::divide:
      for_each_broadcast(plan, [&](std::size_t o, std::size_t ai, std::size_t bi) {
        out[o] = av[ai] / bv[bi];
      });
      break;
  }
  auto backprop = [plan, kind, a, b](TensorNode& node) {
    const bool need_a = a->requires_grad;
    const bool need_b = b->requires_grad;
    if (need_a) a->ensure_grad();
    if (need_b) b->ensure_grad();
    const auto& g = node.grad;
    const auto& av = a->values;
    const auto& bv = b->values;
    for_each_broadcast(plan, [&](std::size_t o, std::size_t ai, std::size_t bi) {
      const double go = g[o];
      switch (kind) {
        case BinKind::add:
          if (need_a) a->grad[ai] += go;
          if (need_b) b->grad[bi] += go;
          break;
        case BinKind::sub:
          if (need_a) a->grad[ai] += go;
          if (need_b) b->grad[bi] -= go;
          break;
        case BinKind::mul:
          if (need_a) a->grad[ai] += go * bv[bi];
          if (need_b) b->grad[bi] += go * av[ai];
          break;
        case BinKind::divide:
          if (need_a) a->grad[ai] += go / bv[bi];
          if (need_b) b->grad[bi] -= go * av[ai] / (bv[bi] * bv[bi]);
          break;
      }
    });
  };
  return make_op(name, std::move(plan.out_shape), std::move(out), {a, b},
                 std::move(backprop));
}

enum class UnKind { relu, exp, log, sigmoid };

Tensor elementwise_unary(const char* name, UnKind kind, const Tensor& ta) {
  const NodePtr a = node_of(ta, name);
  const auto& av = a->values;
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double v = av[i];
    switch (kind) {
      case UnKind::relu:
        out[i] = v > 0.0 ? v : 0.0;
        break;
      case UnKind::exp:
        out[i] = std::exp(v);
        break;
      case UnKind::log:
        out[i] = std::log(v);
        break;
      case UnKind::sigmoid:
        out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                          : std::exp(v) / (1.0 + std::exp(v));
        break;
    }
  }
  auto backprop = [kind, a](TensorNode& node) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    const auto& g = node.grad;
    const auto& av = a->values;
    const auto& ov = node.values;
    for (std::size_t i = 0; i < g.size(); ++i) {
      switch (kind) {
        case UnKind::relu:
          if (av[i] > 0.0) a->grad[i] += g[i];
          break;
        case UnKind::exp:
          a->grad[i] += g[i] * ov[i];
          break;
        case UnKind::log:
          a->grad[i] += g[i] / av[i];
          break;
        case UnKind::sigmoid:
          a->grad[i] += g[i] * ov[i] * (1.0 - ov[i]);
          break;
      }
    }
  };
  return make_op(name, a->shape, std::move(out), {a}, std::move(backprop));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise_binary("add", BinKind::add, a, b);
}
Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise_binary("sub", BinKind::sub, a, b);
}
Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise_binary("mul", BinKind::mul, a, b);
}
Tensor div(const Tensor& a, const Tensor& b) {
  return elementwise_binary("div", BinKind::divide, a, b);
}

Tensor scale(const Tensor& ta, double factor) {
  if (!std::isfinite(factor)) throw Error("scale: factor must be finite");
  const NodePtr a = node_of(ta, "scale");
  std::vector<double> out(a->values.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->values[i] * factor;
  auto backprop = [a, factor](TensorNode& node) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    for (std::size_t i = 0; i < node.grad.size(); ++i)
      a->grad[i] += node.grad[i] * factor;
  };
  return make_op("scale", a->shape, std::move(out), {a}, std::move(backprop));
}

Tensor relu(const Tensor& a) { return elementwise_unary("relu", UnKind::relu, a); }
Tensor exp(const Tensor& a) { return elementwise_unary("exp", UnKind::exp, a); }
Tensor log(const Tensor& a) { return elementwise_unary("log", UnKind::log, a); }
Tensor sigmoid(const Tensor& a) {
  return elementwise_unary("sigmoid", UnKind::sigmoid, a);
}

// ---------------------------------------------------------------------------
// matmul

Tensor matmul(const Tensor& ta, const Tensor& tb) {
  const NodePtr a = node_of(ta, "matmul");
  const NodePtr b = node_of(tb, "matmul");
  const auto& as = a->shape;
  const auto& bs = b->shape;
  if (as.size() < 2 || bs.size() < 2)
    throw Error("matmul: operands must have rank >= 2, got " + shape_str(as) +
                " and " + shape_str(bs));
  const std::size_t m = as[as.size() - 2];
  const std::size_t kk = as[as.size() - 1];
  const std::size_t kb = bs[bs.size() - 2];
  const std::size_t n = bs[bs.size() - 1];
  if (kk != kb)
    throw Error("matmul: inner dimensions disagree: " + shape_str(as) +
                " x " + shape_str(bs));
  const std::vector<std::size_t> a_batch(as.begin(), as.end() - 2);
  const std::vector<std::size_t> b_batch(bs.begin(), bs.end() - 2);
  BcastPlan plan = make_bcast_plan(a_batch, b_batch, "matmul");

  std::vector<std::size_t> out_shape = plan.out_shape;
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<double> out(plan.total * m * n, 0.0);

  const double* avals = a->values.data();
  const double* bvals = b->values.data();
  for_each_broadcast(plan, [&](std::size_t o, std::size_t ai, std::size_t bi) {
    const double* A = avals + ai * m * kk;
    const double* B = bvals + bi * kk * n;
    double* O = out.data() + o * m * n;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < kk; ++p) {
        const double av = A[i * kk + p];
        const double* brow = B + p * n;
        double* orow = O + i * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
  });

  auto backprop = [plan, a, b, m, kk, n](TensorNode& node) {
    const bool need_a = a->requires_grad;
    const bool need_b = b->requires_grad;
    if (need_a) a->ensure_grad();
    if (need_b) b->ensure_grad();
    const double* g = node.grad.data();
    const double* avals = a->values.data();
    const double* bvals = b->values.data();
    for_each_broadcast(plan, [&](std::size_t o, std::size_t ai, std::size_t bi) {
      const double* G = g + o * m * n;
      const double* A = avals + ai * m * kk;
      const double* B = bvals + bi * kk * n;
      if (need_a) {
        double* GA = a->grad.data() + ai * m * kk;
        // grad_a = g . b^T
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < kk; ++p) {
            double acc = 0.0;
            const double* grow = G + i * n;
            const double* brow = B + p * n;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            GA[i * kk + p] += acc;
          }
        }
      }
      if (need_b) {
        double* GB = b->grad.data() + bi * kk * n;
        // grad_b = a^T . g
        for (std::size_t p = 0; p < kk; ++p) {
          for (std::size_t i = 0; i < m; ++i) {
            const double av = A[i * kk + p];
            const double* grow = G + i * n;
            double* gbrow = GB + p * n;
            for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
          }
        }
      }
    });
  };
  return make_op("matmul", std::move(out_shape), std::move(out), {a, b},
                 std::move(backprop));
}

// ---------------------------------------------------------------------------
// Shape ops

Tensor transpose_last2(const Tensor& ta) {
  const NodePtr a = node_of(ta, "transpose_last2");
  const auto& as = a->shape;
  if (as.size() < 2)
    throw Error("transpose_last2: operand must have rank >= 2");
  const std::size_t r = as[as.size() - 2];
  const std::size_t c = as[as.size() - 1];
  const std::size_t batch = a->numel() / (r * c);
  std::vector<std::size_t> out_shape = as;
  std::swap(out_shape[out_shape.size() - 2], out_shape[out_shape.size() - 1]);
  std::vector<double> out(a->numel());
  for (std::size_t bt = 0; bt < batch; ++bt) {
    const double* src = a->values.data() + bt * r * c;
    double* dst = out.data() + bt * r * c;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) dst[j * r + i] = src[i * c + j];
  }
  auto backprop = [a, r, c, batch](TensorNode& node) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    for (std::size_t bt = 0; bt < batch; ++bt) {
      const double* g = node.grad.data() + bt * r * c;
      double* ga = a->grad.data() + bt * r * c;
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
    }
  };
  return make_op("transpose_last2", std::move(out_shape), std::move(out), {a},
                 std::move(backprop));
}

Tensor reshape(const Tensor& ta, std::vector<std::size_t> shape) {
  const NodePtr a = node_of(ta, "reshape");
  validate_shape(shape, "reshape");
  if (shape_numel(shape) != a->numel())
    throw Error("reshape: cannot reshape " + shape_str(a->shape) + " into " +
                shape_str(shape));
  std::vector<double> out = a->values;
  auto backprop = [a](TensorNode& node) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    for (std::size_t i = 0; i < node.grad.size(); ++i)
      a->grad[i] += node.grad[i];
  };
  return make_op("reshape", std::move(shape), std::move(out), {a},
                 std::move(backprop));
}

Tensor gather_rows(const Tensor& ta, const std::vector<std::size_t>& rows) {
  const NodePtr a = node_of(ta, "gather_rows");
  if (rows.empty()) throw Error("gather_rows: row list is empty");
  const std::size_t src_rows = a->shape[0];
  const std::size_t row_size = a->numel() / src_rows;
  for (std::size_t r : rows) {
    if (r >= src_rows)
      throw Error("gather_rows: index " + std::to_string(r) +
                  " out of range for " + std::to_string(src_rows) + " rows");
  }
  std::vector<std::size_t> out_shape = a->shape;
  out_shape[0] = rows.size();
  std::vector<double> out(rows.size() * row_size);
  for (std::size_t q = 0; q < rows.size(); ++q) {
    const double* src = a->values.data() + rows[q] * row_size;
    std::copy(src, src + row_size, out.begin() + q * row_size);
  }
  auto backprop = [a, rows, row_size](TensorNode& node) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    for (std::size_t q = 0; q < rows.size(); ++q) {
      const double* g = node.grad.data() + q * row_size;
      double* ga = a->grad.data() + rows[q] * row_size;
      for (std::size_t e = 0; e < row_size; ++e) ga[e] += g[e];
    }
  };
  return make_op("gather_rows", std::move(out_shape), std::move(out), {a},
                 std::move(backprop));
}

// ---------------------------------------------------------------------------
// Softmax and reductions

Tensor softmax_lastdim(const Tensor& ta) {
  const NodePtr a = node_of(ta, "softmax_lastdim");
  const std::size_t len = a->shape.back();
  const std::size_t rows = a->numel() / len;
  std::vector<double> out(a->numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = a->values.data() + r * len;
    double* dst = out.data() + r * len;
    double mx = src[0];
    for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, src[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < len; ++j) {
      dst[j] = std::exp(src[j] - mx);
      sum += dst[j];
    }
    for (std::size_t j = 0; j < len; ++j) dst[j] /= sum;
  }
  auto backprop = [a, rows, len](TensorNode& node) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* w = node.values.data() + r * len;
      const double* g = node.grad.data() + r * len;
      double* ga = a->grad.data() + r * len;
      double dot = 0.0;
      for (std::size_t j = 0; j < len; ++j) dot += g[j] * w[j];
      for (std::size_t j = 0; j < len; ++j) ga[j] += w[j] * (g[j] - dot);
    }
  };
  return make_op("softmax_lastdim", a->shape, std::move(out), {a},
                 std::move(backprop));
}

Tensor reduce_sum_all(const Tensor& ta) {
  const NodePtr a = node_of(ta, "reduce_sum_all");
  double acc = 0.0;
  for (double v : a->values) acc += v;
  auto backprop = [a](TensorNode& node) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    const double g = node.grad[0];
    for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g;
  };
  return make_op("reduce_sum_all", {1}, {acc}, {a}, std::move(backprop));
}

Tensor reduce_mean_all(const Tensor& ta) {
  const NodePtr a = node_of(ta, "reduce_mean_all");
  double acc = 0.0;
  for (double v : a->values) acc += v;
  const double inv = 1.0 / static_cast<double>(a->numel());
  auto backprop = [a, inv](TensorNode& node) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    const double g = node.grad[0] * inv;
    for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g;
  };
  return make_op("reduce_mean_all", {1}, {acc * inv}, {a}, std::move(backprop));
}

namespace {

struct AxisSplit {
  std::size_t pre = 1, len = 1, post = 1;
};

AxisSplit split_axis(const std::vector<std::size_t>& shape, std::size_t axis,
                     const char* op) {
  if (axis >= shape.size())
    throw Error(std::string(op) + ": axis " + std::to_string(axis) +
                " out of range for shape " + shape_str(shape));
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.pre *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.post *= shape[i];
  return s;
}

std::vector<std::size_t> drop_axis(const std::vector<std::size_t>& shape,
                                   std::size_t axis) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < shape.size(); ++i)
    if (i != axis) out.push_back(shape[i]);
  if (out.empty()) out.push_back(1);
  return out;
}

}  // namespace

Tensor reduce_sum_axis(const Tensor& ta, std::size_t axis) {
  const NodePtr a = node_of(ta, "reduce_sum_axis");
  const AxisSplit s = split_axis(a->shape, axis, "reduce_sum_axis");
  std::vector<double> out(s.pre * s.post, 0.0);
  for (std::size_t p = 0; p < s.pre; ++p)
    for (std::size_t j = 0; j < s.len; ++j)
      for (std::size_t q = 0; q < s.post; ++q)
        out[p * s.post + q] += a->values[(p * s.len + j) * s.post + q];
  auto backprop = [a, s](TensorNode& node) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    for (std::size_t p = 0; p < s.pre; ++p)
      for (std::size_t j = 0; j < s.len; ++j)
        for (std::size_t q = 0; q < s.post; ++q)
          a->grad[(p * s.len + j) * s.post + q] += node.grad[p * s.post + q];
  };
  return make_op("reduce_sum_axis", drop_axis(a->shape, axis), std::move(out),
                 {a}, std::move(backprop));
}

Tensor reduce_max_axis(const Tensor& ta, std::size_t axis) {
  const NodePtr a = node_of(ta, "reduce_max_axis");
  const AxisSplit s = split_axis(a->shape, axis, "reduce_max_axis");
  std::vector<double> out(s.pre * s.post);
  std::vector<std::size_t> argmax(s.pre * s.post);
  for (std::size_t p = 0; p < s.pre; ++p) {
    for (std::size_t q = 0; q < s.post; ++q) {
      double best = a->values[(p * s.len) * s.post + q];
      std::size_t best_j = 0;
      for (std::size_t j = 1; j < s.len; ++j) {
        const double v = a->values[(p * s.len + j) * s.post + q];
        if (v > best) {  // ties keep the smallest index
          best = v;
          best_j = j;
        }
      }
      out[p * s.post + q] = best;
      argmax[p * s.post + q] = best_j;
    }
  }
  auto backprop = [a, s, argmax](TensorNode& node) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    for (std::size_t p = 0; p < s.pre; ++p)
      for (std::size_t q = 0; q < s.post; ++q)
        a->grad[(p * s.len + argmax[p * s.post + q]) * s.post + q] +=
            node.grad[p * s.post + q];
  };
  return make_op("reduce_max_axis", drop_axis(a->shape, axis), std::move(out),
                 {a}, std::move(backprop));
}

// ---------------------------------------------------------------------------
// Losses

Tensor cross_entropy_with_logits(const Tensor& tlogits,
                                 const std::vector<int>& labels) {
  const NodePtr logits = node_of(tlogits, "cross_entropy_with_logits");
  std::size_t batch = 1, classes = 0;
  if (logits->shape.size() == 1) {
    classes = logits->shape[0];
  } else if (logits->shape.size() == 2) {
    batch = logits->shape[0];
    classes = logits->shape[1];
  } else {
    throw Error("cross_entropy_with_logits: logits must be (K,) or (B,K)");
  }
  if (labels.size() != batch)
    throw Error("cross_entropy_with_logits: label count " +
                std::to_string(labels.size()) + " does not match batch " +
                std::to_string(batch));
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes)
      throw Error("cross_entropy_with_logits: label " + std::to_string(l) +
                  " out of range [0," + std::to_string(classes) + ")");
  }
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* row = logits->values.data() + b * classes;
    double mx = row[0];
    for (std::size_t j = 1; j < classes; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < classes; ++j) sum += std::exp(row[j] - mx);
    total += mx + std::log(sum) - row[static_cast<std::size_t>(labels[b])];
  }
  const double inv = 1.0 / static_cast<double>(batch);
  auto backprop = [logits, labels, batch, classes, inv](TensorNode& node) {
    if (!logits->requires_grad) return;
    logits->ensure_grad();
    const double g = node.grad[0] * inv;
    for (std::size_t b = 0; b < batch; ++b) {
      const double* row = logits->values.data() + b * classes;
      double* grow = logits->grad.data() + b * classes;
      double mx = row[0];
      for (std::size_t j = 1; j < classes; ++j) mx = std::max(mx, row[j]);
      double sum = 0.0;
      for (std::size_t j = 0; j < classes; ++j) sum += std::exp(row[j] - mx);
      for (std::size_t j = 0; j < classes; ++j) {
        const double soft = std::exp(row[j] - mx) / sum;
        const double target =
            (j == static_cast<std::size_t>(labels[b])) ? 1.0 : 0.0;
        grow[j] += g * (soft - target);
      }
    }
  };
  return make_op("cross_entropy_with_logits", {1}, {total * inv}, {logits},
                 std::move(backprop));
}

Tensor bce_with_logits(const Tensor& tlogits, const std::vector<double>& targets) {
  const NodePtr logits = node_of(tlogits, "bce_with_logits");
  if (targets.size() != logits->numel())
    throw Error("bce_with_logits: target count does not match logits");
  for (double t : targets) {
    if (!(t >= 0.0 && t <= 1.0))
      throw Error("bce_with_logits: targets must lie in [0,1]");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double l = logits->values[i];
    total += std::max(l, 0.0) - l * targets[i] + std::log1p(std::exp(-std::abs(l)));
  }
  const double inv = 1.0 / static_cast<double>(targets.size());
  auto backprop = [logits, targets, inv](TensorNode& node) {
    if (!logits->requires_grad) return;
    logits->ensure_grad();
    const double g = node.grad[0] * inv;
    for (std::size_t i = 0; i < targets.size(); ++i) {
      const double l = logits->values[i];
      const double s = l >= 0.0 ? 1.0 / (1.0 + std::exp(-l))
                                : std::exp(l) / (1.0 + std::exp(l));
      logits->grad[i] += g * (s - targets[i]);
    }
  };
  return make_op("bce_with_logits", {1}, {total * inv}, {logits},
                 std::move(backprop));
}

Tensor smooth_l1(const Tensor& tpred, const std::vector<double>& targets,
                 double beta) {
  const NodePtr pred = node_of(tpred, "smooth_l1");
  if (targets.size() != pred->numel())
    throw Error("smooth_l1: target count does not match prediction");
  if (!(beta > 0.0)) throw Error("smooth_l1: beta must be positive");
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double r = pred->values[i] - targets[i];
    const double ar = std::abs(r);
    total += ar < beta ? 0.5 * r * r / beta : ar - 0.5 * beta;
  }
  const double inv = 1.0 / static_cast<double>(targets.size());
  auto backprop = [pred, targets, beta, inv](TensorNode& node) {
    if (!pred->requires_grad) return;
    pred->ensure_grad();
    const double g = node.grad[0] * inv;
    for (std::size_t i = 0; i < targets.size(); ++i) {
      const double r = pred->values[i] - targets[i];
      const double d = std::abs(r) < beta ? r / beta : (r > 0.0 ? 1.0 : -1.0);
      pred->grad[i] += g * d;
    }
  };
  return make_op("smooth_l1", {1}, {total * inv}, {pred}, std::move(backprop));
}

// ---------------------------------------------------------------------------
// Backward pass

void backward(const Tensor& loss) {
  if (!loss.defined()) throw Error("backward: undefined loss tensor");
  TensorNode* root = loss.node();
  if (root->numel() != 1)
    throw Error("backward: loss must be a scalar (single-element) tensor");
  if (!root->requires_grad)
    throw Error("backward: loss does not depend on any requires_grad tensor");

  // Iterative postorder over the DAG; postorder lists inputs before their
  // consumers, so the reverse walk is a valid backward schedule.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  visited.insert(root);
  stack.emplace_back(root, 0);
  while (!stack.empty()) {
    auto& top = stack.back();
    if (top.second < top.first->parents.size()) {
      TensorNode* parent = top.first->parents[top.second++].get();
      if (visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(top.first);
      stack.pop_back();
    }
  }

  for (TensorNode* node : order) {
    if (!node->leaf && node->consumed)
      throw Error(
          "backward: tape already consumed; rebuild the graph by re-running "
          "the forward pass before calling backward again");
  }

  root->grad.assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* node = *it;
    if (node->backprop && !node->grad.empty()) node->backprop(*node);
  }

  // Consume the tape and release the graph edges.
  for (TensorNode* node : order) {
    if (!node->leaf) {
      node->consumed = true;
      node->backprop = nullptr;
      node->parents.clear();
    }
  }
}

// ---------------------------------------------------------------------------
// Gradient check

double grad_check(const std::function<Tensor(const Tensor&)>& fn,
                  const Tensor& x, double eps) {
  if (!x.defined()) throw Error("grad_check: undefined input tensor");
  if (!(eps > 0.0)) throw Error("grad_check: eps must be positive");

  Tensor probe = Tensor::from_values(x.shape(), x.values(), /*requires_grad=*/true);
  Tensor y = fn(probe);
  if (y.numel() != 1)
    throw Error("grad_check: function must be scalar-valued");
  backward(y);
  const std::vector<double> analytic = probe.grad();

  NoGradGuard no_grad;
  const std::vector<double> base = x.values();
  double worst = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    std::vector<double> vp = base;
    std::vector<double> vm = base;
    vp[i] += eps;
    vm[i] -= eps;
    const double fp = fn(Tensor::from_values(x.shape(), std::move(vp))).item();
    const double fm = fn(Tensor::from_values(x.shape(), std::move(vm))).item();
    const double numeric = (fp - fm) / (2.0 * eps);
    const double denom =
        std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace mma

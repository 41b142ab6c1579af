#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace dicerl {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

// Dense 64-bit float array, 1-D or 2-D, optionally attached to a Tape node.
// The buffer is shared between a Tensor and the tape node that produced it;
// values of graph results must not be mutated while the tape is in use.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape s)
      : shape(std::move(s)),
        buf(std::make_shared<std::vector<double>>(shape_size(shape), 0.0)) {}

  Tensor(Shape s, std::vector<double> values)
      : shape(std::move(s)),
        buf(std::make_shared<std::vector<double>>(std::move(values))) {
    if (buf->size() != shape_size(shape))
      throw std::invalid_argument("Tensor: values length does not match shape");
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  static Tensor full(Shape s, double v) {
    Tensor t(std::move(s));
    for (double& x : *t.buf) x = v;
    return t;
  }

  std::size_t size() const { return buf ? buf->size() : 0; }

  // 2-D view: 1-D tensors count as a single row.
  std::size_t rows() const { return shape.size() == 2 ? shape[0] : 1; }
  std::size_t cols() const {
    return shape.size() == 2 ? shape[1] : (shape.empty() ? 0 : shape[0]);
  }

  double* data() { return buf->data(); }
  const double* data() const { return buf->data(); }
  std::vector<double>& vals() { return *buf; }
  const std::vector<double>& vals() const { return *buf; }

  double value() const {
    if (size() != 1) throw std::logic_error("Tensor::value: tensor is not scalar");
    return (*buf)[0];
  }

  // Same buffer, no graph handle.
  Tensor detached() const {
    Tensor t;
    t.shape = shape;
    t.buf = buf;
    return t;
  }

  Shape shape;
  std::shared_ptr<std::vector<double>> buf;
  int node = -1;                // index into the owning tape, -1 when detached
  std::uint64_t tape_id = 0;    // which tape `node` refers to
};

// Gradients keyed by the address of the parameter tensor they belong to.
using GradTable = std::unordered_map<const Tensor*, std::vector<double>>;

namespace detail {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

inline void check_finite(const std::vector<double>& v, const char* op) {
  for (double x : v)
    if (!std::isfinite(x))
      throw std::runtime_error(std::string("non-finite value produced by op '") +
                               op + "'");
}

}  // namespace detail

enum class OpKind : std::uint8_t {
  kConst,
  kParam,
  kMatmul,
  kAdd,
  kSub,
  kMul,
  kNeg,
  kAbs,
  kPow,
  kExp,
  kLog,
  kTanh,
  kRelu,
  kMean,
  kSum,
  kRowSum,
  kMin,
  kMax,
  kBroadcast,
  kConcat,
};

// Dynamic tape. Built fresh per minibatch; single-threaded by contract.
class Tape {
 public:
  Tape() : id_(next_id()) { nodes_.reserve(64); }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Attach `t` as a differentiable leaf. Repeated calls with the same tensor
  // return the same node, so each parameter owns exactly one leaf per tape.
  Tensor param(const Tensor& t) {
    auto it = params_.find(&t);
    if (it != params_.end()) return wrap(it->second, t);
    int id = push_leaf(OpKind::kParam, t);
    nodes_[id].origin = &t;
    params_.emplace(&t, id);
    return wrap(id, t);
  }

  // Attach `t` as a non-differentiable input.
  Tensor constant(const Tensor& t) { return wrap(push_leaf(OpKind::kConst, t), t); }

  Tensor constant(double v) { return constant(Tensor::scalar(v)); }

  Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape.size() != 2 || b.shape.size() != 2 || a.cols() != b.rows())
      throw std::invalid_argument("matmul: incompatible shapes");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out({m, n});
    detail::MutMap(out.data(), m, n).noalias() =
        detail::MatMap(a.data(), m, k) * detail::MatMap(b.data(), k, n);
    return record(OpKind::kMatmul, a, b, out, "matmul");
  }

  Tensor add(const Tensor& a, const Tensor& b) { return binary(OpKind::kAdd, a, b, "add"); }
  Tensor sub(const Tensor& a, const Tensor& b) { return binary(OpKind::kSub, a, b, "sub"); }
  Tensor mul(const Tensor& a, const Tensor& b) { return binary(OpKind::kMul, a, b, "mul"); }
  // Elementwise min/max; on ties the gradient goes to the first argument.
  Tensor minimum(const Tensor& a, const Tensor& b) { return binary(OpKind::kMin, a, b, "min"); }
  Tensor maximum(const Tensor& a, const Tensor& b) { return binary(OpKind::kMax, a, b, "max"); }

  Tensor neg(const Tensor& a) { return unary(OpKind::kNeg, a, [](double x) { return -x; }, "neg"); }
  Tensor abs(const Tensor& a) { return unary(OpKind::kAbs, a, [](double x) { return std::fabs(x); }, "abs"); }
  Tensor exp(const Tensor& a) { return unary(OpKind::kExp, a, [](double x) { return std::exp(x); }, "exp"); }
  Tensor log(const Tensor& a) { return unary(OpKind::kLog, a, [](double x) { return std::log(x); }, "log"); }
  Tensor tanh(const Tensor& a) { return unary(OpKind::kTanh, a, [](double x) { return std::tanh(x); }, "tanh"); }
  Tensor relu(const Tensor& a) {
    return unary(OpKind::kRelu, a, [](double x) { return x > 0.0 ? x : 0.0; }, "relu");
  }

  Tensor pow(const Tensor& a, double p) {
    Tensor out = unary(OpKind::kPow, a, [p](double x) { return std::pow(x, p); }, "pow");
    nodes_[out.node].arg = p;
    return out;
  }

  Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double x : a.vals()) s += x;
    return reduce(OpKind::kSum, a, Tensor::scalar(s), "sum");
  }

  Tensor mean(const Tensor& a) {
    if (a.size() == 0) throw std::invalid_argument("mean: empty tensor");
    double s = 0.0;
    for (double x : a.vals()) s += x;
    return reduce(OpKind::kMean, a, Tensor::scalar(s / static_cast<double>(a.size())), "mean");
  }

  // [m, n] -> [m, 1], summing along each row.
  Tensor row_sum(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    Tensor out({m, 1});
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += a.data()[i * n + j];
      out.data()[i] = s;
    }
    return reduce(OpKind::kRowSum, a, std::move(out), "row_sum");
  }

  // Explicit replication to [rows, cols]. Accepts scalar, row [1, c] with
  // c == cols, or column [r, 1] with r == rows.
  Tensor broadcast(const Tensor& a, std::size_t rows, std::size_t cols) {
    if (!broadcastable(a, rows, cols))
      throw std::invalid_argument("broadcast: shape not expandable to target");
    Tensor out({rows, cols});
    const std::size_t ar = a.rows(), ac = a.cols();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j)
        out.data()[i * cols + j] = a.data()[(ar == 1 ? 0 : i) * ac + (ac == 1 ? 0 : j)];
    return record(OpKind::kBroadcast, a, Tensor(), out, "broadcast");
  }

  // Column concatenation [m, ca] ++ [m, cb] -> [m, ca + cb].
  Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows())
      throw std::invalid_argument("concat: row counts differ");
    const std::size_t m = a.rows(), ca = a.cols(), cb = b.cols();
    Tensor out({m, ca + cb});
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < ca; ++j) out.data()[i * (ca + cb) + j] = a.data()[i * ca + j];
      for (std::size_t j = 0; j < cb; ++j) out.data()[i * (ca + cb) + ca + j] = b.data()[i * cb + j];
    }
    return record(OpKind::kConcat, a, b, out, "concat");
  }

  // Reverse pass from a scalar loss. Returns the gradient of the loss with
  // respect to every parameter leaf that the loss actually depends on.
  GradTable backward(const Tensor& loss) {
    if (loss.size() != 1) throw std::invalid_argument("backward: loss is not scalar");
    if (loss.node < 0 || loss.tape_id != id_)
      throw std::invalid_argument("backward: loss is not attached to this tape");

    std::vector<std::vector<double>> adj(nodes_.size());
    adj[loss.node] = {1.0};
    for (int i = loss.node; i >= 0; --i) {
      if (adj[i].empty()) continue;
      propagate(i, adj);
    }

    GradTable table;
    for (const auto& [origin, id] : params_) {
      if (id <= loss.node && !adj[id].empty()) table.emplace(origin, std::move(adj[id]));
    }
    return table;
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    OpKind op;
    int a = -1, b = -1;
    double arg = 0.0;
    std::size_t rows = 0, cols = 0;
    std::shared_ptr<std::vector<double>> out;
    const Tensor* origin = nullptr;
  };

  static std::uint64_t next_id() {
    static std::atomic<std::uint64_t> counter{0};
    return ++counter;
  }

  Tensor wrap(int id, const Tensor& like) {
    Tensor t;
    t.shape = like.shape;
    t.buf = nodes_[id].out;
    t.node = id;
    t.tape_id = id_;
    return t;
  }

  int push_leaf(OpKind op, const Tensor& t) {
    Node n;
    n.op = op;
    n.rows = t.rows();
    n.cols = t.cols();
    n.out = t.buf;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  // Node id for an operand: reuse its node when it already lives on this
  // tape, otherwise wrap it as a constant leaf.
  int ensure(const Tensor& t) {
    if (t.node >= 0) {
      if (t.tape_id != id_)
        throw std::logic_error("tensor belongs to a different tape");
      return t.node;
    }
    return push_leaf(OpKind::kConst, t);
  }

  Tensor record(OpKind op, const Tensor& a, const Tensor& b, Tensor out, const char* name) {
    detail::check_finite(out.vals(), name);
    Node n;
    n.op = op;
    n.a = ensure(a);
    n.b = b.buf ? ensure(b) : -1;
    assert(n.a < static_cast<int>(nodes_.size()) && n.b < static_cast<int>(nodes_.size()));
    n.rows = out.rows();
    n.cols = out.cols();
    n.out = out.buf;
    nodes_.push_back(std::move(n));
    out.node = static_cast<int>(nodes_.size()) - 1;
    out.tape_id = id_;
    return out;
  }

  template <typename F>
  Tensor unary(OpKind op, const Tensor& a, F f, const char* name) {
    Tensor out(a.shape);
    const double* in = a.data();
    double* o = out.data();
    for (std::size_t i = 0; i < a.size(); ++i) o[i] = f(in[i]);
    return record(op, a, Tensor(), std::move(out), name);
  }

  Tensor reduce(OpKind op, const Tensor& a, Tensor out, const char* name) {
    return record(op, a, Tensor(), std::move(out), name);
  }

  static bool broadcastable(const Tensor& a, std::size_t rows, std::size_t cols) {
    return (a.rows() == rows || a.rows() == 1) && (a.cols() == cols || a.cols() == 1);
  }

  Tensor binary(OpKind op, Tensor a, Tensor b, const char* name) {
    // Expand mismatched operands through explicit broadcast nodes so the
    // elementwise kernels and their backward rules only see equal shapes.
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
      const std::size_t m = std::max(a.rows(), b.rows());
      const std::size_t n = std::max(a.cols(), b.cols());
      if (!broadcastable(a, m, n) || !broadcastable(b, m, n))
        throw std::invalid_argument(std::string(name) + ": incompatible shapes");
      if (a.rows() != m || a.cols() != n) a = broadcast(a, m, n);
      if (b.rows() != m || b.cols() != n) b = broadcast(b, m, n);
    }
    Tensor out(a.shape);
    const double* pa = a.data();
    const double* pb = b.data();
    double* o = out.data();
    const std::size_t n = a.size();
    switch (op) {
      case OpKind::kAdd: for (std::size_t i = 0; i < n; ++i) o[i] = pa[i] + pb[i]; break;
      case OpKind::kSub: for (std::size_t i = 0; i < n; ++i) o[i] = pa[i] - pb[i]; break;
      case OpKind::kMul: for (std::size_t i = 0; i < n; ++i) o[i] = pa[i] * pb[i]; break;
      case OpKind::kMin: for (std::size_t i = 0; i < n; ++i) o[i] = pa[i] <= pb[i] ? pa[i] : pb[i]; break;
      case OpKind::kMax: for (std::size_t i = 0; i < n; ++i) o[i] = pa[i] >= pb[i] ? pa[i] : pb[i]; break;
      default: throw std::logic_error("binary: bad op");
    }
    return record(op, a, b, std::move(out), name);
  }

  void propagate(int i, std::vector<std::vector<double>>& adj) {
    Node& nd = nodes_[i];
    const std::vector<double>& g = adj[i];
    auto acc = [&](int parent) -> std::vector<double>& {
      assert(parent >= 0 && parent < i);
      auto& slot = adj[parent];
      if (slot.empty()) slot.assign(nodes_[parent].out->size(), 0.0);
      return slot;
    };

    switch (nd.op) {
      case OpKind::kConst:
      case OpKind::kParam:
        break;
      case OpKind::kMatmul: {
        const Node& na = nodes_[nd.a];
        const Node& nb = nodes_[nd.b];
        const std::size_t m = na.rows, k = na.cols, n = nb.cols;
        detail::MatMap dC(g.data(), m, n);
        detail::MutMap(acc(nd.a).data(), m, k).noalias() +=
            dC * detail::MatMap(nb.out->data(), k, n).transpose();
        detail::MutMap(acc(nd.b).data(), k, n).noalias() +=
            detail::MatMap(na.out->data(), m, k).transpose() * dC;
        break;
      }
      case OpKind::kAdd: {
        auto& da = acc(nd.a);
        auto& db = acc(nd.b);
        for (std::size_t j = 0; j < g.size(); ++j) { da[j] += g[j]; db[j] += g[j]; }
        break;
      }
      case OpKind::kSub: {
        auto& da = acc(nd.a);
        auto& db = acc(nd.b);
        for (std::size_t j = 0; j < g.size(); ++j) { da[j] += g[j]; db[j] -= g[j]; }
        break;
      }
      case OpKind::kMul: {
        const auto& va = *nodes_[nd.a].out;
        const auto& vb = *nodes_[nd.b].out;
        auto& da = acc(nd.a);
        auto& db = acc(nd.b);
        for (std::size_t j = 0; j < g.size(); ++j) { da[j] += g[j] * vb[j]; db[j] += g[j] * va[j]; }
        break;
      }
      case OpKind::kMin:
      case OpKind::kMax: {
        const auto& va = *nodes_[nd.a].out;
        const auto& vb = *nodes_[nd.b].out;
        auto& da = acc(nd.a);
        auto& db = acc(nd.b);
        const bool is_min = nd.op == OpKind::kMin;
        for (std::size_t j = 0; j < g.size(); ++j) {
          const bool pick_a = is_min ? va[j] <= vb[j] : va[j] >= vb[j];
          (pick_a ? da[j] : db[j]) += g[j];
        }
        break;
      }
      case OpKind::kNeg: {
        auto& da = acc(nd.a);
        for (std::size_t j = 0; j < g.size(); ++j) da[j] -= g[j];
        break;
      }
      case OpKind::kAbs: {
        // Subgradient 0 at exactly zero.
        const auto& va = *nodes_[nd.a].out;
        auto& da = acc(nd.a);
        for (std::size_t j = 0; j < g.size(); ++j)
          da[j] += g[j] * (va[j] > 0.0 ? 1.0 : (va[j] < 0.0 ? -1.0 : 0.0));
        break;
      }
      case OpKind::kPow: {
        // d/dx x^p = p x^(p-1); pinned to 0 at x = 0 for p < 2.
        const auto& va = *nodes_[nd.a].out;
        auto& da = acc(nd.a);
        const double p = nd.arg;
        for (std::size_t j = 0; j < g.size(); ++j) {
          double d = (va[j] == 0.0 && p < 2.0) ? 0.0 : p * std::pow(va[j], p - 1.0);
          da[j] += g[j] * d;
        }
        break;
      }
      case OpKind::kExp: {
        const auto& vo = *nd.out;
        auto& da = acc(nd.a);
        for (std::size_t j = 0; j < g.size(); ++j) da[j] += g[j] * vo[j];
        break;
      }
      case OpKind::kLog: {
        const auto& va = *nodes_[nd.a].out;
        auto& da = acc(nd.a);
        for (std::size_t j = 0; j < g.size(); ++j) da[j] += g[j] / va[j];
        break;
      }
      case OpKind::kTanh: {
        const auto& vo = *nd.out;
        auto& da = acc(nd.a);
        for (std::size_t j = 0; j < g.size(); ++j) da[j] += g[j] * (1.0 - vo[j] * vo[j]);
        break;
      }
      case OpKind::kRelu: {
        const auto& va = *nodes_[nd.a].out;
        auto& da = acc(nd.a);
        for (std::size_t j = 0; j < g.size(); ++j)
          if (va[j] > 0.0) da[j] += g[j];
        break;
      }
      case OpKind::kSum: {
        auto& da = acc(nd.a);
        for (double& d : da) d += g[0];
        break;
      }
      case OpKind::kMean: {
        auto& da = acc(nd.a);
        const double s = g[0] / static_cast<double>(da.size());
        for (double& d : da) d += s;
        break;
      }
      case OpKind::kRowSum: {
        const Node& na = nodes_[nd.a];
        auto& da = acc(nd.a);
        for (std::size_t r = 0; r < na.rows; ++r)
          for (std::size_t c = 0; c < na.cols; ++c) da[r * na.cols + c] += g[r];
        break;
      }
      case OpKind::kBroadcast: {
        const Node& na = nodes_[nd.a];
        auto& da = acc(nd.a);
        for (std::size_t r = 0; r < nd.rows; ++r)
          for (std::size_t c = 0; c < nd.cols; ++c) {
            const std::size_t rr = na.rows == 1 ? 0 : r;
            const std::size_t cc = na.cols == 1 ? 0 : c;
            da[rr * na.cols + cc] += g[r * nd.cols + c];
          }
        break;
      }
      case OpKind::kConcat: {
        const Node& na = nodes_[nd.a];
        const Node& nb = nodes_[nd.b];
        auto& da = acc(nd.a);
        auto& db = acc(nd.b);
        const std::size_t ca = na.cols, cb = nb.cols;
        for (std::size_t r = 0; r < nd.rows; ++r) {
          for (std::size_t c = 0; c < ca; ++c) da[r * ca + c] += g[r * (ca + cb) + c];
          for (std::size_t c = 0; c < cb; ++c) db[r * cb + c] += g[r * (ca + cb) + ca + c];
        }
        break;
      }
    }
  }

  std::uint64_t id_;
  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, int> params_;
};

}  // namespace dicerl

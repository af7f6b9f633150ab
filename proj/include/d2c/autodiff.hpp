#pragma once

// Minimal reverse-mode tape over dense float64 matrices.
//
// Values are row-batched: a tensor batch of n items with d features is an
// n x d matrix. The op set is closed: matmul, elementwise add/sub/product,
// broadcasts, elementwise nonlinearities and row/global reductions. Every
// trainable module in the library is built from these ops.

#include "d2c/core.hpp"

#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace d2c::ad {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

/// Named parameter store. Order of insertion is preserved and is the order
/// used by serialization and by optimizers.
class ParameterTable {
 public:
  std::size_t add(std::string name, Matrix init) {
    require(find(name) < 0, Errc::invalid_parameter, "autodiff", "duplicate parameter " + name);
    Matrix grad = Matrix::Zero(init.rows(), init.cols());
    params_.push_back(Parameter{std::move(name), std::move(init), std::move(grad)});
    return params_.size() - 1;
  }

  long find(std::string_view name) const {
    for (std::size_t i = 0; i < params_.size(); ++i)
      if (params_[i].name == name) return static_cast<long>(i);
    return -1;
  }

  Parameter& at(std::size_t i) { return params_.at(i); }
  const Parameter& at(std::size_t i) const { return params_.at(i); }

  Parameter& operator[](std::string_view name) {
    long i = find(name);
    require(i >= 0, Errc::table_mismatch, "autodiff", "no parameter " + std::string(name));
    return params_[static_cast<std::size_t>(i)];
  }
  const Parameter& operator[](std::string_view name) const {
    long i = find(name);
    require(i >= 0, Errc::table_mismatch, "autodiff", "no parameter " + std::string(name));
    return params_[static_cast<std::size_t>(i)];
  }

  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.grad.setZero(p.value.rows(), p.value.cols());
  }

  /// Same names and shapes, in the same order.
  bool congruent(const ParameterTable& other) const {
    if (other.size() != size()) return false;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto& a = params_[i];
      const auto& b = other.params_[i];
      if (a.name != b.name || a.value.rows() != b.value.rows() || a.value.cols() != b.value.cols())
        return false;
    }
    return true;
  }

 private:
  std::vector<Parameter> params_;
};

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, int)>;

  Var constant(Matrix value) { return push(std::move(value), false, {}); }

  /// Leaf that receives a gradient (inputs we differentiate with respect to).
  Var input(Matrix value) { return push(std::move(value), true, {}); }

  Var param(Parameter& p) {
    Var v = push(p.value, true, {});
    nodes_[static_cast<std::size_t>(v.id)].param = &p;
    return v;
  }

  const Matrix& value(Var v) const { return node(v.id).value; }
  const Matrix& grad(Var v) const { return node(v.id).grad; }
  bool needs_grad(Var v) const { return node(v.id).needs_grad; }
  double scalar(Var v) const { return value(v)(0, 0); }
  std::size_t size() const { return nodes_.size(); }

  /// Accumulates d(out)/d(node) for every node, and adds parameter gradients
  /// into their Parameter::grad.
  void backward(Var out) {
    require(value(out).size() == 1, Errc::shape_mismatch, "autodiff", "backward needs a scalar");
    for (auto& n : nodes_)
      if (n.needs_grad) n.grad.setZero(n.value.rows(), n.value.cols());
    if (!node(out.id).needs_grad) return;
    node(out.id).grad(0, 0) = 1.0;
    for (int id = out.id; id >= 0; --id) {
      Node& n = node(id);
      if (!n.needs_grad) continue;
      if (n.backward) n.backward(*this, id);
      if (n.param) n.param->grad += n.grad;
    }
  }

  // used by op implementations
  Var push(Matrix value, bool needs_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), Matrix(), needs_grad ? std::move(backward) : Backward{},
                          nullptr, needs_grad});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }
  Matrix& grad_ref(int id) { return node(id).grad; }
  const Matrix& value_ref(int id) const { return node(id).value; }
  bool wants(int id) const { return node(id).needs_grad; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  Node& node(int id) { return nodes_.at(static_cast<std::size_t>(id)); }
  const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }

  std::vector<Node> nodes_;
};

namespace detail {

inline Tape& same_tape(Var a, Var b) {
  require(a.tape != nullptr && a.tape == b.tape, Errc::invalid_parameter, "autodiff",
          "operands live on different tapes");
  return *a.tape;
}

inline void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), Errc::shape_mismatch, "autodiff",
          std::string(op) + ": " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
              " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

template <typename F, typename D>
Var unary(Var a, F&& forward, D&& derivative) {
  Tape& t = *a.tape;
  Matrix out = forward(t.value(a));
  const int ia = a.id;
  return t.push(std::move(out), t.wants(ia),
                [ia, derivative](Tape& tp, int self) {
                  Eigen::ArrayXXd d = derivative(tp.value_ref(ia), tp.value_ref(self));
                  tp.grad_ref(ia).array() += tp.grad_ref(self).array() * d;
                });
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  require(t.value(a).cols() == t.value(b).rows(), Errc::shape_mismatch, "autodiff",
          "matmul inner dimensions differ");
  const int ia = a.id, ib = b.id;
  Matrix out = t.value(a) * t.value(b);
  return t.push(std::move(out), t.wants(ia) || t.wants(ib), [ia, ib](Tape& tp, int self) {
    const Matrix& g = tp.grad_ref(self);
    if (tp.wants(ia)) tp.grad_ref(ia).noalias() += g * tp.value_ref(ib).transpose();
    if (tp.wants(ib)) tp.grad_ref(ib).noalias() += tp.value_ref(ia).transpose() * g;
  });
}

inline Var add(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  detail::check_same_shape(t.value(a), t.value(b), "add");
  const int ia = a.id, ib = b.id;
  Matrix out = t.value(a) + t.value(b);
  return t.push(std::move(out), t.wants(ia) || t.wants(ib), [ia, ib](Tape& tp, int self) {
    if (tp.wants(ia)) tp.grad_ref(ia) += tp.grad_ref(self);
    if (tp.wants(ib)) tp.grad_ref(ib) += tp.grad_ref(self);
  });
}

inline Var sub(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  detail::check_same_shape(t.value(a), t.value(b), "sub");
  const int ia = a.id, ib = b.id;
  Matrix out = t.value(a) - t.value(b);
  return t.push(std::move(out), t.wants(ia) || t.wants(ib), [ia, ib](Tape& tp, int self) {
    if (tp.wants(ia)) tp.grad_ref(ia) += tp.grad_ref(self);
    if (tp.wants(ib)) tp.grad_ref(ib) -= tp.grad_ref(self);
  });
}

/// Elementwise product.
inline Var hadamard(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  detail::check_same_shape(t.value(a), t.value(b), "hadamard");
  const int ia = a.id, ib = b.id;
  Matrix out = t.value(a).cwiseProduct(t.value(b));
  return t.push(std::move(out), t.wants(ia) || t.wants(ib), [ia, ib](Tape& tp, int self) {
    const Matrix& g = tp.grad_ref(self);
    if (tp.wants(ia)) tp.grad_ref(ia) += g.cwiseProduct(tp.value_ref(ib));
    if (tp.wants(ib)) tp.grad_ref(ib) += g.cwiseProduct(tp.value_ref(ia));
  });
}

/// a (n x m) + row (1 x m) broadcast over rows.
inline Var add_row(Var a, Var row) {
  Tape& t = detail::same_tape(a, row);
  require(t.value(row).rows() == 1 && t.value(row).cols() == t.value(a).cols(),
          Errc::shape_mismatch, "autodiff", "add_row needs a 1 x cols row");
  const int ia = a.id, ib = row.id;
  Matrix out = t.value(a).rowwise() + t.value(row).row(0);
  return t.push(std::move(out), t.wants(ia) || t.wants(ib), [ia, ib](Tape& tp, int self) {
    const Matrix& g = tp.grad_ref(self);
    if (tp.wants(ia)) tp.grad_ref(ia) += g;
    if (tp.wants(ib)) tp.grad_ref(ib) += g.colwise().sum();
  });
}

/// a (n x m) - col (n x 1) broadcast over columns.
inline Var sub_col(Var a, Var col) {
  Tape& t = detail::same_tape(a, col);
  require(t.value(col).cols() == 1 && t.value(col).rows() == t.value(a).rows(),
          Errc::shape_mismatch, "autodiff", "sub_col needs an n x 1 column");
  const int ia = a.id, ib = col.id;
  Matrix out = t.value(a).colwise() - t.value(col).col(0);
  return t.push(std::move(out), t.wants(ia) || t.wants(ib), [ia, ib](Tape& tp, int self) {
    const Matrix& g = tp.grad_ref(self);
    if (tp.wants(ia)) tp.grad_ref(ia) += g;
    if (tp.wants(ib)) tp.grad_ref(ib) -= g.rowwise().sum();
  });
}

/// Multiplies row i of a by the constant weights(i).
inline Var scale_rows(Var a, const Vector& weights) {
  Tape& t = *a.tape;
  require(weights.size() == t.value(a).rows(), Errc::shape_mismatch, "autodiff",
          "scale_rows weight count differs from rows");
  const int ia = a.id;
  Matrix out = weights.asDiagonal() * t.value(a);
  return t.push(std::move(out), t.wants(ia), [ia, weights](Tape& tp, int self) {
    tp.grad_ref(ia) += weights.asDiagonal() * tp.grad_ref(self);
  });
}

inline Var scale(Var a, double s) {
  Tape& t = *a.tape;
  const int ia = a.id;
  Matrix out = t.value(a) * s;
  return t.push(std::move(out), t.wants(ia),
                [ia, s](Tape& tp, int self) { tp.grad_ref(ia) += s * tp.grad_ref(self); });
}

inline Var add_scalar(Var a, double s) {
  Tape& t = *a.tape;
  const int ia = a.id;
  Matrix out = t.value(a).array() + s;
  return t.push(std::move(out), t.wants(ia),
                [ia](Tape& tp, int self) { tp.grad_ref(ia) += tp.grad_ref(self); });
}

inline Var tanh(Var a) {
  return detail::unary(
      a, [](const Matrix& x) -> Matrix { return x.array().tanh().matrix(); },
      [](const Matrix&, const Matrix& y) -> Eigen::ArrayXXd { return 1.0 - y.array().square(); });
}

inline Var sigmoid(Var a) {
  return detail::unary(
      a, [](const Matrix& x) -> Matrix { return (1.0 / (1.0 + (-x.array()).exp())).matrix(); },
      [](const Matrix&, const Matrix& y) -> Eigen::ArrayXXd {
        return y.array() * (1.0 - y.array());
      });
}

/// x * sigmoid(x)
inline Var silu(Var a) {
  return detail::unary(
      a, [](const Matrix& x) -> Matrix { return (x.array() / (1.0 + (-x.array()).exp())).matrix(); },
      [](const Matrix& x, const Matrix&) -> Eigen::ArrayXXd {
        Eigen::ArrayXXd s = 1.0 / (1.0 + (-x.array()).exp());
        return s * (1.0 + x.array() * (1.0 - s));
      });
}

inline Var exp(Var a) {
  return detail::unary(
      a, [](const Matrix& x) -> Matrix { return x.array().exp().matrix(); },
      [](const Matrix&, const Matrix& y) -> Eigen::ArrayXXd { return y.array(); });
}

inline Var log(Var a) {
  return detail::unary(
      a, [](const Matrix& x) -> Matrix { return x.array().log().matrix(); },
      [](const Matrix& x, const Matrix&) -> Eigen::ArrayXXd { return 1.0 / x.array(); });
}

inline Var square(Var a) {
  return detail::unary(
      a, [](const Matrix& x) -> Matrix { return x.array().square().matrix(); },
      [](const Matrix& x, const Matrix&) -> Eigen::ArrayXXd { return 2.0 * x.array(); });
}

/// Gradient is passed only where lo < x < hi.
inline Var clamp(Var a, double lo, double hi) {
  return detail::unary(
      a, [lo, hi](const Matrix& x) -> Matrix { return x.cwiseMax(lo).cwiseMin(hi); },
      [lo, hi](const Matrix& x, const Matrix&) -> Eigen::ArrayXXd {
        return ((x.array() > lo) && (x.array() < hi)).cast<double>();
      });
}

/// Sum of all entries, 1 x 1.
inline Var sum(Var a) {
  Tape& t = *a.tape;
  const int ia = a.id;
  Matrix out(1, 1);
  out(0, 0) = t.value(a).sum();
  return t.push(std::move(out), t.wants(ia),
                [ia](Tape& tp, int self) { tp.grad_ref(ia).array() += tp.grad_ref(self)(0, 0); });
}

inline Var mean(Var a) {
  const double n = static_cast<double>(a.tape->value(a).size());
  return scale(sum(a), 1.0 / n);
}

/// Per-row sums, n x 1.
inline Var row_sum(Var a) {
  Tape& t = *a.tape;
  const int ia = a.id;
  Matrix out = t.value(a).rowwise().sum();
  return t.push(std::move(out), t.wants(ia), [ia](Tape& tp, int self) {
    tp.grad_ref(ia).colwise() += tp.grad_ref(self).col(0);
  });
}

/// Numerically stable per-row log-sum-exp, n x 1.
inline Var logsumexp_rows(Var a) {
  Tape& t = *a.tape;
  const Matrix& x = t.value(a);
  Vector mx = x.rowwise().maxCoeff();
  Matrix out(x.rows(), 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    out(i, 0) = mx(i) + std::log((x.row(i).array() - mx(i)).exp().sum());
  const int ia = a.id;
  return t.push(std::move(out), t.wants(ia), [ia](Tape& tp, int self) {
    const Matrix& xv = tp.value_ref(ia);
    const Matrix& lse = tp.value_ref(self);
    const Matrix& g = tp.grad_ref(self);
    for (Eigen::Index i = 0; i < xv.rows(); ++i)
      tp.grad_ref(ia).row(i).array() += g(i, 0) * (xv.row(i).array() - lse(i, 0)).exp();
  });
}

/// Rows scaled to unit Euclidean norm: x / sqrt(|x|^2 + eps^2). Zero rows stay zero.
inline Var normalize_rows(Var a, double eps = 1e-12) {
  Tape& t = *a.tape;
  const Matrix& x = t.value(a);
  Vector norms = (x.rowwise().squaredNorm().array() + eps * eps).sqrt();
  Matrix out = norms.cwiseInverse().asDiagonal() * x;
  const int ia = a.id;
  return t.push(std::move(out), t.wants(ia), [ia, norms](Tape& tp, int self) {
    const Matrix& y = tp.value_ref(self);
    const Matrix& g = tp.grad_ref(self);
    // d(x/n) = (g - y (y.g)) / n
    Vector dots = (g.cwiseProduct(y)).rowwise().sum();
    Matrix gi = g - dots.asDiagonal() * y;
    tp.grad_ref(ia) += norms.cwiseInverse().asDiagonal() * gi;
  });
}

inline Var concat_cols(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  const Matrix& x = t.value(a);
  const Matrix& y = t.value(b);
  require(x.rows() == y.rows(), Errc::shape_mismatch, "autodiff", "concat_cols row counts differ");
  Matrix out(x.rows(), x.cols() + y.cols());
  out << x, y;
  const int ia = a.id, ib = b.id;
  const Eigen::Index ca = x.cols(), cb = y.cols();
  return t.push(std::move(out), t.wants(ia) || t.wants(ib), [ia, ib, ca, cb](Tape& tp, int self) {
    const Matrix& g = tp.grad_ref(self);
    if (tp.wants(ia)) tp.grad_ref(ia) += g.leftCols(ca);
    if (tp.wants(ib)) tp.grad_ref(ib) += g.rightCols(cb);
  });
}

inline Var transpose(Var a) {
  Tape& t = *a.tape;
  Matrix out = t.value(a).transpose();
  const int ia = a.id;
  return t.push(std::move(out), t.wants(ia), [ia](Tape& tp, int self) {
    tp.grad_ref(ia) += tp.grad_ref(self).transpose();
  });
}

inline Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  Tape& t = *a.tape;
  const Matrix& x = t.value(a);
  require(start >= 0 && count >= 0 && start + count <= x.cols(), Errc::shape_mismatch, "autodiff",
          "slice_cols out of range");
  Matrix out = x.middleCols(start, count);
  const int ia = a.id;
  return t.push(std::move(out), t.wants(ia), [ia, start, count](Tape& tp, int self) {
    tp.grad_ref(ia).middleCols(start, count) += tp.grad_ref(self);
  });
}

}  // namespace d2c::ad

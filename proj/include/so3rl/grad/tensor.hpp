#pragma once

// Reverse-mode automatic differentiation over small dense 2-D tensors.
//
// A Tensor is a shared handle to a tape node holding its value, accumulated
// gradient and a closure that pushes the node's gradient into its inputs.
// Batches are rows; features are columns. Binary elementwise ops broadcast
// dimensions of size 1.

#include <Eigen/Core>
#include <Eigen/SVD>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "so3rl/errors.hpp"

namespace so3rl::grad {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

namespace detail {
inline thread_local int no_grad_depth = 0;
inline std::atomic<std::uint64_t> svd_degenerate_backward{0};
}  // namespace detail

/// While alive, operations on this thread do not record the tape.
class NoGradGuard {
 public:
  NoGradGuard() { ++detail::no_grad_depth; }
  ~NoGradGuard() { --detail::no_grad_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline bool grad_enabled() { return detail::no_grad_depth == 0; }

/// Number of SVD-projection backward passes that hit a degenerate spectrum
/// and returned a zero gradient.
inline std::uint64_t svd_degenerate_backward_count() { return detail::svd_degenerate_backward.load(); }

template <typename Scalar>
struct Node {
  Mat<Scalar> value;
  Mat<Scalar> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Mat<Scalar>&)> backward;

  void accumulate(const Mat<Scalar>& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

template <typename Scalar = double>
class Tensor {
 public:
  using Matrix = Mat<Scalar>;
  using NodePtr = std::shared_ptr<Node<Scalar>>;

  Tensor() : node_(std::make_shared<Node<Scalar>>()) {}
  explicit Tensor(Matrix value, bool requires_grad = false) : node_(std::make_shared<Node<Scalar>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static Tensor constant(Matrix value) { return Tensor(std::move(value), false); }
  static Tensor parameter(Matrix value) { return Tensor(std::move(value), true); }
  static Tensor scalar(Scalar v) { return Tensor(Matrix::Constant(1, 1, v), false); }

  const Matrix& value() const { return node_->value; }
  /// Direct access for optimizers and checkpoint loading.
  Matrix& mutable_value() { return node_->value; }

  /// Accumulated gradient; zeros of the value's shape if none was recorded.
  Matrix grad() const {
    if (node_->grad.size() == 0) return Matrix::Zero(rows(), cols());
    return node_->grad;
  }
  bool has_grad() const { return node_->grad.size() != 0; }
  void zero_grad() { node_->grad.resize(0, 0); }

  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_->requires_grad; }
  Scalar item() const {
    if (node_->value.size() != 1) throw InvalidArgument("item() needs a 1x1 tensor");
    return node_->value(0, 0);
  }

  /// Same value, cut from the tape.
  Tensor detach() const { return Tensor(node_->value, false); }

  /// Reverse sweep from this scalar root. Leaf gradients accumulate across
  /// calls until zero_grad.
  void backward() const {
    if (node_->value.size() != 1) throw InvalidArgument("backward() needs a scalar root");
    if (!node_->requires_grad) return;
    std::vector<Node<Scalar>*> order;
    std::unordered_set<Node<Scalar>*> seen;
    std::vector<std::pair<Node<Scalar>*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, i] = stack.back();
      if (i < n->parents.size()) {
        Node<Scalar>* p = n->parents[i++].get();
        if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    node_->accumulate(Matrix::Ones(1, 1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<Scalar>* n = *it;
      if (n->backward && n->grad.size() != 0) n->backward(n->grad);
    }
    // Interior gradients are only needed during the sweep.
    for (Node<Scalar>* n : order) {
      if (n->backward) n->grad.resize(0, 0);
    }
  }

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

namespace detail {

template <typename Scalar>
void push(const Tensor<Scalar>& t, const Mat<Scalar>& g) {
  if (t.requires_grad()) t.node()->accumulate(g);
}

/// Creates the output node; records the backward closure only when some
/// input needs a gradient and recording is enabled.
template <typename Scalar, typename Backward>
Tensor<Scalar> record(Mat<Scalar> value, std::initializer_list<Tensor<Scalar>> inputs, Backward&& fn) {
  Tensor<Scalar> out(std::move(value), false);
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  for (const auto& in : inputs) node.parents.push_back(in.node());
  node.backward = std::forward<Backward>(fn);
  return out;
}

inline Eigen::Index broadcast_dim(Eigen::Index a, Eigen::Index b) {
  if (a == b || b == 1) return a;
  if (a == 1) return b;
  throw InvalidArgument("incompatible shapes for broadcasting");
}

template <typename Scalar>
Mat<Scalar> expand(const Mat<Scalar>& m, Eigen::Index r, Eigen::Index c) {
  if (m.rows() == r && m.cols() == c) return m;
  return m.replicate(r / m.rows(), c / m.cols());
}

template <typename Scalar>
Mat<Scalar> reduce_to(const Mat<Scalar>& g, Eigen::Index r, Eigen::Index c) {
  if (g.rows() == r && g.cols() == c) return g;
  Mat<Scalar> out = g;
  if (r == 1 && out.rows() != 1) out = out.colwise().sum().eval();
  if (c == 1 && out.cols() != 1) out = out.rowwise().sum().eval();
  return out;
}

template <typename Scalar, typename Forward, typename GradA, typename GradB>
Tensor<Scalar> binary(const Tensor<Scalar>& a, const Tensor<Scalar>& b, Forward f, GradA ga, GradB gb) {
  const Eigen::Index r = broadcast_dim(a.rows(), b.rows());
  const Eigen::Index c = broadcast_dim(a.cols(), b.cols());
  Mat<Scalar> av = expand(a.value(), r, c);
  Mat<Scalar> bv = expand(b.value(), r, c);
  Mat<Scalar> out = f(av, bv);
  return record<Scalar>(std::move(out), {a, b}, [a, b, av, bv, ga, gb](const Mat<Scalar>& g) {
    if (a.requires_grad()) push(a, reduce_to<Scalar>(ga(g, av, bv), a.rows(), a.cols()));
    if (b.requires_grad()) push(b, reduce_to<Scalar>(gb(g, av, bv), b.rows(), b.cols()));
  });
}

template <typename Scalar, typename Forward, typename Derivative>
Tensor<Scalar> unary(const Tensor<Scalar>& x, Forward f, Derivative df) {
  Mat<Scalar> out = f(x.value());
  Mat<Scalar> xv = x.value();
  Mat<Scalar> yv = out;
  return record<Scalar>(std::move(out), {x}, [x, xv = std::move(xv), yv = std::move(yv), df](const Mat<Scalar>& g) {
    push(x, Mat<Scalar>(g.array() * df(xv, yv).array()));
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Arithmetic

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.cols() != b.rows()) throw InvalidArgument("matmul: inner dimensions differ");
  Mat<Scalar> out = a.value() * b.value();
  return detail::record<Scalar>(std::move(out), {a, b}, [a, b](const Mat<Scalar>& g) {
    if (a.requires_grad()) detail::push(a, Mat<Scalar>(g * b.value().transpose()));
    if (b.requires_grad()) detail::push(b, Mat<Scalar>(a.value().transpose() * g));
  });
}

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return detail::binary(
      a, b, [](const Mat<Scalar>& x, const Mat<Scalar>& y) { return Mat<Scalar>(x + y); },
      [](const Mat<Scalar>& g, const Mat<Scalar>&, const Mat<Scalar>&) { return g; },
      [](const Mat<Scalar>& g, const Mat<Scalar>&, const Mat<Scalar>&) { return g; });
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return detail::binary(
      a, b, [](const Mat<Scalar>& x, const Mat<Scalar>& y) { return Mat<Scalar>(x - y); },
      [](const Mat<Scalar>& g, const Mat<Scalar>&, const Mat<Scalar>&) { return g; },
      [](const Mat<Scalar>& g, const Mat<Scalar>&, const Mat<Scalar>&) { return Mat<Scalar>(-g); });
}

template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return detail::binary(
      a, b, [](const Mat<Scalar>& x, const Mat<Scalar>& y) { return Mat<Scalar>(x.cwiseProduct(y)); },
      [](const Mat<Scalar>& g, const Mat<Scalar>&, const Mat<Scalar>& y) { return Mat<Scalar>(g.cwiseProduct(y)); },
      [](const Mat<Scalar>& g, const Mat<Scalar>& x, const Mat<Scalar>&) { return Mat<Scalar>(g.cwiseProduct(x)); });
}

template <typename Scalar>
Tensor<Scalar> div(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return detail::binary(
      a, b, [](const Mat<Scalar>& x, const Mat<Scalar>& y) { return Mat<Scalar>(x.cwiseQuotient(y)); },
      [](const Mat<Scalar>& g, const Mat<Scalar>&, const Mat<Scalar>& y) { return Mat<Scalar>(g.cwiseQuotient(y)); },
      [](const Mat<Scalar>& g, const Mat<Scalar>& x, const Mat<Scalar>& y) {
        return Mat<Scalar>(-(g.array() * x.array() / y.array().square()).matrix());
      });
}

template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return add(a, b); }
template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return sub(a, b); }
template <typename Scalar>
Tensor<Scalar> operator*(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return mul(a, b); }
template <typename Scalar>
Tensor<Scalar> operator/(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return div(a, b); }

template <typename Scalar>
Tensor<Scalar> operator*(const Tensor<Scalar>& a, Scalar s) {
  Mat<Scalar> out = a.value() * s;
  return detail::record<Scalar>(std::move(out), {a}, [a, s](const Mat<Scalar>& g) { detail::push(a, Mat<Scalar>(g * s)); });
}
template <typename Scalar>
Tensor<Scalar> operator*(Scalar s, const Tensor<Scalar>& a) { return a * s; }

template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, Scalar s) {
  Mat<Scalar> out = a.value().array() + s;
  return detail::record<Scalar>(std::move(out), {a}, [a](const Mat<Scalar>& g) { detail::push(a, g); });
}
template <typename Scalar>
Tensor<Scalar> operator+(Scalar s, const Tensor<Scalar>& a) { return a + s; }
template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a, Scalar s) { return a + (-s); }

template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a) { return a * Scalar(-1); }
template <typename Scalar>
Tensor<Scalar> operator-(Scalar s, const Tensor<Scalar>& a) { return (-a) + s; }

// ---------------------------------------------------------------------------
// Elementwise functions

template <typename Scalar>
Tensor<Scalar> tanh(const Tensor<Scalar>& x) {
  return detail::unary(
      x, [](const Mat<Scalar>& v) { return Mat<Scalar>(v.array().tanh()); },
      [](const Mat<Scalar>&, const Mat<Scalar>& y) { return Mat<Scalar>(Scalar(1) - y.array().square()); });
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  return detail::unary(
      x, [](const Mat<Scalar>& v) { return Mat<Scalar>(v.cwiseMax(Scalar(0))); },
      [](const Mat<Scalar>& v, const Mat<Scalar>&) {
        return Mat<Scalar>((v.array() > Scalar(0)).template cast<Scalar>());
      });
}

template <typename Scalar>
Tensor<Scalar> exp(const Tensor<Scalar>& x) {
  return detail::unary(
      x, [](const Mat<Scalar>& v) { return Mat<Scalar>(v.array().exp()); },
      [](const Mat<Scalar>&, const Mat<Scalar>& y) { return y; });
}

template <typename Scalar>
Tensor<Scalar> log(const Tensor<Scalar>& x) {
  return detail::unary(
      x, [](const Mat<Scalar>& v) { return Mat<Scalar>(v.array().log()); },
      [](const Mat<Scalar>& v, const Mat<Scalar>&) { return Mat<Scalar>(v.array().inverse()); });
}

template <typename Scalar>
Tensor<Scalar> square(const Tensor<Scalar>& x) {
  return detail::unary(
      x, [](const Mat<Scalar>& v) { return Mat<Scalar>(v.array().square()); },
      [](const Mat<Scalar>& v, const Mat<Scalar>&) { return Mat<Scalar>(Scalar(2) * v.array()); });
}

/// Gradient passes only where lo <= x <= hi.
template <typename Scalar>
Tensor<Scalar> clamp(const Tensor<Scalar>& x, Scalar lo, Scalar hi) {
  return detail::unary(
      x, [lo, hi](const Mat<Scalar>& v) { return Mat<Scalar>(v.cwiseMax(lo).cwiseMin(hi)); },
      [lo, hi](const Mat<Scalar>& v, const Mat<Scalar>&) {
        return Mat<Scalar>(((v.array() >= lo) && (v.array() <= hi)).template cast<Scalar>());
      });
}

/// Elementwise minimum; ties send the gradient to `a`.
template <typename Scalar>
Tensor<Scalar> minimum(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return detail::binary(
      a, b, [](const Mat<Scalar>& x, const Mat<Scalar>& y) { return Mat<Scalar>(x.cwiseMin(y)); },
      [](const Mat<Scalar>& g, const Mat<Scalar>& x, const Mat<Scalar>& y) {
        return Mat<Scalar>(g.array() * (x.array() <= y.array()).template cast<Scalar>());
      },
      [](const Mat<Scalar>& g, const Mat<Scalar>& x, const Mat<Scalar>& y) {
        return Mat<Scalar>(g.array() * (y.array() < x.array()).template cast<Scalar>());
      });
}

// ---------------------------------------------------------------------------
// Reductions and reshaping

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x) {
  Mat<Scalar> out = Mat<Scalar>::Constant(1, 1, x.value().sum());
  const Eigen::Index r = x.rows(), c = x.cols();
  return detail::record<Scalar>(std::move(out), {x}, [x, r, c](const Mat<Scalar>& g) {
    detail::push(x, Mat<Scalar>(Mat<Scalar>::Constant(r, c, g(0, 0))));
  });
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& x) {
  return sum(x) * (Scalar(1) / static_cast<Scalar>(x.value().size()));
}

/// Sum over columns: (R×C) -> (R×1).
template <typename Scalar>
Tensor<Scalar> row_sum(const Tensor<Scalar>& x) {
  Mat<Scalar> out = x.value().rowwise().sum();
  const Eigen::Index c = x.cols();
  return detail::record<Scalar>(std::move(out), {x}, [x, c](const Mat<Scalar>& g) {
    detail::push(x, Mat<Scalar>(g.replicate(1, c)));
  });
}

template <typename Scalar>
Tensor<Scalar> concat_cols(const std::vector<Tensor<Scalar>>& parts) {
  if (parts.empty()) throw InvalidArgument("concat_cols: no inputs");
  const Eigen::Index r = parts.front().rows();
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) throw InvalidArgument("concat_cols: row counts differ");
    c += p.cols();
  }
  Mat<Scalar> out(r, c);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  Tensor<Scalar> result(std::move(out), false);
  if (!grad_enabled()) return result;
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (!any) return result;
  auto& node = *result.node();
  node.requires_grad = true;
  for (const auto& p : parts) node.parents.push_back(p.node());
  node.backward = [parts](const Mat<Scalar>& g) {
    Eigen::Index off = 0;
    for (const auto& p : parts) {
      if (p.requires_grad()) detail::push(p, Mat<Scalar>(g.middleCols(off, p.cols())));
      off += p.cols();
    }
  };
  return result;
}

template <typename Scalar>
Tensor<Scalar> concat_cols(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return concat_cols(std::vector<Tensor<Scalar>>{a, b});
}

template <typename Scalar>
Tensor<Scalar> slice_cols(const Tensor<Scalar>& x, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > x.cols()) throw InvalidArgument("slice_cols: out of range");
  Mat<Scalar> out = x.value().middleCols(start, count);
  const Eigen::Index r = x.rows(), c = x.cols();
  return detail::record<Scalar>(std::move(out), {x}, [x, r, c, start, count](const Mat<Scalar>& g) {
    Mat<Scalar> full = Mat<Scalar>::Zero(r, c);
    full.middleCols(start, count) = g;
    detail::push(x, full);
  });
}

// ---------------------------------------------------------------------------
// Manifold projections

/// Each row divided by its Euclidean norm. Rows with norm below 1e-12 map to
/// the first basis vector and receive a zero gradient.
template <typename Scalar>
Tensor<Scalar> normalize_rows(const Tensor<Scalar>& x) {
  const Mat<Scalar>& v = x.value();
  Mat<Scalar> out(v.rows(), v.cols());
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> norms(v.rows());
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    norms(i) = v.row(i).norm();
    if (norms(i) < Scalar(1e-12)) {
      out.row(i).setZero();
      out(i, 0) = Scalar(1);
    } else {
      out.row(i) = v.row(i) / norms(i);
    }
  }
  Mat<Scalar> y = out;
  return detail::record<Scalar>(std::move(out), {x}, [x, y, norms](const Mat<Scalar>& g) {
    Mat<Scalar> dx(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      if (norms(i) < Scalar(1e-12)) {
        dx.row(i).setZero();
      } else {
        dx.row(i) = (g.row(i) - y.row(i) * y.row(i).dot(g.row(i))) / norms(i);
      }
    }
    detail::push(x, dx);
  });
}

/// Rows of 9 entries read as row-major 3×3 matrices and replaced by their
/// nearest rotation U diag(1, 1, det(UVᵀ)) Vᵀ. The backward pass uses the
/// Procrustes differential; when a pair of signed singular values sums below
/// 1e-6 that row's gradient is zero and the diagnostics counter increments.
template <typename Scalar>
Tensor<Scalar> svd_project_rows(const Tensor<Scalar>& x) {
  using M3 = Eigen::Matrix<Scalar, 3, 3>;
  using RowM3 = Eigen::Matrix<Scalar, 3, 3, Eigen::RowMajor>;
  if (x.cols() != 9) throw InvalidArgument("svd_project_rows: rows must have 9 entries");
  const Eigen::Index n = x.rows();
  Mat<Scalar> out(n, 9);
  std::vector<M3> us(n), vs(n);
  std::vector<Eigen::Matrix<Scalar, 3, 1>> ss(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const M3 m = Eigen::Map<const RowM3>(Eigen::Matrix<Scalar, 1, 9>(x.value().row(i)).data());
    Eigen::JacobiSVD<M3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    M3 u = svd.matrixU();
    const M3 v = svd.matrixV();
    Eigen::Matrix<Scalar, 3, 1> s = svd.singularValues();
    const Scalar d = (u * v.transpose()).determinant() < Scalar(0) ? Scalar(-1) : Scalar(1);
    u.col(2) *= d;
    s(2) *= d;
    const RowM3 r = u * v.transpose();
    out.row(i) = Eigen::Map<const Eigen::Matrix<Scalar, 1, 9>>(r.data());
    us[i] = u;
    vs[i] = v;
    ss[i] = s;
  }
  return detail::record<Scalar>(std::move(out), {x}, [x, us, vs, ss](const Mat<Scalar>& g) {
    Mat<Scalar> dx(g.rows(), 9);
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      const M3 gm = Eigen::Map<const RowM3>(Eigen::Matrix<Scalar, 1, 9>(g.row(i)).data());
      const M3 h = us[i].transpose() * gm * vs[i];
      M3 k = M3::Zero();
      bool degenerate = false;
      for (int a = 0; a < 3 && !degenerate; ++a) {
        for (int b = a + 1; b < 3; ++b) {
          const Scalar denom = ss[i](a) + ss[i](b);
          if (!(denom > Scalar(1e-6))) {
            degenerate = true;
            break;
          }
          k(a, b) = (h(a, b) - h(b, a)) / denom;
          k(b, a) = -k(a, b);
        }
      }
      if (degenerate) {
        ++detail::svd_degenerate_backward;
        dx.row(i).setZero();
        continue;
      }
      const RowM3 d = us[i] * k * vs[i].transpose();
      dx.row(i) = Eigen::Map<const Eigen::Matrix<Scalar, 1, 9>>(d.data());
    }
    detail::push(x, dx);
  });
}

}  // namespace so3rl::grad

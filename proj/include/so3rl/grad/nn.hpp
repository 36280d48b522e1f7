#pragma once

// Networks, Gaussian policy heads and Adam on top of the tape in tensor.hpp.

#include <Eigen/QR>

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "so3rl/grad/tensor.hpp"

namespace so3rl::grad {

enum class Activation { Tanh, Relu };

/// Orthogonal rows×cols matrix scaled by gain (QR of a Gaussian matrix with
/// the sign of R's diagonal folded into Q).
template <typename Scalar, typename Urbg>
Mat<Scalar> orthogonal_init(Eigen::Index rows, Eigen::Index cols, double gain, Urbg& rng) {
  std::normal_distribution<double> normal;
  const bool tall = rows >= cols;
  const Eigen::Index r = tall ? rows : cols, c = tall ? cols : rows;
  Eigen::MatrixXd a(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) a(i, j) = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(r, c);
  const Eigen::MatrixXd rr = qr.matrixQR();
  for (Eigen::Index j = 0; j < c; ++j) {
    if (rr(j, j) < 0) q.col(j) *= -1.0;
  }
  Eigen::MatrixXd w = tall ? q : Eigen::MatrixXd(q.transpose());
  return (w * gain).cast<Scalar>();
}

/// Fully connected network. Weights are stored (in × out) so a batch of row
/// inputs maps as x·W + b. Copying is explicit through clone().
template <typename Scalar = float>
class Mlp {
 public:
  Mlp() = default;

  /// Hidden layers get orthogonal init with gain √2 (relu) or 1 (tanh); the
  /// output layer uses `out_gain`. Biases start at zero.
  template <typename Urbg>
  Mlp(int in, std::vector<int> hidden, int out, Activation act, Urbg& rng, double out_gain = 1.0)
      : act_(act) {
    std::vector<int> dims{in};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(out);
    const double hidden_gain = act == Activation::Relu ? std::numbers::sqrt2 : 1.0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      const bool last = l + 2 == dims.size();
      weights_.push_back(Tensor<Scalar>::parameter(
          orthogonal_init<Scalar>(dims[l], dims[l + 1], last ? out_gain : hidden_gain, rng)));
      biases_.push_back(Tensor<Scalar>::parameter(Mat<Scalar>::Zero(1, dims[l + 1])));
    }
  }

  Mlp(Mlp&&) noexcept = default;
  Mlp& operator=(Mlp&&) noexcept = default;
  Mlp(const Mlp&) = delete;
  Mlp& operator=(const Mlp&) = delete;

  Tensor<Scalar> forward(const Tensor<Scalar>& x) const {
    Tensor<Scalar> h = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      h = add(matmul(h, weights_[l]), biases_[l]);
      if (l + 1 < weights_.size()) h = act_ == Activation::Relu ? relu(h) : tanh(h);
    }
    return h;
  }

  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const { return forward(x); }

  int in_dim() const { return weights_.empty() ? 0 : static_cast<int>(weights_.front().rows()); }
  int out_dim() const { return weights_.empty() ? 0 : static_cast<int>(weights_.back().cols()); }

  std::vector<Tensor<Scalar>> parameters() const {
    std::vector<Tensor<Scalar>> out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      out.push_back(weights_[l]);
      out.push_back(biases_[l]);
    }
    return out;
  }

  std::vector<std::pair<std::string, Tensor<Scalar>>> named_parameters(const std::string& prefix) const {
    std::vector<std::pair<std::string, Tensor<Scalar>>> out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      out.emplace_back(prefix + ".w" + std::to_string(l), weights_[l]);
      out.emplace_back(prefix + ".b" + std::to_string(l), biases_[l]);
    }
    return out;
  }

  /// Deep copy with fresh parameter nodes.
  Mlp clone() const {
    Mlp m;
    m.act_ = act_;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      m.weights_.push_back(Tensor<Scalar>::parameter(weights_[l].value()));
      m.biases_.push_back(Tensor<Scalar>::parameter(biases_[l].value()));
    }
    return m;
  }

  void copy_from(const Mlp& src) {
    auto dst = parameters();
    auto from = src.parameters();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i].mutable_value() = from[i].value();
  }

  /// this ← (1 − tau)·this + tau·src
  void polyak_from(const Mlp& src, Scalar tau) {
    auto dst = parameters();
    auto from = src.parameters();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      dst[i].mutable_value() = (Scalar(1) - tau) * dst[i].value() + tau * from[i].value();
    }
  }

 private:
  Activation act_ = Activation::Tanh;
  std::vector<Tensor<Scalar>> weights_;
  std::vector<Tensor<Scalar>> biases_;
};

// ---------------------------------------------------------------------------
// Diagonal Gaussians

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kTanhEps = 1e-6;

template <typename Scalar>
Tensor<Scalar> clamp_log_std(const Tensor<Scalar>& log_std) {
  return clamp(log_std, Scalar(kLogStdMin), Scalar(kLogStdMax));
}

/// Per-row log density of `action` under N(mean, diag(exp(log_std)²)).
/// log_std may be a single row shared by the batch. Returns (rows × 1).
template <typename Scalar>
Tensor<Scalar> gaussian_log_prob(const Tensor<Scalar>& mean, const Tensor<Scalar>& log_std,
                                 const Tensor<Scalar>& action) {
  const Scalar d = static_cast<Scalar>(mean.cols());
  const Tensor<Scalar> z = (action - mean) * exp(-log_std);
  const Tensor<Scalar> quad = row_sum(square(z)) * Scalar(-0.5);
  Tensor<Scalar> ls = row_sum(log_std);
  return quad - ls - Scalar(0.5) * d * std::log(Scalar(2) * std::numbers::pi_v<Scalar>);
}

/// ½ Σ log(2πe σ²) per row of log_std. Returns (rows × 1).
template <typename Scalar>
Tensor<Scalar> gaussian_entropy(const Tensor<Scalar>& log_std) {
  const Scalar d = static_cast<Scalar>(log_std.cols());
  return row_sum(log_std) +
         Scalar(0.5) * d * (Scalar(1) + std::log(Scalar(2) * std::numbers::pi_v<Scalar>));
}

template <typename Scalar>
struct SquashedSample {
  Tensor<Scalar> action;    // tanh(u), in (−1, 1)
  Tensor<Scalar> pre_tanh;  // u
  Tensor<Scalar> log_prob;  // rows × 1
};

/// Reparameterized u = mean + exp(log_std)·noise, a = tanh(u) with
/// log π(a) = log N(u) − Σ log(1 − tanh²(u) + 1e-6).
template <typename Scalar>
SquashedSample<Scalar> squashed_gaussian_sample(const Tensor<Scalar>& mean, const Tensor<Scalar>& log_std,
                                                const Mat<Scalar>& noise) {
  const Tensor<Scalar> u = mean + exp(log_std) * Tensor<Scalar>::constant(noise);
  const Tensor<Scalar> a = tanh(u);
  const Tensor<Scalar> correction = row_sum(log(Scalar(1) + Scalar(kTanhEps) - square(a)));
  return {a, u, gaussian_log_prob(mean, log_std, u) - correction};
}

template <typename Scalar, typename Urbg>
Mat<Scalar> standard_normal(Eigen::Index rows, Eigen::Index cols, Urbg& rng) {
  std::normal_distribution<double> normal;
  Mat<Scalar> m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = static_cast<Scalar>(normal(rng));
  return m;
}

// ---------------------------------------------------------------------------
// Optimization

template <typename Scalar>
struct AdamState {
  std::vector<Mat<Scalar>> m;
  std::vector<Mat<Scalar>> v;
  long t = 0;
};

/// One Adam update with bias correction, in place on `params`.
template <typename Scalar>
void adam_step(std::vector<Mat<Scalar>*> params, const std::vector<Mat<Scalar>>& grads, AdamState<Scalar>& state,
               double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
  if (params.size() != grads.size()) throw InvalidArgument("adam_step: params and grads differ in count");
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.push_back(Mat<Scalar>::Zero(p->rows(), p->cols()));
      state.v.push_back(Mat<Scalar>::Zero(p->rows(), p->cols()));
    }
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  const Scalar b1 = static_cast<Scalar>(beta1), b2 = static_cast<Scalar>(beta2);
  const Scalar step = static_cast<Scalar>(lr / c1);
  const Scalar inv_c2 = static_cast<Scalar>(1.0 / c2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& g = grads[i];
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
    params[i]->array() -= step * m.array() / ((v.array() * inv_c2).sqrt() + static_cast<Scalar>(eps));
  }
}

template <typename Scalar = float>
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Tensor<Scalar>> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void step() {
    std::vector<Mat<Scalar>*> values;
    std::vector<Mat<Scalar>> grads;
    for (auto& p : params_) {
      values.push_back(&p.mutable_value());
      grads.push_back(p.grad());
    }
    adam_step(values, grads, state_, lr_, beta1_, beta2_, eps_);
  }

  const std::vector<Tensor<Scalar>>& params() const { return params_; }
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  std::vector<Tensor<Scalar>> params_;
  AdamState<Scalar> state_;
  double lr_ = 3e-4, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
};

/// Rescales accumulated gradients so their global norm is at most max_norm.
/// Returns the norm before clipping.
template <typename Scalar>
double clip_grad_norm(const std::vector<Tensor<Scalar>>& params, double max_norm) {
  double total = 0;
  for (const auto& p : params) {
    if (p.has_grad()) total += static_cast<double>(p.node()->grad.squaredNorm());
  }
  total = std::sqrt(total);
  if (total > max_norm && total > 0) {
    const Scalar scale = static_cast<Scalar>(max_norm / (total + 1e-6));
    for (const auto& p : params) {
      if (p.has_grad()) p.node()->grad *= scale;
    }
  }
  return total;
}

}  // namespace so3rl::grad

#include <doctest.h>

#include <sstream>

#include "so3rl/grad/checkpoint.hpp"
#include "so3rl/grad/nn.hpp"
#include "gradcheck.hpp"

using namespace so3rl;
using namespace so3rl::grad;
using namespace testsupport;

namespace {

using T = Tensor<double>;
using M = Mat<double>;

void check_op(const char* name, const GradOp& op, const std::vector<std::pair<Eigen::Index, Eigen::Index>>& shapes,
              double lo = -1, double hi = 1) {
  INFO(name);
  CHECK(worst_error({name, op, shapes, lo, hi}) < 1e-4);
}

}  // namespace

TEST_CASE("closed-form derivatives") {
  M x(1, 2);
  x << 1, 2;
  T t = T::parameter(x);
  sum(square(t)).backward();
  CHECK(t.grad()(0, 0) == 2);
  CHECK(t.grad()(0, 1) == 4);

  T z = T::parameter(M::Zero(1, 1));
  sum(tanh(z)).backward();
  CHECK(z.grad()(0, 0) == 1);
}

TEST_CASE("finite-difference checks for every primitive") {
  for (const auto& c : primitive_cases()) {
    INFO(c.name);
    CHECK(worst_error(c) < 1e-4);
  }
}

TEST_CASE("svd projection layer gradient") {
  std::mt19937_64 rng(5);
  const auto before = svd_degenerate_backward_count();
  CHECK(svd_layer_worst_error() < 1e-4);
  CHECK(svd_degenerate_backward_count() == before);

  // Batched rows and agreement with the plain projection.
  const M batch = random_matrix(rng, 8, 9, -2, 2);
  const T out = svd_project_rows(T::constant(batch));
  for (Eigen::Index i = 0; i < 8; ++i) {
    const Matrix3<double> m = Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(M(batch.row(i)).data());
    const auto r = svd_project(m).value.row_major();
    for (int k = 0; k < 9; ++k) CHECK(out.value()(i, k) == doctest::Approx(r[k]).epsilon(1e-12));
  }

  // Degenerate input: zero gradient and a counted fallback.
  T zero = T::parameter(M::Zero(1, 9));
  sum(svd_project_rows(zero)).backward();
  CHECK(zero.grad().norm() == 0);
  CHECK(svd_degenerate_backward_count() == before + 1);
}

TEST_CASE("quaternion normalization layer") {
  T x = T::parameter(M::Zero(1, 4));
  const T y = normalize_rows(x);
  CHECK(y.value()(0, 0) == 1);
  sum(y).backward();
  CHECK(x.grad().norm() == 0);
  M two(1, 4);
  two << 2, 0, 0, 0;
  CHECK(normalize_rows(T::constant(two)).value() == M(Eigen::RowVector4d(1, 0, 0, 0)));
}

TEST_CASE("gaussian density and entropy") {
  const T ls3 = T::constant(M::Zero(1, 3));
  CHECK(gaussian_entropy(ls3).item() == doctest::Approx(1.5 * std::log(2 * pi * std::exp(1.0))).epsilon(1e-12));
  CHECK(gaussian_entropy(ls3).item() == doctest::Approx(4.2568).epsilon(1e-4));
  const T zero1 = T::constant(M::Zero(1, 1));
  CHECK(gaussian_log_prob(zero1, zero1, zero1).item() == doctest::Approx(-0.5 * std::log(2 * pi)).epsilon(1e-12));

  std::mt19937_64 rng(6);
  for (int i = 0; i < 100; ++i) {
    const M mu = random_matrix(rng, 1, 3, -2, 2);
    const M ls = random_matrix(rng, 1, 3, -1, 1);
    const M a = random_matrix(rng, 1, 3, -2, 2);
    double expected = 0;
    for (int k = 0; k < 3; ++k) {
      const double s = std::exp(ls(k));
      expected += -0.5 * std::pow((a(k) - mu(k)) / s, 2) - std::log(s) - 0.5 * std::log(2 * pi);
    }
    CHECK(gaussian_log_prob(T::constant(mu), T::constant(ls), T::constant(a)).item() ==
          doctest::Approx(expected).epsilon(1e-12));
  }

  check_op("log_prob", [](const std::vector<T>& a) { return gaussian_log_prob(a[0], a[1], a[2]); },
           {{5, 3}, {1, 3}, {5, 3}});
  check_op("entropy", [](const std::vector<T>& a) { return gaussian_entropy(a[0]); }, {{5, 3}});
}

TEST_CASE("squashed gaussian") {
  std::mt19937_64 rng(7);
  SUBCASE("deterministic limit") {
    const M mu = random_matrix(rng, 4, 3, -2, 2);
    const auto s = squashed_gaussian_sample(T::constant(mu), clamp_log_std(T::constant(M::Constant(1, 3, -50.0))),
                                            standard_normal<double>(4, 3, rng));
    CHECK((s.action.value() - M(mu.array().tanh())).norm() < 1e-7);
  }
  SUBCASE("density integrates to one") {
    for (double mu : {-0.7, 0.0, 1.3}) {
      for (double ls : {-1.0, 0.0, 0.5}) {
        // Trapezoid rule in u = atanh(a): ∫ p(a) da = ∫ p(a(u)) (1 - tanh²u) du.
        const int n = 200000;
        const double lo = mu - 12 * std::exp(ls), hi = mu + 12 * std::exp(ls);
        double total = 0;
        for (int i = 0; i <= n; ++i) {
          const double u = lo + (hi - lo) * i / n;
          NoGradGuard guard;
          const auto s = squashed_gaussian_sample(T::constant(M::Constant(1, 1, mu)), T::constant(M::Constant(1, 1, ls)),
                                                  M(M::Constant(1, 1, (u - mu) / std::exp(ls))));
          const double dens = std::exp(s.log_prob.item()) * (1 - std::tanh(u) * std::tanh(u));
          total += (i == 0 || i == n ? 0.5 : 1.0) * dens;
        }
        total *= (hi - lo) / n;
        CHECK(std::abs(total - 1) < 1e-3);
      }
    }
  }
  SUBCASE("log-prob gradient") {
    const M noise = standard_normal<double>(5, 2, rng);
    check_op("squashed log_prob",
             [noise](const std::vector<T>& a) { return squashed_gaussian_sample(a[0], a[1], noise).log_prob; },
             {{5, 2}, {1, 2}});
    check_op("squashed action",
             [noise](const std::vector<T>& a) { return squashed_gaussian_sample(a[0], a[1], noise).action; },
             {{5, 2}, {1, 2}});
  }
  SUBCASE("clamping keeps samples finite") {
    const auto s = squashed_gaussian_sample(T::constant(M::Constant(2, 2, 1e3)),
                                            clamp_log_std(T::constant(M::Constant(1, 2, 1e4))),
                                            standard_normal<double>(2, 2, rng));
    CHECK(s.action.value().allFinite());
    CHECK(s.log_prob.value().allFinite());
  }
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    M p = M::Constant(2, 2, 0.3);
    AdamState<double> state;
    adam_step<double>({&p}, {M::Zero(2, 2)}, state, 0.1);
    CHECK(p == M::Constant(2, 2, 0.3));
  }
  SUBCASE("descends x^2") {
    T x = T::parameter(M::Constant(1, 1, 1.0));
    Adam<double> opt({x}, 0.1);
    sum(square(x)).backward();
    opt.step();
    CHECK(x.item() < 1.0);
  }
  SUBCASE("minimizes a random PSD quadratic") {
    std::mt19937_64 rng(8);
    const M a = random_matrix(rng, 4, 4);
    const M q = a.transpose() * a + M::Identity(4, 4);
    const M b = random_matrix(rng, 4, 1);
    const M xstar = q.ldlt().solve(b);
    T x = T::parameter(M::Zero(4, 1));
    Adam<double> opt({x}, 0.01);
    const T qt = T::constant(q), bt = T::constant(b);
    for (int i = 0; i < 5000; ++i) {
      opt.zero_grad();
      const T loss = sum(x * matmul(qt, x)) * 0.5 - sum(bt * x);
      loss.backward();
      opt.step();
    }
    CHECK((x.value() - xstar).norm() < 1e-4);
  }
}

TEST_CASE("mlp") {
  std::mt19937_64 rng(9);
  Mlp<double> net(6, {16, 16}, 3, Activation::Tanh, rng);
  CHECK(net.in_dim() == 6);
  CHECK(net.out_dim() == 3);
  const auto params = net.parameters();
  REQUIRE(params.size() == 6);
  // Orthogonal columns for tall and orthogonal rows for wide matrices.
  const M w1 = params[2].value();
  CHECK((w1.transpose() * w1 - M::Identity(16, 16)).norm() < 1e-12);
  CHECK(params[1].value().norm() == 0);

  const M x = random_matrix(rng, 5, 6);
  check_op("mlp forward", [&](const std::vector<T>& a) {
    Mlp<double> copy = net.clone();
    return copy.forward(a[0]);
  }, {{5, 6}});

  Mlp<double> other = net.clone();
  CHECK(other.forward(T::constant(x)).value() == net.forward(T::constant(x)).value());
  auto op = other.parameters();
  op[0].mutable_value().setZero();
  CHECK(net.parameters()[0].value().norm() > 0);
  other.polyak_from(net, 0.25);
  CHECK((op[0].value() - 0.25 * net.parameters()[0].value()).norm() < 1e-15);
  other.copy_from(net);
  CHECK(other.forward(T::constant(x)).value() == net.forward(T::constant(x)).value());

  std::mt19937_64 r1(3), r2(3);
  Mlp<float> a(4, {8}, 2, Activation::Relu, r1, 0.01), b(4, {8}, 2, Activation::Relu, r2, 0.01);
  CHECK(a.parameters()[2].value() == b.parameters()[2].value());
  CHECK(a.parameters()[2].value().norm() == doctest::Approx(0.01 * std::sqrt(2.0)).epsilon(1e-5));
}

TEST_CASE("no-grad guard and detach") {
  T x = T::parameter(M::Constant(2, 2, 1.0));
  {
    NoGradGuard guard;
    CHECK_FALSE((x * x).requires_grad());
  }
  CHECK((x * x).requires_grad());
  CHECK_FALSE(x.detach().requires_grad());
  CHECK_THROWS_AS(matmul(T::constant(M::Zero(2, 3)), T::constant(M::Zero(2, 3))), InvalidArgument);
  CHECK_THROWS_AS(T::constant(M::Zero(2, 3)) + T::constant(M::Zero(3, 2)), InvalidArgument);
  CHECK_THROWS_AS((x * x).backward(), InvalidArgument);
}

TEST_CASE("gradient clipping") {
  T x = T::parameter(M::Constant(1, 4, 1.0));
  sum(x * 3.0).backward();
  const double before = clip_grad_norm<double>({x}, 1.0);
  CHECK(before == doctest::Approx(6.0));
  CHECK(x.grad().norm() == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("checkpoint roundtrip") {
  std::mt19937_64 rng(10);
  Mlp<float> a(3, {5}, 2, Activation::Tanh, rng);
  Mlp<float> b(3, {5}, 2, Activation::Tanh, rng);
  const auto doc = params_to_json(a.named_parameters("pi"));
  auto named = b.named_parameters("pi");
  params_from_json(nlohmann::json::parse(doc.dump()), named);
  for (std::size_t i = 0; i < named.size(); ++i) CHECK(named[i].second.value() == a.parameters()[i].value());
  auto wrong = b.named_parameters("q");
  CHECK_THROWS_AS(params_from_json(doc, wrong), InvalidArgument);
}

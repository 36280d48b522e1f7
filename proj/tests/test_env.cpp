#include <doctest.h>

#include <sstream>

#include "so3rl/env.hpp"
#include "support.hpp"

using namespace so3rl;
using namespace testsupport;

namespace {

EnvConfig config_for(ReprSpec spec, std::uint64_t seed, RewardMode mode = RewardMode::Dense) {
  EnvConfig c;
  c.repr = spec;
  c.seed = seed;
  c.reward_mode = mode;
  return c;
}

/// Raw global-matrix action whose decode is exactly `r`.
std::vector<double> matrix_action(const Rotation<double>& r) {
  const auto a = r.row_major();
  return {a.begin(), a.end()};
}

std::span<const double> as_span(const Eigen::VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

}  // namespace

TEST_CASE("reset is deterministic and well-formed") {
  const auto spec = ReprSpec::make(Representation::Tangent, Frame::Delta, true);
  RotationEnv a(config_for(spec, 42)), b(config_for(spec, 42)), c(config_for(spec, 43));
  const auto oa = a.reset(), ob = b.reset(), oc = c.reset();
  CHECK(oa.obs == ob.obs);
  CHECK(oa.obs != oc.obs);
  REQUIRE(oa.obs.size() == 18);
  CHECK(is_rotation(Matrix3<double>(Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(oa.obs.data())), 1e-12));
  CHECK(is_rotation(Matrix3<double>(Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(oa.obs.data() + 9)), 1e-12));
  CHECK(oa.achieved_goal == oa.obs.head<9>());
  CHECK(oa.desired_goal == oa.obs.tail<9>());
}

TEST_CASE("reset distance follows the Haar mean angle") {
  RotationEnv env(config_for(ReprSpec{}, 7));
  double total = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    env.reset();
    total += geodesic_distance(env.current(), env.goal());
  }
  CHECK(std::abs(total / n - (pi / 2 + 2 / pi)) < 0.01);
}

TEST_CASE("geodesic-limited dynamics") {
  const auto tangent = ReprSpec::make(Representation::Tangent, Frame::Global);
  RotationEnv env(config_for(tangent, 1));
  env.reset_to(Rotation<double>::identity(), Rotation<double>::identity());
  const std::vector<double> half{0.5, 0, 0};  // decodes to exp([pi/2, 0, 0])
  env.step(half);
  CHECK((env.current().matrix() - exp_map(Vector3<double>(pi / 10, 0, 0)).matrix()).norm() < 1e-14);

  // Within reach: land exactly on the target.
  const auto start = exp_map(Vector3<double>(0.2, -0.1, 0.4));
  env.reset_to(start, Rotation<double>::identity());
  const auto target = start * exp_map(Vector3<double>(0, 0, pi / 20));
  const Vector3<double> target_tau = log_map(target);
  const std::vector<double> raw{target_tau.x() / pi, target_tau.y() / pi, target_tau.z() / pi};
  env.step(raw);
  CHECK((env.current().matrix() - target.matrix()).norm() < 1e-12);

  env.reset_to(Rotation<double>::identity(), Rotation<double>::identity());
  const std::vector<double> zero{0, 0, 0};
  CHECK(env.step(zero).reward == 0);
}

TEST_CASE("step_toward moves along the geodesic") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    const auto a = haar_random(rng), b = haar_random(rng);
    const double d = geodesic_distance(a, b);
    const auto next = step_toward(a, b, pi / 10);
    CHECK(geodesic_distance(a, next) <= pi / 10 + 1e-9);
    CHECK(geodesic_distance(next, b) == doctest::Approx(std::max(0.0, d - pi / 10)).epsilon(1e-9));
  }
}

TEST_CASE("oracle policy return") {
  const auto matrix = ReprSpec::make(Representation::Matrix, Frame::Global);
  RotationEnv env(config_for(matrix, 5));
  const double alpha = env.config().alpha_max;
  for (int ep = 0; ep < 1000; ++ep) {
    env.reset();
    const double d0 = geodesic_distance(env.current(), env.goal());
    const auto action = matrix_action(env.goal());
    double ret = 0, expected = 0;
    for (int k = 1; k <= 50; ++k) expected -= std::max(0.0, d0 - k * alpha);
    Rotation<double> prev = env.current();
    bool truncated = false;
    while (!truncated) {
      const auto r = env.step(action);
      CHECK(geodesic_distance(prev, env.current()) <= alpha + 1e-9);
      prev = env.current();
      ret += r.reward;
      truncated = r.truncated;
      CHECK_FALSE(r.terminated);
    }
    REQUIRE(std::abs(ret - expected) < 1e-9);
    CHECK(env.step_count() == 50);
  }
}

TEST_CASE("rewards") {
  const auto id = Rotation<double>::identity().row_major();
  const auto eighth = exp_map(Vector3<double>(0, pi / 8, 0)).row_major();
  const auto seven = exp_map(Vector3<double>(0.7, 0, 0)).row_major();
  CHECK(rotation_reward(id, id, RewardMode::Sparse, pi / 10) == 0);
  CHECK(rotation_reward(id, eighth, RewardMode::Sparse, pi / 10) == -1);
  CHECK(rotation_reward(id, seven, RewardMode::Dense, pi / 10) == doctest::Approx(-0.7).epsilon(1e-14));
  const std::array<double, 9> bad{2, 0, 0, 0, 1, 0, 0, 0, 1};
  CHECK_THROWS_AS(rotation_reward(id, bad, RewardMode::Dense, pi / 10), InvalidArgument);

  std::mt19937_64 rng(4);
  for (int i = 0; i < 10000; ++i) {
    const auto a = haar_random(rng).row_major();
    const auto b = (Rotation<double>::from_row_major(a) * exp_map(random_tangent(rng, 0, 0.6))).row_major();
    const double dense = rotation_reward(a, b, RewardMode::Dense, pi / 10);
    const double sparse = rotation_reward(a, b, RewardMode::Sparse, pi / 10);
    REQUIRE((sparse == 0) == (dense >= -pi / 10));
  }
}

TEST_CASE("episode state errors") {
  RotationEnv env(config_for(ReprSpec{}, 1));
  const std::vector<double> zero{0, 0, 0};
  CHECK_THROWS_AS(env.step(zero), StateError);
  env.reset();
  for (int i = 0; i < 49; ++i) CHECK_FALSE(env.step(zero).truncated);
  CHECK(env.step(zero).truncated);
  CHECK_THROWS_AS(env.step(zero), StateError);
  env.reset();
  CHECK_NOTHROW(env.step(zero));

  EnvConfig bad;
  bad.alpha_max = 0;
  CHECK_THROWS_AS(RotationEnv{bad}, InvalidArgument);
  bad.alpha_max = pi;
  CHECK_THROWS_AS(RotationEnv{bad}, InvalidArgument);
  EnvConfig bad_threshold;
  bad_threshold.success_threshold = 0;
  CHECK_THROWS_AS(RotationEnv{bad_threshold}, InvalidArgument);
}

TEST_CASE("batch_step equals scalar steps") {
  const auto spec = ReprSpec::make(Representation::Quaternion, Frame::Delta);
  for (int n : {1, 64}) {
    std::vector<RotationEnv> batch, single;
    for (int i = 0; i < n; ++i) {
      batch.emplace_back(config_for(spec, 100 + i));
      single.emplace_back(config_for(spec, 100 + i));
      batch.back().reset();
      single.back().reset();
    }
    std::mt19937_64 rng(9);
    std::normal_distribution<double> normal;
    for (int t = 0; t < 50; ++t) {
      Eigen::MatrixXd actions(n, 4);
      for (Eigen::Index k = 0; k < actions.size(); ++k) actions(k) = normal(rng);
      const auto out = batch_step(batch, actions);
      for (int i = 0; i < n; ++i) {
        const Eigen::VectorXd row = actions.row(i).transpose();
        const auto r = single[i].step(as_span(row));
        REQUIRE(out[i].observation.obs == r.observation.obs);
        REQUIRE(out[i].reward == r.reward);
        REQUIRE(out[i].truncated == (t == 49));
      }
    }
  }
  std::vector<RotationEnv> envs;
  envs.emplace_back(config_for(spec, 1));
  envs.back().reset();
  CHECK_THROWS_AS(batch_step(envs, Eigen::MatrixXd::Zero(2, 4)), InvalidArgument);
  CHECK_THROWS_AS(batch_step(envs, Eigen::MatrixXd::Zero(1, 3)), InvalidArgument);
}

TEST_CASE("determinism of trajectories") {
  const auto spec = ReprSpec::make(Representation::Euler, Frame::Delta);
  auto rollout = [&](std::uint64_t seed) {
    RotationEnv env(config_for(spec, seed, RewardMode::Sparse));
    env.reset();
    std::vector<double> rewards;
    for (int t = 0; t < 50; ++t) {
      const std::vector<double> a{std::sin(t), std::cos(t), 0.1 * t - 2};
      rewards.push_back(env.step(a).reward);
    }
    return std::make_pair(env.current().row_major(), rewards);
  };
  CHECK(rollout(3) == rollout(3));
}

TEST_CASE("goal helpers and trajectory csv") {
  EnvConfig cfg = config_for(ReprSpec{}, 2);
  cfg.init = InitMode::Identity;
  cfg.goal_angle = pi;
  RotationEnv env(cfg);
  const auto o = env.reset();
  CHECK(env.current().matrix() == Matrix3<double>::Identity());
  CHECK(geodesic_distance(env.current(), env.goal()) == doctest::Approx(pi).epsilon(1e-9));

  Eigen::VectorXd obs = o.obs;
  const auto id = Rotation<double>::identity().row_major();
  env.set_goal(obs, id);
  CHECK(obs.tail<9>() == Eigen::Map<const Eigen::VectorXd>(id.data(), 9));
  CHECK(obs.head<9>() == o.obs.head<9>());

  std::vector<TrajectoryRow> rows;
  rows.push_back({1, env.current(), env.goal(), Eigen::Vector3d(0.1, 0.2, 0.3), -0.5});
  std::ostringstream out;
  write_trajectory_csv(out, rows);
  const std::string text = out.str();
  CHECK(text.rfind("step,c00,c01,c02,c10,c11,c12,c20,c21,c22,g00,", 0) == 0);
  CHECK(text.find(",a0,a1,a2,reward\n") != std::string::npos);
  CHECK(std::count(text.begin(), text.end(), '\n') == 2);
}

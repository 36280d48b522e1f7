#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

#include "so3rl/rl/train.hpp"
#include "support.hpp"

using namespace so3rl;
using namespace so3rl::rl;
using namespace testsupport;

namespace {

RMat col(std::initializer_list<double> v) {
  RMat m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = static_cast<Real>(x);
  return m;
}

TrainConfig small_config(Algo algo, Representation r, Frame f, RewardMode mode, long steps) {
  TrainConfig c;
  c.algo = algo;
  c.env.repr = ReprSpec::make(r, f);
  c.env.reward_mode = mode;
  c.steps = steps;
  c.eval.interval = steps / 2;
  c.eval.episodes = 2;
  c.ppo.rollout_len = 128;
  c.ppo.minibatch = 32;
  c.ppo.epochs = 2;
  c.ppo.hidden = {16, 16};
  for (OffPolicyCommon* o : {static_cast<OffPolicyCommon*>(&c.sac), static_cast<OffPolicyCommon*>(&c.td3)}) {
    o->hidden = {16, 16};
    o->batch = 32;
    o->start_steps = 50;
    o->update_after = 50;
    o->buffer_size = 10000;
  }
  return c;
}

// Environment that records every executed action.
class Recorder final : public GoalEnv {
 public:
  Recorder(std::unique_ptr<GoalEnv> inner, std::vector<Eigen::VectorXd>* obs, std::vector<Eigen::VectorXd>* acts)
      : inner_(std::move(inner)), obs_(obs), acts_(acts) {}
  int obs_dim() const override { return inner_->obs_dim(); }
  int action_dim() const override { return inner_->action_dim(); }
  int goal_dim() const override { return inner_->goal_dim(); }
  int horizon() const override { return inner_->horizon(); }
  Observation reset() override { return last_ = inner_->reset(); }
  StepResult step(std::span<const double> a) override {
    obs_->push_back(last_.obs);
    acts_->push_back(Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size())));
    auto r = inner_->step(a);
    last_ = r.observation;
    return r;
  }
  double compute_reward(std::span<const double> a, std::span<const double> d) const override {
    return inner_->compute_reward(a, d);
  }

 private:
  std::unique_ptr<GoalEnv> inner_;
  Observation last_;
  std::vector<Eigen::VectorXd>* obs_;
  std::vector<Eigen::VectorXd>* acts_;
};

// Bandit whose reward turns non-finite.
class PoisonedBandit final : public GoalEnv {
 public:
  int obs_dim() const override { return 1; }
  int action_dim() const override { return 1; }
  int goal_dim() const override { return 0; }
  int horizon() const override { return 1; }
  Observation reset() override { return inner_.reset(); }
  StepResult step(std::span<const double> a) override {
    auto r = inner_.step(a);
    r.reward = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  double compute_reward(std::span<const double>, std::span<const double>) const override { return 0; }

 private:
  BanditEnv inner_;
};

EnvFactory bandit_factory() {
  return [](std::uint64_t) { return std::make_unique<BanditEnv>(); };
}

double bandit_action(const RunRecord& rec, const TrainConfig& c) {
  Rng rng(0);
  auto agent = make_agent(c, 1, 1, rng);
  agent->load_checkpoint(rec.checkpoint);
  return agent->act_deterministic(Eigen::VectorXd::Ones(1))(0);
}

}  // namespace

TEST_CASE("clipped surrogate") {
  const T ratio = T::parameter(col({1.5, 0.5, 1.1, 0.7}));
  const T adv = T::constant(col({2.0, -1.0, 3.0, 1.0}));
  const RMat s = ppo_surrogate(ratio, adv, Real(0.2)).value();
  CHECK(s(0, 0) == doctest::Approx(1.2 * 2.0));
  CHECK(s(1, 0) == doctest::Approx(0.8 * -1.0));
  CHECK(s(2, 0) == doctest::Approx(1.1 * 3.0));
  CHECK(s(3, 0) == doctest::Approx(0.7 * 1.0));

  const T zero_adv = T::constant(RMat::Zero(4, 1));
  const T obj = grad::mean(ppo_surrogate(ratio, zero_adv, Real(0.2)));
  obj.backward();
  CHECK(ratio.grad().cwiseAbs().maxCoeff() == 0);
}

TEST_CASE("gae against direct sums") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  const int n = 40;
  Eigen::VectorXd r(n), v(n), nv(n);
  std::vector<bool> term(n, false), end(n, false);
  for (int i = 0; i < n; ++i) {
    r(i) = u(rng);
    v(i) = u(rng);
  }
  for (int i : {9, 24}) end[i] = true;  // truncations
  term[31] = end[31] = true;
  for (int i = 0; i < n; ++i) nv(i) = (end[i] || i == n - 1) ? u(rng) : v(i + 1);
  const double gamma = 0.97, lambda = 0.9;
  const Gae g = compute_gae(r, v, nv, term, end, gamma, lambda);

  for (int t = 0; t < n; ++t) {
    double expected = 0, w = 1;
    for (int l = t; l < n; ++l) {
      const double delta = r(l) + (term[l] ? 0.0 : gamma * nv(l)) - v(l);
      expected += w * delta;
      if (end[l]) break;
      w *= gamma * lambda;
    }
    REQUIRE(g.advantages(t) == doctest::Approx(expected).epsilon(1e-12));
    REQUIRE(g.returns(t) == doctest::Approx(expected + v(t)).epsilon(1e-12));
  }
  // A truncated single step bootstraps from the next value.
  const Gae one = compute_gae(Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 2.0),
                              Eigen::VectorXd::Constant(1, 3.0), {false}, {true}, 0.5, 0.95);
  CHECK(one.advantages(0) == doctest::Approx(-1.0 + 0.5 * 3.0 - 2.0));
}

TEST_CASE("temperature moves toward the entropy target") {
  for (double logp : {4.0, -5.0}) {
    const T log_alpha = T::parameter(RMat::Zero(1, 1));
    const double target = -3.0;  // entropy below target when −logp < target
    grad::Adam<Real> opt({log_alpha}, 0.1);
    sac_alpha_loss(log_alpha, RMat::Constant(8, 1, static_cast<Real>(logp)), target).backward();
    opt.step();
    if (-logp < target) {
      CHECK(log_alpha.item() > 0);
    } else {
      CHECK(log_alpha.item() < 0);
    }
  }
}

TEST_CASE("constant critic gives no actor gradient") {
  SacConfig sc;
  sc.hidden = {16, 16};
  Rng rng(3);
  SacAgent agent(5, 3, sc, rng);
  for (auto& [name, p] : agent.named_parameters()) {
    if (name == "q1.w2" || name == "q2.w2") p.mutable_value().setZero();
  }
  const T obs = T::constant(grad::standard_normal<Real>(16, 5, rng));
  const auto h = agent.head(obs);
  const auto s = grad::squashed_gaussian_sample(h.mean, h.log_std, grad::standard_normal<Real>(16, 3, rng));
  const T q = grad::minimum(agent.q1(obs, s.action), agent.q2(obs, s.action));
  sac_actor_loss(Real(0), s.log_prob, q).backward();
  for (const auto& p : agent.actor_parameters()) REQUIRE(p.grad().cwiseAbs().maxCoeff() == 0);
}

TEST_CASE("twin critic targets use the minimum") {
  Rng rng(4);
  const RMat r = grad::standard_normal<Real>(64, 1, rng);
  const RMat q1 = grad::standard_normal<Real>(64, 1, rng);
  const RMat q2 = grad::standard_normal<Real>(64, 1, rng);
  RMat term = RMat::Zero(64, 1);
  term(3, 0) = 1;
  const Real gamma = 0.9f;
  const RMat y = clipped_double_q_target(r, term, q1, q2, RMat(), 0, gamma);
  for (int i = 0; i < 64; ++i) {
    const Real scale = term(i, 0) != 0 ? Real(0) : gamma;
    REQUIRE(y(i, 0) <= r(i, 0) + scale * q1(i, 0) + 1e-6f);
    REQUIRE(y(i, 0) <= r(i, 0) + scale * q2(i, 0) + 1e-6f);
    REQUIRE(y(i, 0) == doctest::Approx(r(i, 0) + scale * std::min(q1(i, 0), q2(i, 0))));
  }
  const RMat logp = RMat::Constant(64, 1, 2.0f);
  const RMat ys = clipped_double_q_target(r, term, q1, q2, logp, 0.5f, gamma);
  CHECK(ys(0, 0) == doctest::Approx(r(0, 0) + gamma * (std::min(q1(0, 0), q2(0, 0)) - 1.0f)));
}

TEST_CASE("td3 without exploration noise executes the actor output") {
  auto c = small_config(Algo::Td3, Representation::Quaternion, Frame::Global, RewardMode::Dense, 200);
  c.td3.expl_noise_std = 0;
  c.td3.start_steps = 0;
  c.td3.update_after = 1000;  // frozen actor
  std::vector<Eigen::VectorXd> obs, acts;
  const auto inner = rotation_env_factory(c.env);
  bool first = true;
  const EnvFactory factory = [&](std::uint64_t seed) -> std::unique_ptr<GoalEnv> {
    if (!std::exchange(first, false)) return inner(seed);
    return std::make_unique<Recorder>(inner(seed), &obs, &acts);
  };
  const auto rec = td3_train(c, factory, mean_transform_for(c.algo, Representation::Quaternion, true));
  REQUIRE(acts.size() == 200);
  Rng rng(0);
  auto agent = make_agent(c, 18, 4, rng);
  agent->load_checkpoint(rec.checkpoint);
  for (std::size_t i = 0; i < acts.size(); ++i) REQUIRE((acts[i] - agent->act_deterministic(obs[i])).norm() == 0);
  CHECK(std::isnan(rec.curve.back().policy_entropy));
}

TEST_CASE("hindsight relabeling") {
  EnvConfig ec;
  ec.reward_mode = RewardMode::Sparse;
  ec.seed = 8;
  RotationEnv env(ec);
  Rng rng(9);
  std::vector<Transition> episode;
  auto o = env.reset();
  for (int t = 0; t < ec.horizon; ++t) {
    const Vector3<double> tau = random_tangent(rng, 0, 1);
    const std::vector<double> a{tau.x(), tau.y(), tau.z()};
    const auto s = env.step(a);
    episode.push_back({o.obs, Eigen::Map<const Eigen::VectorXd>(a.data(), 3), s.reward, s.observation.obs,
                       s.terminated, s.observation.achieved_goal, s.observation.desired_goal});
    o = s.observation;
  }
  Rng her_rng(10);
  const auto out = her_relabel(episode, 4, env, her_rng);
  CHECK(out.size() == 5 * episode.size());
  int self_goals = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& tr = out[i];
    const double expected = env.compute_reward(std::span<const double>(tr.achieved_next.data(), 9),
                                               std::span<const double>(tr.desired.data(), 9));
    REQUIRE(tr.reward == expected);
    REQUIRE(tr.obs.tail(9) == tr.desired);
    REQUIRE(tr.next_obs.tail(9) == tr.desired);
    REQUIRE(tr.obs.head(9) == episode[i / 5].obs.head(9));
    if (tr.desired == tr.achieved_next) {
      ++self_goals;
      REQUIRE(tr.reward == 0.0);
    }
  }
  CHECK(self_goals > 0);
  // The last transition can only be relabeled with its own achieved goal.
  for (std::size_t j = out.size() - 4; j < out.size(); ++j) CHECK(out[j].desired == episode.back().achieved_next);
  CHECK(her_relabel(episode, 0, env, her_rng).size() == episode.size());
}

TEST_CASE("replay buffer is a bounded FIFO") {
  ReplayBuffer buf(2, 1, 3);
  for (int i = 0; i < 5; ++i) {
    Transition t;
    t.obs = Eigen::Vector2d(i, i);
    t.next_obs = Eigen::Vector2d(i + 1, i + 1);
    t.action = Eigen::VectorXd::Constant(1, i);
    t.reward = -i;
    buf.add(t);
  }
  CHECK(buf.size() == 3);
  CHECK(buf.total_added() == 5);
  for (int i = 0; i < 3; ++i) CHECK(buf.at(i).obs(0) == i + 2);
  CHECK_THROWS_AS(buf.at(3), InvalidArgument);
  Rng rng(1);
  const Batch b = buf.sample(200, rng);
  CHECK(b.obs.col(0).minCoeff() == 2);
  CHECK(b.obs.col(0).maxCoeff() == 4);
  for (int i = 0; i < 200; ++i) REQUIRE(b.reward(i, 0) == -b.obs(i, 0));
  CHECK_THROWS_AS(ReplayBuffer(2, 1, 3).sample(1, rng), StateError);
}

TEST_CASE("configuration rules") {
  TrainConfig c;
  c.algo = Algo::Ppo;
  c.env.reward_mode = RewardMode::Sparse;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c.algo = Algo::Sac;
  c.validate();
  CHECK(c.uses_her());
  c.project_mean = true;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c.project_mean.reset();
  c.env.repr = ReprSpec{Representation::Euler, Frame::Delta, true};
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c.env.repr = ReprSpec::make(Representation::Tangent, Frame::Delta, true);
  c.seed = 3;
  CHECK(c.run_name() == "sac_tangent-scaled_delta_sparse_s3");
  c.td3.policy_delay = 0;
  c.validate();  // td3 section is not checked for sac
  c.algo = Algo::Td3;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);

  TrainConfig p;
  p.algo = Algo::Ppo;
  p.env.repr = ReprSpec::make(Representation::Euler, Frame::Global);
  CHECK(p.resolved_steps() == 1'000'000);
  CHECK(p.ppo.resolved_log_std_init(Representation::Euler) == -2.0);
  CHECK(p.projection().project_mean);
  p.ppo.clip_eps = 1.0;
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
}

TEST_CASE("configuration documents round-trip") {
  auto c = small_config(Algo::Td3, Representation::Matrix, Frame::Delta, RewardMode::Sparse, 1000);
  c.tag = "x1";
  c.env.goal_angle = 1.0;
  const auto doc = config_to_json(c);
  const TrainConfig back = config_from_json(doc);
  CHECK(config_to_json(back) == doc);
  CHECK(back.run_name() == "td3_matrix-x1_delta_sparse_s0");

  TrainConfig d;
  CHECK_THROWS_AS(apply_config_value(d, "ppo.clip", 0.1), InvalidArgument);
  CHECK_THROWS_AS(apply_config_value(d, "seed", "one"), InvalidArgument);
  CHECK_THROWS_AS(apply_config_value(d, "schema_version", 2), InvalidArgument);
  apply_config_value(d, "sac.hidden", nlohmann::json::array({8, 8}));
  CHECK(d.sac.hidden == std::vector<int>{8, 8});
}

TEST_CASE("curve and summary formats") {
  std::vector<CurveRow> rows;
  for (int i = 1; i <= 12; ++i) rows.push_back({i * 100L, -i * 1.5, 0.25, i / 12.0, 0.1 * i, 1.0 / 3});
  rows[4].policy_entropy = std::numeric_limits<double>::quiet_NaN();
  std::stringstream ss;
  write_curve_csv(ss, rows);
  const auto back = read_curve_csv(ss);
  REQUIRE(back.size() == rows.size());
  CHECK(back[7].eval_return_mean == rows[7].eval_return_mean);
  CHECK(back[0].mean_action_norm == rows[0].mean_action_norm);
  CHECK(std::isnan(back[4].policy_entropy));
  const auto s = summarize(rows);
  double tail = 0;
  for (int i = 3; i <= 12; ++i) tail += -i * 1.5;
  CHECK(s.final_return == doctest::Approx(tail / 10));
  CHECK(summary_from_json(summary_to_json(s)).final_return == s.final_return);

  std::stringstream bad("env_steps,a,b,c,d,e\n10,0,0,0,0,0\n10,0,0,0,0,0\n");
  CHECK_THROWS_AS(read_curve_csv(bad), InvalidArgument);
}

TEST_CASE("runs are reproducible from the seed") {
  for (Algo algo : {Algo::Ppo, Algo::Sac, Algo::Td3}) {
    const auto r = algo == Algo::Ppo ? Representation::Matrix : Representation::Quaternion;
    const auto mode = algo == Algo::Ppo ? RewardMode::Dense : RewardMode::Sparse;
    auto c = small_config(algo, r, Frame::Global, mode, 300);
    c.seed = 11;
    c.save_buffer = true;
    const auto a = train(c);
    const auto b = train(c);
    CAPTURE(to_string(algo));
    REQUIRE(a.summary.status == RunStatus::Ok);
    CHECK(a.curve.size() == 2);
    std::stringstream sa, sb;
    write_curve_csv(sa, a.curve);
    write_curve_csv(sb, b.curve);
    CHECK(sa.str() == sb.str());
    CHECK(a.checkpoint == b.checkpoint);
    CHECK(a.buffer_goals.size() == (algo == Algo::Ppo ? 0u : 300u));
    c.seed = 12;
    CHECK(train(c).checkpoint != a.checkpoint);
  }
}

TEST_CASE("projected ppo samples run to completion") {
  auto c = small_config(Algo::Ppo, Representation::Quaternion, Frame::Global, RewardMode::Dense, 256);
  c.project_samples = true;
  const auto rec = train(c);
  CHECK(rec.summary.status == RunStatus::Ok);
  CHECK(rec.config.run_name() == "ppo_quat-projsamples_global_dense_s0");
}

TEST_CASE("non-finite losses abort the run") {
  auto c = small_config(Algo::Sac, Representation::Tangent, Frame::Delta, RewardMode::Dense, 200);
  const EnvFactory poisoned = [](std::uint64_t) { return std::make_unique<PoisonedBandit>(); };
  const auto rec = sac_train(c, poisoned);
  CHECK(rec.summary.status == RunStatus::NanAbort);
  CHECK(rec.summary.env_steps < 200);
  c.algo = Algo::Ppo;
  CHECK(ppo_train(c, poisoned, MeanTransform::Identity).summary.status == RunStatus::NanAbort);
}

TEST_CASE("bandit optimum") {
  SUBCASE("ppo") {
    TrainConfig c;
    c.algo = Algo::Ppo;
    c.steps = 20000;
    c.eval.interval = 5000;
    c.ppo.rollout_len = 256;
    c.ppo.lr = 3e-3;
    c.ppo.hidden = {16};
    const auto rec = ppo_train(c, bandit_factory(), MeanTransform::Tanh);
    CHECK(std::abs(bandit_action(rec, c) - 0.5) < 0.05);
  }
  SUBCASE("sac") {
    TrainConfig c;
    c.algo = Algo::Sac;
    c.steps = 4000;
    c.eval.interval = 1000;
    c.sac.hidden = {32, 32};
    c.sac.batch = 64;
    c.sac.start_steps = 200;
    c.sac.update_after = 200;
    c.sac.lr = 1e-3;
    const auto rec = sac_train(c, bandit_factory());
    CHECK(std::abs(bandit_action(rec, c) - 0.5) < 0.05);
  }
  SUBCASE("td3") {
    TrainConfig c;
    c.algo = Algo::Td3;
    c.steps = 4000;
    c.eval.interval = 1000;
    c.td3.hidden = {32, 32};
    c.td3.batch = 64;
    c.td3.start_steps = 200;
    c.td3.update_after = 200;
    c.td3.lr = 1e-3;
    const auto rec = td3_train(c, bandit_factory(), MeanTransform::Tanh);
    CHECK(std::abs(bandit_action(rec, c) - 0.5) < 0.05);
  }
}

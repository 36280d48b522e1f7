#include "so3rl/rl/replay.hpp"

#include <span>

namespace so3rl::rl {

namespace {

void store(std::vector<Real>& dst, long slot, const Eigen::VectorXd& v, int dim) {
  if (v.size() != dim) throw InvalidArgument("replay: dimension mismatch");
  const auto offset = static_cast<std::size_t>(slot) * dim;
  if (dst.size() < offset + dim) dst.resize(offset + dim);
  for (int j = 0; j < dim; ++j) dst[offset + j] = static_cast<Real>(v(j));
}

Eigen::VectorXd load(const std::vector<Real>& src, long slot, int dim) {
  Eigen::VectorXd v(dim);
  for (int j = 0; j < dim; ++j) v(j) = src[static_cast<std::size_t>(slot) * dim + j];
  return v;
}

}  // namespace

ReplayBuffer::ReplayBuffer(int obs_dim, int action_dim, long capacity)
    : obs_dim_(obs_dim), action_dim_(action_dim), capacity_(capacity) {
  if (obs_dim < 1 || action_dim < 1 || capacity < 1) throw InvalidArgument("replay: dimensions must be positive");
}

void ReplayBuffer::add(const Transition& t) {
  const long s = head_;
  store(obs_, s, t.obs, obs_dim_);
  store(next_obs_, s, t.next_obs, obs_dim_);
  store(action_, s, t.action, action_dim_);
  if (static_cast<long>(reward_.size()) <= s) {
    reward_.resize(s + 1);
    terminated_.resize(s + 1);
  }
  reward_[s] = static_cast<Real>(t.reward);
  terminated_[s] = t.terminated ? Real(1) : Real(0);
  head_ = (head_ + 1) % capacity_;
  if (size_ < capacity_) ++size_;
  ++added_;
}

long ReplayBuffer::slot(long i) const {
  if (i < 0 || i >= size_) throw InvalidArgument("replay: index out of range");
  const long oldest = size_ < capacity_ ? 0 : head_;
  return (oldest + i) % capacity_;
}

Transition ReplayBuffer::at(long i) const {
  const long s = slot(i);
  Transition t;
  t.obs = load(obs_, s, obs_dim_);
  t.next_obs = load(next_obs_, s, obs_dim_);
  t.action = load(action_, s, action_dim_);
  t.reward = reward_[s];
  t.terminated = terminated_[s] != 0;
  return t;
}

Batch ReplayBuffer::sample(int batch_size, Rng& rng) const {
  if (size_ == 0) throw StateError("replay: sampling from an empty buffer");
  std::uniform_int_distribution<long> pick(0, size_ - 1);
  Batch b;
  b.obs.resize(batch_size, obs_dim_);
  b.next_obs.resize(batch_size, obs_dim_);
  b.action.resize(batch_size, action_dim_);
  b.reward.resize(batch_size, 1);
  b.terminated.resize(batch_size, 1);
  for (int i = 0; i < batch_size; ++i) {
    const long s = pick(rng);
    const auto o = static_cast<std::size_t>(s) * obs_dim_;
    const auto a = static_cast<std::size_t>(s) * action_dim_;
    for (int j = 0; j < obs_dim_; ++j) {
      b.obs(i, j) = obs_[o + j];
      b.next_obs(i, j) = next_obs_[o + j];
    }
    for (int j = 0; j < action_dim_; ++j) b.action(i, j) = action_[a + j];
    b.reward(i, 0) = reward_[s];
    b.terminated(i, 0) = terminated_[s];
  }
  return b;
}

std::vector<Transition> her_relabel(const std::vector<Transition>& episode, int k, const GoalEnv& env, Rng& rng) {
  if (k < 0) throw InvalidArgument("her_relabel: k must be non-negative");
  std::vector<Transition> out;
  out.reserve(episode.size() * (k + 1));
  const long n = static_cast<long>(episode.size());
  for (long t = 0; t < n; ++t) {
    out.push_back(episode[t]);
    std::uniform_int_distribution<long> future(t, n - 1);
    for (int j = 0; j < k; ++j) {
      const Eigen::VectorXd& goal = episode[future(rng)].achieved_next;
      Transition r = episode[t];
      const std::span<const double> g(goal.data(), goal.size());
      env.set_goal(r.obs, g);
      env.set_goal(r.next_obs, g);
      r.desired = goal;
      r.reward = env.compute_reward(std::span<const double>(r.achieved_next.data(), r.achieved_next.size()), g);
      out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace so3rl::rl

#pragma once

// Uniform replay storage and hindsight goal relabeling.

#include <Eigen/Core>

#include <vector>

#include "so3rl/env.hpp"
#include "so3rl/grad/tensor.hpp"
#include "so3rl/random.hpp"

namespace so3rl::rl {

using Real = float;
using RMat = grad::Mat<Real>;

struct Transition {
  Eigen::VectorXd obs;
  Eigen::VectorXd action;
  double reward = 0;
  Eigen::VectorXd next_obs;
  bool terminated = false;
  Eigen::VectorXd achieved_next;  // achieved goal after the step
  Eigen::VectorXd desired;        // goal the reward was computed against
};

struct Batch {
  RMat obs;
  RMat action;
  RMat reward;      // B × 1
  RMat next_obs;
  RMat terminated;  // B × 1, 1 where bootstrapping stops
};

/// Fixed-capacity FIFO of transitions. Storage grows with use up to the
/// capacity and then overwrites the oldest entry.
class ReplayBuffer {
 public:
  ReplayBuffer(int obs_dim, int action_dim, long capacity);

  void add(const Transition& t);

  long size() const { return size_; }
  long capacity() const { return capacity_; }
  long total_added() const { return added_; }

  /// The i-th oldest stored transition (0 ≤ i < size), goals omitted.
  Transition at(long i) const;

  /// Uniform sample with replacement.
  Batch sample(int batch_size, Rng& rng) const;

 private:
  long slot(long i) const;

  int obs_dim_, action_dim_;
  long capacity_;
  long size_ = 0;
  long head_ = 0;  // next write position
  long added_ = 0;
  std::vector<Real> obs_, action_, reward_, next_obs_, terminated_;
};

/// "future" relabeling: every transition is emitted once as recorded and k
/// more times with its goal replaced by the achieved goal of a uniformly
/// chosen step at or after it in the same episode. The goal block of obs and
/// next_obs is rewritten and the reward recomputed with env.compute_reward.
std::vector<Transition> her_relabel(const std::vector<Transition>& episode, int k, const GoalEnv& env, Rng& rng);

}  // namespace so3rl::rl

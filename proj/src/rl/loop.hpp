#pragma once

// Bookkeeping shared by the three trainers.

#include <chrono>
#include <cmath>
#include <string>

#include "so3rl/rl/train.hpp"

namespace so3rl::rl::detail {

inline void check_finite(const T& loss, const char* what) {
  if (!std::isfinite(static_cast<double>(loss.item()))) {
    throw NumericalError(std::string("non-finite ") + what);
  }
}

inline Eigen::VectorXd uniform_action(int dim, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXd a(dim);
  for (int i = 0; i < dim; ++i) a(i) = u(rng);
  return a;
}

inline std::span<const double> as_span(const Eigen::VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

/// Evaluation schedule, curve and timing for one run.
class Run {
 public:
  Run(const TrainConfig& config, const EnvFactory& make_env, const TrainHooks& hooks)
      : config_(config),
        hooks_(hooks),
        eval_env_(make_env(derive_seed(config.seed, streams::kEvalEnv))),
        start_(std::chrono::steady_clock::now()) {
    record_.config = config;
  }

  /// Evaluates when env_steps is a multiple of the interval.
  void after_step(const Agent& agent, long env_steps) {
    if (env_steps % config_.eval.interval == 0) evaluate_now(agent, env_steps);
  }

  /// Runs work(env_steps) and closes the record with a final evaluation. A
  /// NumericalError ends the run as NanAbort.
  template <typename Fn>
  RunRecord finish(const Agent& agent, Fn&& work) {
    long done = 0;
    try {
      work(done);
      if (record_.curve.empty() || record_.curve.back().env_steps != done) evaluate_now(agent, done);
    } catch (const NumericalError& e) {
      status_ = RunStatus::NanAbort;
      message_ = e.what();
    }
    record_.summary = summarize(record_.curve);
    record_.summary.status = status_;
    record_.summary.message = message_;
    record_.summary.env_steps = done;
    record_.summary.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    record_.summary.build = SO3RL_BUILD_STAMP;
    record_.checkpoint = agent.checkpoint();
    return std::move(record_);
  }

  RunRecord& record() { return record_; }

 private:
  void evaluate_now(const Agent& agent, long env_steps) {
    record_.curve.push_back(evaluate(agent, *eval_env_, config_.eval.episodes, env_steps));
    if (hooks_.on_eval) hooks_.on_eval(record_.curve.back());
  }

  const TrainConfig& config_;
  const TrainHooks& hooks_;
  std::unique_ptr<GoalEnv> eval_env_;
  std::chrono::steady_clock::time_point start_;
  RunRecord record_;
  RunStatus status_ = RunStatus::Ok;
  std::string message_;
};

}  // namespace so3rl::rl::detail

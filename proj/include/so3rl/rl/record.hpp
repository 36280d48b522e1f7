#pragma once

// What a training run produces, and its on-disk formats.

#include <json.hpp>

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "so3rl/rl/config.hpp"

namespace so3rl::rl {

struct CurveRow {
  long env_steps = 0;
  double eval_return_mean = 0;
  double eval_return_std = 0;
  double success_rate = 0;
  double policy_entropy = 0;  // NaN when undefined
  double mean_action_norm = 0;
};

enum class RunStatus { Ok, NanAbort };
std::string_view to_string(RunStatus s);
RunStatus parse_run_status(std::string_view s);

struct RunSummary {
  static constexpr int kTailEvals = 10;

  double final_return = 0;  // mean eval_return_mean over the last kTailEvals rows
  double final_success = 0;
  long env_steps = 0;
  int evals = 0;
  RunStatus status = RunStatus::Ok;
  std::string message;
  double wall_seconds = 0;
  std::string build;
};

/// Tail means of the curve. An empty curve gives NaN returns.
RunSummary summarize(const std::vector<CurveRow>& curve);

struct BufferGoal {
  long env_step = 0;
  std::array<double, 9> achieved{};
};

struct RunRecord {
  TrainConfig config;
  std::vector<CurveRow> curve;
  RunSummary summary;
  nlohmann::json checkpoint;
  std::vector<BufferGoal> buffer_goals;  // filled when config.save_buffer
};

void write_curve_csv(std::ostream& out, const std::vector<CurveRow>& rows);
std::vector<CurveRow> read_curve_csv(std::istream& in);

nlohmann::json summary_to_json(const RunSummary& s);
RunSummary summary_from_json(const nlohmann::json& j);

void write_buffer_goals_csv(std::ostream& out, const std::vector<BufferGoal>& goals);
std::vector<BufferGoal> read_buffer_goals_csv(std::istream& in);

/// Flat configuration document: dotted keys, resolved defaults.
nlohmann::json config_to_json(const TrainConfig& c);

/// Applies one key to `c`. Throws InvalidArgument for unknown keys and
/// wrongly typed values.
void apply_config_value(TrainConfig& c, const std::string& key, const nlohmann::json& value);

/// Applies every key of a flat document and validates the result.
TrainConfig config_from_json(const nlohmann::json& doc);

}  // namespace so3rl::rl

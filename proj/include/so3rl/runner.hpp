#pragma once

// Experiment plumbing behind the command line: configuration files, run
// directories, sweeps and the summary table.

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "so3rl/errors.hpp"
#include "so3rl/rl/agents.hpp"
#include "so3rl/rl/record.hpp"

namespace so3rl::runner {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNanAbort = 3;
inline constexpr int kExitMissing = 4;

/// Default output root when no flag is given.
inline constexpr const char* kOutEnv = "SO3RL_OUT";

/// Invalid user configuration. The message names the source location.
class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// A required file or directory is absent or unreadable.
class MissingArtifact : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// `flag` if non-empty, else $SO3RL_OUT, else "runs".
fs::path output_root(const std::string& flag);

struct Override {
  std::string key;
  nlohmann::json value;
  std::string origin;  // shown in error messages, e.g. "--seed"
};

/// `key=value`; the value is parsed as JSON when possible, else kept as a
/// string.
Override parse_assignment(const std::string& text, const std::string& origin);

/// Applies a flat JSON document, then the overrides in order, and validates.
/// Errors become ConfigError "<source>:<line>: <key>: <what>" when the key
/// appears in the text, "<origin>: ..." when it came from an override.
rl::TrainConfig load_config(const std::string& text, const std::string& source,
                            const std::vector<Override>& overrides = {});

/// Reads a file and calls load_config. A missing file is a ConfigError.
rl::TrainConfig load_config_file(const fs::path& path, const std::vector<Override>& overrides = {});

namespace files {
inline constexpr const char* kConfig = "config.json";
inline constexpr const char* kCurve = "curve.csv";
inline constexpr const char* kSummary = "summary.json";
inline constexpr const char* kCheckpoint = "checkpoint.json";
inline constexpr const char* kBufferGoals = "buffer_goals.csv";
}  // namespace files

/// Writes all artifacts into a temporary sibling and renames it to `dir`.
/// Throws StateError if `dir` already exists.
void write_run_dir(const fs::path& dir, const rl::RunRecord& record);

struct LoadedRun {
  fs::path dir;
  rl::TrainConfig config;
  std::vector<rl::CurveRow> curve;
  rl::RunSummary summary;
};

/// Throws MissingArtifact if a required file is absent.
LoadedRun load_run(const fs::path& dir);
nlohmann::json load_checkpoint(const fs::path& dir);
std::vector<rl::BufferGoal> load_buffer_goals(const fs::path& dir);

/// Agent of the run's configuration with the stored weights.
std::unique_ptr<rl::Agent> restore_agent(const LoadedRun& run, const nlohmann::json& checkpoint);

struct RunOutcome {
  fs::path dir;
  rl::RunSummary summary;
};

/// Trains `config` and writes `root / config.run_name()`.
RunOutcome execute_run(const rl::TrainConfig& config, const fs::path& root, std::ostream* progress = nullptr);

struct SweepSpec {
  std::vector<rl::Algo> algos{rl::Algo::Ppo, rl::Algo::Sac, rl::Algo::Td3};
  std::vector<ReprSpec> reprs;  // empty means the eight table rows
  std::vector<RewardMode> rewards{RewardMode::Dense, RewardMode::Sparse};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  int workers = 1;
  rl::TrainConfig base;  // algo, repr, reward and seed are replaced per cell
  bool project_samples = false;

  /// Cross product in a stable order, without PPO × sparse.
  std::vector<rl::TrainConfig> configs() const;
};

struct SweepReport {
  int completed = 0;  // trained in this invocation
  int skipped = 0;    // directory already present
  std::vector<std::pair<std::string, std::string>> failures;  // run name, message
};

/// Runs missing cells on a pool of `spec.workers` threads, then writes
/// table.md, table.csv and sweep.json into `root`.
SweepReport run_sweep(const SweepSpec& spec, const fs::path& root, std::ostream* progress = nullptr);

/// Parameterizations of the result table, in row order.
std::vector<ReprSpec> table_reprs();

struct CellStats {
  std::vector<double> returns;  // completed runs
  std::vector<std::string> runs;
  int aborted = 0;

  int n() const { return static_cast<int>(returns.size()); }
  double mean() const;
  /// Sample standard deviation; 0 for a single run, NaN for none.
  double stddev() const;
};

struct RowKey {
  std::string repr;     // short name, e.g. "stangent"
  std::string variant;  // "", "projsamples" or a tag
  friend auto operator<=>(const RowKey&, const RowKey&) = default;
};

struct ColumnKey {
  rl::Algo algo = rl::Algo::Sac;
  RewardMode reward = RewardMode::Dense;
  friend auto operator<=>(const ColumnKey&, const ColumnKey&) = default;
};

struct ResultTable {
  std::map<RowKey, std::map<ColumnKey, CellStats>> cells;

  const CellStats* find(const RowKey& row, const ColumnKey& col) const;
};

/// Fold over every run directory directly under `root`.
ResultTable fold_runs(const fs::path& root);

std::string row_label(const RowKey& row);
std::string column_label(const ColumnKey& col);
std::vector<ColumnKey> table_columns();

/// Cells with fewer than `expected_runs` completed runs, or with aborted
/// runs, are flagged.
void write_table_markdown(std::ostream& out, const ResultTable& table, int expected_runs);
void write_table_csv(std::ostream& out, const ResultTable& table);

/// Writes table.md and table.csv into `root`.
void write_tables(const fs::path& root, const ResultTable& table, int expected_runs);

}  // namespace so3rl::runner

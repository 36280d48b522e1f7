#include "so3rl/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "so3rl/rl/train.hpp"

namespace so3rl::runner {

using nlohmann::json;

namespace {

int line_of_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(offset), '\n'));
}

/// Line of the first `"key":` member in the text, or 0.
int line_of_key(const std::string& text, const std::string& key) {
  const std::string quoted = "\"" + key + "\"";
  for (std::size_t pos = text.find(quoted); pos != std::string::npos; pos = text.find(quoted, pos + 1)) {
    std::size_t k = pos + quoted.size();
    while (k < text.size() && std::isspace(static_cast<unsigned char>(text[k]))) ++k;
    if (k < text.size() && text[k] == ':') return line_of_offset(text, pos);
  }
  return 0;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact(path.string() + ": cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw MissingArtifact(path.string() + ": unreadable JSON (" + e.what() + ")");
  }
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path.string() + ": cannot create");
  body(out);
  out.close();
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

fs::path require_file(const fs::path& dir, const char* name) {
  const fs::path p = dir / name;
  if (!fs::is_regular_file(p)) throw MissingArtifact(p.string() + ": missing");
  return p;
}

std::string unique_suffix() {
  static std::atomic<unsigned> counter{0};
  const auto now = std::chrono::steady_clock::now().time_since_epoch().count();
  const auto tid = std::hash<std::thread::id>{}(std::this_thread::get_id());
  std::ostringstream ss;
  ss << std::hex << (static_cast<std::size_t>(now) ^ tid) << '-' << counter++;
  return ss.str();
}

RowKey row_key_of(const rl::TrainConfig& c) {
  RowKey k{c.env.repr.short_name(), c.project_samples ? "projsamples" : ""};
  if (!c.tag.empty()) k.variant = k.variant.empty() ? c.tag : k.variant + "-" + c.tag;
  return k;
}

int row_rank(const std::string& repr) {
  static const std::vector<std::string> order{"matrix", "dmatrix", "quat",   "dquat",  "tangent",
                                              "stangent", "dtangent", "euler", "deuler"};
  const auto it = std::find(order.begin(), order.end(), repr);
  return static_cast<int>(it - order.begin());
}

std::vector<RowKey> ordered_rows(const ResultTable& table) {
  std::vector<RowKey> rows;
  for (const auto& r : table_reprs()) rows.push_back({r.short_name(), ""});
  for (const auto& [key, cols] : table.cells) {
    if (std::find(rows.begin(), rows.end(), key) == rows.end()) rows.push_back(key);
  }
  std::stable_sort(rows.begin(), rows.end(), [](const RowKey& a, const RowKey& b) {
    return std::make_tuple(!a.variant.empty(), row_rank(a.repr), a.variant) <
           std::make_tuple(!b.variant.empty(), row_rank(b.repr), b.variant);
  });
  return rows;
}

std::string format_cell(const CellStats* cell, int expected_runs) {
  if (!cell || (cell->n() == 0 && cell->aborted == 0)) return "—";
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(1);
  if (cell->n() == 0) {
    ss << "—";
  } else {
    ss << cell->mean() << " ± " << cell->stddev();
  }
  std::vector<std::string> flags;
  if (cell->n() < expected_runs) flags.push_back("n=" + std::to_string(cell->n()) + "/" + std::to_string(expected_runs));
  if (cell->aborted > 0) flags.push_back(std::to_string(cell->aborted) + " aborted");
  if (!flags.empty()) {
    ss << " (";
    for (std::size_t i = 0; i < flags.size(); ++i) ss << (i ? ", " : "") << flags[i];
    ss << ")";
  }
  return ss.str();
}

}  // namespace

fs::path output_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kOutEnv); env && *env) return env;
  return "runs";
}

Override parse_assignment(const std::string& text, const std::string& origin) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError(origin + ": expected key=value, got '" + text + "'");
  Override o{text.substr(0, eq), json(), origin};
  const std::string raw = text.substr(eq + 1);
  o.value = json::parse(raw, nullptr, false);
  if (o.value.is_discarded()) o.value = raw;
  return o;
}

rl::TrainConfig load_config(const std::string& text, const std::string& source, const std::vector<Override>& overrides) {
  json doc = json::object();
  if (!text.empty()) {
    try {
      doc = json::parse(text);
    } catch (const json::parse_error& e) {
      const std::size_t at = e.byte > 0 ? e.byte - 1 : 0;
      throw ConfigError(source + ":" + std::to_string(line_of_offset(text, at)) + ": invalid JSON (" + e.what() + ")");
    }
    if (!doc.is_object()) throw ConfigError(source + ":1: configuration must be a flat JSON object");
  }
  std::map<std::string, std::string> origin;
  for (const auto& o : overrides) {
    doc[o.key] = o.value;
    origin[o.key] = o.origin;
  }
  try {
    return rl::config_from_json(doc);
  } catch (const InvalidArgument& e) {
    const std::string msg = e.what();
    const std::string key = msg.substr(0, msg.find(':'));
    if (const auto it = origin.find(key); it != origin.end()) {
      const bool keyed = msg.rfind(key + ": ", 0) == 0;
      throw ConfigError(it->second + ": " + (keyed ? msg.substr(key.size() + 2) : msg));
    }
    if (const int line = line_of_key(text, key); line > 0) {
      throw ConfigError(source + ":" + std::to_string(line) + ": " + msg);
    }
    throw ConfigError(source + ": " + msg);
  }
}

rl::TrainConfig load_config_file(const fs::path& path, const std::vector<Override>& overrides) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const MissingArtifact& e) {
    throw ConfigError(e.what());
  }
  return load_config(text, path.string(), overrides);
}

void write_run_dir(const fs::path& dir, const rl::RunRecord& record) {
  if (fs::exists(dir)) throw StateError(dir.string() + ": run directory already exists");
  const fs::path parent = dir.has_parent_path() ? dir.parent_path() : fs::path(".");
  fs::create_directories(parent);
  const fs::path tmp = parent / (".tmp-" + dir.filename().string() + "-" + unique_suffix());
  fs::create_directory(tmp);
  try {
    write_file(tmp / files::kConfig, [&](std::ostream& o) { o << rl::config_to_json(record.config).dump(2) << '\n'; });
    write_file(tmp / files::kCurve, [&](std::ostream& o) { rl::write_curve_csv(o, record.curve); });
    write_file(tmp / files::kSummary, [&](std::ostream& o) { o << rl::summary_to_json(record.summary).dump(2) << '\n'; });
    write_file(tmp / files::kCheckpoint, [&](std::ostream& o) { o << record.checkpoint.dump() << '\n'; });
    if (record.config.save_buffer) {
      write_file(tmp / files::kBufferGoals, [&](std::ostream& o) { rl::write_buffer_goals_csv(o, record.buffer_goals); });
    }
    std::error_code ec;
    fs::rename(tmp, dir, ec);
    if (ec) throw StateError(dir.string() + ": cannot publish run directory (" + ec.message() + ")");
  } catch (...) {
    std::error_code ignore;
    fs::remove_all(tmp, ignore);
    throw;
  }
}

LoadedRun load_run(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw MissingArtifact(dir.string() + ": no such run directory");
  LoadedRun run;
  run.dir = dir.lexically_normal();
  if (!run.dir.has_filename()) run.dir = run.dir.parent_path();
  const fs::path config_path = require_file(dir, files::kConfig);
  try {
    run.config = rl::config_from_json(read_json(config_path));
  } catch (const InvalidArgument& e) {
    throw MissingArtifact(config_path.string() + ": " + e.what());
  }
  std::ifstream curve(require_file(dir, files::kCurve));
  run.curve = rl::read_curve_csv(curve);
  run.summary = rl::summary_from_json(read_json(require_file(dir, files::kSummary)));
  return run;
}

json load_checkpoint(const fs::path& dir) { return read_json(require_file(dir, files::kCheckpoint)); }

std::vector<rl::BufferGoal> load_buffer_goals(const fs::path& dir) {
  std::ifstream in(require_file(dir, files::kBufferGoals));
  return rl::read_buffer_goals_csv(in);
}

std::unique_ptr<rl::Agent> restore_agent(const LoadedRun& run, const json& checkpoint) {
  RotationEnv env(run.config.env);
  Rng rng(0);
  auto agent = rl::make_agent(run.config, env.obs_dim(), env.action_dim(), rng);
  agent->load_checkpoint(checkpoint);
  return agent;
}

RunOutcome execute_run(const rl::TrainConfig& config, const fs::path& root, std::ostream* progress) {
  const fs::path dir = root / config.run_name();
  if (fs::exists(dir)) throw StateError(dir.string() + ": run directory already exists");
  rl::TrainHooks hooks;
  if (progress) {
    hooks.on_eval = [progress](const rl::CurveRow& row) {
      *progress << "steps " << row.env_steps << "  return " << std::fixed << std::setprecision(2)
                << row.eval_return_mean << "  success " << row.success_rate << std::defaultfloat << std::endl;
    };
  }
  const rl::RunRecord record = rl::train(config, hooks);
  write_run_dir(dir, record);
  return {dir, record.summary};
}

std::vector<ReprSpec> table_reprs() {
  return {ReprSpec::make(Representation::Matrix, Frame::Global),
          ReprSpec::make(Representation::Matrix, Frame::Delta),
          ReprSpec::make(Representation::Quaternion, Frame::Global),
          ReprSpec::make(Representation::Quaternion, Frame::Delta),
          ReprSpec::make(Representation::Tangent, Frame::Global),
          ReprSpec::make(Representation::Tangent, Frame::Delta, true),
          ReprSpec::make(Representation::Euler, Frame::Global),
          ReprSpec::make(Representation::Euler, Frame::Delta)};
}

std::vector<rl::TrainConfig> SweepSpec::configs() const {
  const auto rs = reprs.empty() ? table_reprs() : reprs;
  std::vector<rl::TrainConfig> out;
  for (auto algo : algos) {
    for (auto reward : rewards) {
      if (algo == rl::Algo::Ppo && reward == RewardMode::Sparse) continue;
      for (const auto& r : rs) {
        for (auto seed : seeds) {
          rl::TrainConfig c = base;
          c.algo = algo;
          c.env.reward_mode = reward;
          c.env.repr = r;
          c.seed = seed;
          c.project_samples = project_samples && algo == rl::Algo::Ppo;
          try {
            c.validate();
          } catch (const InvalidArgument& e) {
            throw ConfigError(c.run_name() + ": " + e.what());
          }
          out.push_back(std::move(c));
        }
      }
    }
  }
  return out;
}

SweepReport run_sweep(const SweepSpec& spec, const fs::path& root, std::ostream* progress) {
  if (spec.workers < 1) throw ConfigError("workers: must be at least 1");
  const auto configs = spec.configs();
  fs::create_directories(root);
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && entry.path().filename().string().rfind(".tmp-", 0) == 0) fs::remove_all(entry.path());
  }

  SweepReport report;
  std::vector<const rl::TrainConfig*> pending;
  for (const auto& c : configs) {
    if (fs::exists(root / c.run_name())) {
      ++report.skipped;
    } else {
      pending.push_back(&c);
    }
  }

  std::mutex mu;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < pending.size(); i = next++) {
      const auto& c = *pending[i];
      try {
        const auto outcome = execute_run(c, root);
        std::lock_guard lock(mu);
        ++report.completed;
        if (progress) {
          *progress << "[" << report.completed + report.failures.size() << "/" << pending.size() << "] "
                    << c.run_name() << "  final " << outcome.summary.final_return << "  "
                    << rl::to_string(outcome.summary.status) << std::endl;
        }
      } catch (const std::exception& e) {
        std::lock_guard lock(mu);
        report.failures.emplace_back(c.run_name(), e.what());
        if (progress) *progress << "failed " << c.run_name() << ": " << e.what() << std::endl;
      }
    }
  };
  std::vector<std::jthread> pool;
  const int n_workers = std::min<int>(spec.workers, std::max<int>(1, static_cast<int>(pending.size())));
  for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  pool.clear();

  const int expected = static_cast<int>(spec.seeds.size());
  write_tables(root, fold_runs(root), expected);
  json failures = json::array();
  for (const auto& [name, msg] : report.failures) failures.push_back({{"run", name}, {"message", msg}});
  write_file(root / "sweep.json", [&](std::ostream& o) {
    o << json{{"runs", configs.size()}, {"completed", report.completed}, {"skipped", report.skipped},
              {"expected_runs_per_cell", expected}, {"failures", failures}}
             .dump(2)
      << '\n';
  });
  return report;
}

double CellStats::mean() const {
  if (returns.empty()) return std::nan("");
  double s = 0;
  for (double r : returns) s += r;
  return s / static_cast<double>(returns.size());
}

double CellStats::stddev() const {
  if (returns.empty()) return std::nan("");
  if (returns.size() == 1) return 0;
  const double m = mean();
  double ss = 0;
  for (double r : returns) ss += (r - m) * (r - m);
  return std::sqrt(ss / static_cast<double>(returns.size() - 1));
}

const CellStats* ResultTable::find(const RowKey& row, const ColumnKey& col) const {
  const auto r = cells.find(row);
  if (r == cells.end()) return nullptr;
  const auto c = r->second.find(col);
  return c == r->second.end() ? nullptr : &c->second;
}

ResultTable fold_runs(const fs::path& root) {
  if (!fs::is_directory(root)) throw MissingArtifact(root.string() + ": no such directory");
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    const std::string name = entry.path().filename().string();
    if (!entry.is_directory() || name.empty() || name[0] == '.') continue;
    if (!fs::is_regular_file(entry.path() / files::kSummary) || !fs::is_regular_file(entry.path() / files::kConfig)) {
      continue;
    }
    dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());

  ResultTable table;
  for (const auto& dir : dirs) {
    rl::TrainConfig config;
    try {
      config = rl::config_from_json(read_json(dir / files::kConfig));
    } catch (const InvalidArgument& e) {
      throw MissingArtifact((dir / files::kConfig).string() + ": " + e.what());
    }
    const auto summary = rl::summary_from_json(read_json(dir / files::kSummary));
    auto& cell = table.cells[row_key_of(config)][ColumnKey{config.algo, config.env.reward_mode}];
    if (summary.status != rl::RunStatus::Ok || !std::isfinite(summary.final_return)) {
      ++cell.aborted;
      continue;
    }
    cell.returns.push_back(summary.final_return);
    cell.runs.push_back(dir.filename().string());
  }
  return table;
}

std::string row_label(const RowKey& row) {
  static const std::map<std::string, std::string> labels{
      {"matrix", "R"},           {"dmatrix", "ΔR"},     {"quat", "q"},
      {"dquat", "Δq"},           {"tangent", "ᵉτ"},     {"stangent", "ˢτ"},
      {"dtangent", "Δτ (unscaled)"}, {"euler", "(φ,θ,ψ)"}, {"deuler", "Δ(φ,θ,ψ)"}};
  const auto it = labels.find(row.repr);
  std::string label = it == labels.end() ? row.repr : it->second;
  if (!row.variant.empty()) label += " [" + row.variant + "]";
  return label;
}

std::string column_label(const ColumnKey& col) {
  std::string algo(rl::to_string(col.algo));
  std::transform(algo.begin(), algo.end(), algo.begin(), [](unsigned char c) { return std::toupper(c); });
  return algo + " " + std::string(so3rl::to_string(col.reward));
}

std::vector<ColumnKey> table_columns() {
  return {{rl::Algo::Ppo, RewardMode::Dense},
          {rl::Algo::Sac, RewardMode::Dense},
          {rl::Algo::Sac, RewardMode::Sparse},
          {rl::Algo::Td3, RewardMode::Dense},
          {rl::Algo::Td3, RewardMode::Sparse}};
}

void write_table_markdown(std::ostream& out, const ResultTable& table, int expected_runs) {
  const auto cols = table_columns();
  out << "| |";
  for (const auto& c : cols) out << ' ' << column_label(c) << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < cols.size(); ++i) out << "---|";
  out << '\n';
  for (const auto& row : ordered_rows(table)) {
    out << "| " << row_label(row) << " |";
    for (const auto& c : cols) out << ' ' << format_cell(table.find(row, c), expected_runs) << " |";
    out << '\n';
  }
  out << "\nMean ± sample standard deviation of the final evaluation return over seeds. "
         "Flags mark cells with missing or aborted runs.\n";
}

void write_table_csv(std::ostream& out, const ResultTable& table) {
  out << "repr,variant,algo,reward,n,aborted,mean,std\n" << std::setprecision(17);
  for (const auto& row : ordered_rows(table)) {
    const auto r = table.cells.find(row);
    if (r == table.cells.end()) continue;
    for (const auto& [col, cell] : r->second) {
      out << row.repr << ',' << row.variant << ',' << rl::to_string(col.algo) << ','
          << so3rl::to_string(col.reward) << ',' << cell.n() << ',' << cell.aborted << ',';
      if (cell.n() > 0) out << cell.mean() << ',' << cell.stddev();
      else out << ',';
      out << '\n';
    }
  }
}

void write_tables(const fs::path& root, const ResultTable& table, int expected_runs) {
  write_file(root / "table.md", [&](std::ostream& o) { write_table_markdown(o, table, expected_runs); });
  write_file(root / "table.csv", [&](std::ostream& o) { write_table_csv(o, table); });
}

}  // namespace so3rl::runner

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "so3rl/analysis.hpp"
#include "so3rl/runner.hpp"

namespace {

using namespace so3rl;
using namespace so3rl::runner;
using nlohmann::json;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class F>
auto as_config_error(const std::string& origin, F&& f) {
  try {
    return f();
  } catch (const InvalidArgument& e) {
    throw ConfigError(origin + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path.string() + ": cannot create");
  body(out);
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) { return fs::path(p.string() + suffix); }

struct ConfigFlags {
  std::string config_file;
  std::vector<std::string> sets;
  std::string steps;
  std::string out;

  void add_to(CLI::App& app) {
    app.add_option("--config", config_file, "flat JSON configuration file");
    app.add_option("--set", sets, "override a configuration key (key=value), repeatable");
    app.add_option("--steps", steps, "environment steps");
    app.add_option("--out", out, std::string("output root (default $") + kOutEnv + " or ./runs)");
  }

  std::vector<Override> overrides() const {
    std::vector<Override> o;
    if (!steps.empty()) o.push_back(parse_assignment("steps=" + steps, "--steps"));
    for (const auto& s : sets) o.push_back(parse_assignment(s, "--set " + s));
    return o;
  }

  rl::TrainConfig load(const std::vector<Override>& extra) const {
    auto o = overrides();
    o.insert(o.begin(), extra.begin(), extra.end());
    if (config_file.empty()) return load_config("", "<flags>", o);
    return load_config_file(config_file, o);
  }
};

struct RunFlags {
  ConfigFlags common;
  std::string algo, repr, frame, scaled, reward, seed, tag;
  bool save_buffer = false;
  bool quiet = false;
};

int cmd_run(const RunFlags& f) {
  std::vector<Override> flags;
  auto add = [&](const char* key, const std::string& v) {
    if (!v.empty()) flags.push_back(parse_assignment(std::string(key) + "=" + v, std::string("--") + key));
  };
  add("algo", f.algo);
  add("repr", f.repr);
  add("frame", f.frame);
  add("scaled", f.scaled);
  add("reward", f.reward);
  add("seed", f.seed);
  if (!f.tag.empty()) flags.push_back({"tag", f.tag, "--tag"});
  if (f.save_buffer) flags.push_back({"save_buffer", true, "--save-buffer"});
  // Flags are applied after --config but before --set.
  const rl::TrainConfig config = f.common.load(flags);
  const fs::path root = output_root(f.common.out);
  std::cerr << "run " << config.run_name() << " -> " << root.string() << std::endl;
  const auto outcome = execute_run(config, root, f.quiet ? nullptr : &std::cerr);
  std::cout << outcome.dir.string() << std::endl;
  if (outcome.summary.status == rl::RunStatus::NanAbort) {
    std::cerr << "aborted: " << outcome.summary.message << std::endl;
    return kExitNanAbort;
  }
  return kExitOk;
}

struct SweepFlags {
  ConfigFlags common;
  std::string algos = "ppo,sac,td3";
  std::string reprs;
  std::string rewards = "dense,sparse";
  int seeds = 5;
  long seed_base = 0;
  int workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  bool project_samples = false;
};

int cmd_sweep(const SweepFlags& f) {
  SweepSpec spec;
  spec.base = f.common.load({});
  spec.algos.clear();
  for (const auto& a : split_list(f.algos)) spec.algos.push_back(as_config_error("--algos", [&] { return rl::parse_algo(a); }));
  spec.rewards.clear();
  for (const auto& r : split_list(f.rewards)) {
    spec.rewards.push_back(as_config_error("--rewards", [&] { return parse_reward_mode(r); }));
  }
  for (const auto& r : split_list(f.reprs)) {
    spec.reprs.push_back(as_config_error("--reprs", [&] { return ReprSpec::from_short_name(r); }));
  }
  if (f.seeds < 1) throw ConfigError("--seeds: must be at least 1");
  if (f.seed_base < 0) throw ConfigError("--seed-base: must be non-negative");
  spec.seeds.clear();
  for (int s = 0; s < f.seeds; ++s) spec.seeds.push_back(static_cast<std::uint64_t>(f.seed_base + s));
  spec.workers = f.workers;
  spec.project_samples = f.project_samples;
  const fs::path root = output_root(f.common.out);
  const auto report = run_sweep(spec, root, &std::cerr);
  std::cerr << report.completed << " trained, " << report.skipped << " already present, " << report.failures.size()
            << " failed" << std::endl;
  std::ifstream table(root / "table.md");
  std::cout << table.rdbuf();
  return report.failures.empty() ? kExitOk : kExitFailure;
}

int cmd_table(const std::string& root_flag, int expected) {
  const fs::path root = output_root(root_flag);
  const auto table = fold_runs(root);
  write_tables(root, table, expected);
  write_table_markdown(std::cout, table, expected);
  return kExitOk;
}

struct CloudFlags {
  std::string repr = "euler";
  double sigma = 0;
  long n = 100000;
  bool squash = true;
  bool clip = false;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_cloud(const CloudFlags& f) {
  if (!(f.sigma > 0) || !std::isfinite(f.sigma)) throw ConfigError("--sigma: must be positive");
  if (f.n < 1) throw ConfigError("--n: must be at least 1");
  const auto r = as_config_error("--repr", [&] { return parse_representation(f.repr); });
  Rng rng(f.seed);
  const auto cloud = analysis::noise_projection_cloud(r, f.sigma, f.n, f.squash, f.clip, rng);
  std::ostringstream name;
  name << "cloud_" << to_string(r) << "_sigma" << f.sigma << ".csv";
  const fs::path out = f.out.empty() ? output_root("") / "analysis" / name.str() : fs::path(f.out);
  write_text(out, [&](std::ostream& o) { analysis::write_cloud_csv(o, cloud); });
  json meta = cloud.meta();
  meta["seed"] = f.seed;
  meta["mean_trace"] = analysis::mean_trace(cloud.points);
  const Eigen::Vector3d k = analysis::axis_kurtosis(cloud.points);
  meta["axis_kurtosis"] = {k.x(), k.y(), k.z()};
  meta["pitch_fraction_0.2"] = analysis::pitch_fraction(cloud.points, 0.2);
  write_text(with_suffix(out, ".json"), [&](std::ostream& o) { o << meta.dump(2) << '\n'; });
  std::cout << out.string() << '\n' << meta.dump(2) << std::endl;
  return kExitOk;
}

fs::path analysis_out(const std::string& flag, const fs::path& run, const std::string& suffix) {
  if (!flag.empty()) return flag;
  return output_root("") / "analysis" / (run.filename().string() + suffix);
}

int cmd_doublecover(const std::string& run_dir, int states, int points, std::uint64_t seed, const std::string& out_flag) {
  const auto run = load_run(run_dir);
  if (run.config.algo != rl::Algo::Sac) throw ConfigError("--run: the double-cover probe needs a sac run");
  if (run.config.env.repr != ReprSpec::make(Representation::Quaternion, Frame::Global)) {
    throw ConfigError("--run: the double-cover probe needs a global quaternion run");
  }
  const auto agent = restore_agent(run, load_checkpoint(run_dir));
  const auto& sac = dynamic_cast<const rl::SacAgent&>(*agent);
  const auto summary = analysis::double_cover_study(sac, run.config.env, states, points, seed);
  const json doc{{"run", run.dir.filename().string()},
                 {"states", summary.states},
                 {"antipode_at_least_quarter", summary.antipode_at_least_quarter},
                 {"n_points", points},
                 {"spacing", "arc_length"},
                 {"seed", seed},
                 {"detail", summary.detail}};
  const fs::path out = analysis_out(out_flag, run.dir, "_doublecover.json");
  write_text(out, [&](std::ostream& o) { o << doc.dump(2) << '\n'; });
  std::cout << out.string() << '\n'
            << "Q(-q) >= Q(quarter) in " << summary.antipode_at_least_quarter << " of " << summary.states
            << " states" << std::endl;
  return kExitOk;
}

double entropy_level(const rl::TrainConfig& c) {
  switch (c.algo) {
    case rl::Algo::Ppo: return c.ppo.entropy_coef;
    case rl::Algo::Sac: {
      const int d = c.env.repr.action_dim();
      return c.sac.resolved_target_entropy(d) / -static_cast<double>(d);
    }
    case rl::Algo::Td3: break;
  }
  throw ConfigError("--run: td3 has no entropy term");
}

int cmd_entropynorm(const std::vector<std::string>& run_dirs, int episodes, std::uint64_t seed,
                    const std::string& out_flag) {
  std::vector<LoadedRun> runs;
  std::vector<std::unique_ptr<rl::Agent>> agents;
  std::vector<std::pair<double, const rl::Agent*>> policies;
  for (const auto& d : run_dirs) {
    runs.push_back(load_run(d));
    agents.push_back(restore_agent(runs.back(), load_checkpoint(d)));
  }
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (runs[i].config.env.repr != runs[0].config.env.repr || runs[i].config.algo != runs[0].config.algo) {
      throw ConfigError("--run: all runs must share algorithm and representation");
    }
    policies.emplace_back(entropy_level(runs[i].config), agents[i].get());
  }
  const auto report = analysis::entropy_norm_probe(policies, runs[0].config.env, episodes, seed);
  const fs::path out = analysis_out(out_flag, runs[0].dir, "_entropynorm.csv");
  write_text(out, [&](std::ostream& o) { report.write_csv(o); });
  json meta = report.meta;
  meta["runs"] = run_dirs;
  meta["level"] = runs[0].config.algo == rl::Algo::Sac ? "target_entropy / -dim(A)" : "entropy_coef";
  write_text(with_suffix(out, ".json"), [&](std::ostream& o) { o << meta.dump(2) << '\n'; });
  std::cout << out.string() << std::endl;
  report.write_csv(std::cout);
  return kExitOk;
}

int cmd_pitchhist(const std::string& run_dir, int bins, double margin, const std::string& out_flag) {
  if (bins < 1) throw ConfigError("--bins: must be at least 1");
  const auto run = load_run(run_dir);
  const auto goals = load_buffer_goals(run_dir);
  const long total = run.config.resolved_steps();
  const auto report = analysis::buffer_pitch_histogram(goals, bins, total);
  const fs::path out = analysis_out(out_flag, run.dir, "_pitchhist.csv");
  write_text(out, [&](std::ostream& o) { report.write_csv(o); });
  json meta = report.meta;
  meta["run"] = run.dir.filename().string();
  meta["margin"] = margin;
  json fractions = json::array();
  for (int q = 0; q < 4; ++q) fractions.push_back(analysis::quarter_singularity_fraction(goals, q, margin, total));
  meta["singularity_fraction_by_quarter"] = fractions;
  write_text(with_suffix(out, ".json"), [&](std::ostream& o) { o << meta.dump(2) << '\n'; });
  std::cout << out.string() << '\n' << "near-singular fraction by quarter: " << fractions.dump() << std::endl;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training and analysis of SO(3) action representations"};
  app.require_subcommand(1);

  RunFlags run;
  auto* run_cmd = app.add_subcommand("run", "train one configuration");
  run.common.add_to(*run_cmd);
  run_cmd->add_option("--algo", run.algo, "ppo | sac | td3");
  run_cmd->add_option("--repr", run.repr, "matrix | quat | tangent | euler");
  run_cmd->add_option("--frame", run.frame, "global | delta");
  run_cmd->add_option("--scaled", run.scaled, "true | false (delta tangent only)");
  run_cmd->add_option("--reward", run.reward, "dense | sparse");
  run_cmd->add_option("--seed", run.seed, "run seed");
  run_cmd->add_option("--tag", run.tag, "suffix of the run name");
  run_cmd->add_flag("--save-buffer", run.save_buffer, "store achieved goals of every transition");
  run_cmd->add_flag("--quiet", run.quiet, "no per-evaluation progress");

  SweepFlags sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "train a grid of configurations and tabulate");
  sweep.common.add_to(*sweep_cmd);
  sweep_cmd->add_option("--algos", sweep.algos, "comma-separated algorithms")->capture_default_str();
  sweep_cmd->add_option("--reprs", sweep.reprs,
                        "comma-separated short names: matrix,dmatrix,quat,dquat,tangent,stangent,dtangent,euler,deuler "
                        "(default: the eight table rows)");
  sweep_cmd->add_option("--rewards", sweep.rewards, "comma-separated reward modes")->capture_default_str();
  sweep_cmd->add_option("--seeds", sweep.seeds, "seeds per cell")->capture_default_str();
  sweep_cmd->add_option("--seed-base", sweep.seed_base, "first seed")->capture_default_str();
  sweep_cmd->add_option("--workers", sweep.workers, "parallel runs")->capture_default_str();
  sweep_cmd->add_flag("--project-samples", sweep.project_samples, "project PPO samples (ablation)");

  std::string table_root;
  int table_expected = 5;
  auto* table_cmd = app.add_subcommand("table", "summarize the run directories under a root");
  table_cmd->add_option("root", table_root, "runs root (default $SO3RL_OUT or ./runs)");
  table_cmd->add_option("--expected", table_expected, "runs per cell before a cell is flagged")->capture_default_str();

  auto* analyze_cmd = app.add_subcommand("analyze", "diagnostic probes");
  analyze_cmd->require_subcommand(1);

  CloudFlags cloud;
  auto* cloud_cmd = analyze_cmd->add_subcommand("cloud", "projected noise point cloud");
  cloud_cmd->add_option("--repr", cloud.repr, "matrix | quat | tangent | euler")->capture_default_str();
  cloud_cmd->add_option("--sigma", cloud.sigma, "noise standard deviation")->required();
  cloud_cmd->add_option("--n", cloud.n, "samples")->capture_default_str();
  cloud_cmd->add_option("--squash", cloud.squash, "apply tanh")->capture_default_str();
  cloud_cmd->add_option("--clip", cloud.clip, "clip to [-1, 1]")->capture_default_str();
  cloud_cmd->add_option("--seed", cloud.seed)->capture_default_str();
  cloud_cmd->add_option("--out", cloud.out, "CSV path");

  std::string dc_run, dc_out;
  int dc_states = 100, dc_points = 33;
  std::uint64_t dc_seed = 0;
  auto* dc_cmd = analyze_cmd->add_subcommand("doublecover", "Q along the path from q to -q");
  dc_cmd->add_option("--run", dc_run, "sac global-quaternion run directory")->required();
  dc_cmd->add_option("--states", dc_states)->capture_default_str();
  dc_cmd->add_option("--points", dc_points)->capture_default_str();
  dc_cmd->add_option("--seed", dc_seed)->capture_default_str();
  dc_cmd->add_option("--out", dc_out, "JSON path");

  std::vector<std::string> en_runs;
  std::string en_out;
  int en_episodes = 3000;
  std::uint64_t en_seed = 0;
  auto* en_cmd = analyze_cmd->add_subcommand("entropynorm", "action norm against entropy level");
  en_cmd->add_option("--run", en_runs, "run directories, one per entropy level")->required();
  en_cmd->add_option("--episodes", en_episodes)->capture_default_str();
  en_cmd->add_option("--seed", en_seed)->capture_default_str();
  en_cmd->add_option("--out", en_out, "CSV path");

  std::string ph_run, ph_out;
  int ph_bins = 36;
  double ph_margin = 0.2;
  auto* ph_cmd = analyze_cmd->add_subcommand("pitchhist", "pitch of stored goals per training quarter");
  ph_cmd->add_option("--run", ph_run, "run directory with buffer_goals.csv")->required();
  ph_cmd->add_option("--bins", ph_bins)->capture_default_str();
  ph_cmd->add_option("--margin", ph_margin, "distance from ±pi/2 counted as near-singular")->capture_default_str();
  ph_cmd->add_option("--out", ph_out, "CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*sweep_cmd) return cmd_sweep(sweep);
    if (*table_cmd) return cmd_table(table_root, table_expected);
    if (*cloud_cmd) return cmd_cloud(cloud);
    if (*dc_cmd) return cmd_doublecover(dc_run, dc_states, dc_points, dc_seed, dc_out);
    if (*en_cmd) return cmd_entropynorm(en_runs, en_episodes, en_seed, en_out);
    if (*ph_cmd) return cmd_pitchhist(ph_run, ph_bins, ph_margin, ph_out);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << std::endl;
    return kExitConfig;
  } catch (const MissingArtifact& e) {
    std::cerr << "missing artifact: " << e.what() << std::endl;
    return kExitMissing;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << std::endl;
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitFailure;
  }
  return kExitFailure;
}

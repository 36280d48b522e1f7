#include "so3rl/rl/record.hpp"

#include <cmath>
#include <functional>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace so3rl::rl {

namespace {

using nlohmann::json;

double tail_mean(const std::vector<CurveRow>& curve, double CurveRow::*field) {
  if (curve.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t n = std::min<std::size_t>(curve.size(), RunSummary::kTailEvals);
  double s = 0;
  for (std::size_t i = curve.size() - n; i < curve.size(); ++i) s += curve[i].*field;
  return s / static_cast<double>(n);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

double parse_double(const std::string& s) {
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw InvalidArgument("malformed number '" + s + "'");
  return v;
}

[[noreturn]] void type_error(const std::string& key, const char* expected) {
  throw InvalidArgument(key + ": expected " + expected);
}

double as_double(const std::string& key, const json& v) {
  if (!v.is_number()) type_error(key, "a number");
  return v.get<double>();
}

long as_long(const std::string& key, const json& v) {
  if (v.is_number_integer()) return v.get<long>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::floor(d) == d && std::abs(d) < 9e15) return static_cast<long>(d);
  }
  type_error(key, "an integer");
}

bool as_bool(const std::string& key, const json& v) {
  if (!v.is_boolean()) type_error(key, "true or false");
  return v.get<bool>();
}

std::string as_string(const std::string& key, const json& v) {
  if (!v.is_string()) type_error(key, "a string");
  return v.get<std::string>();
}

std::vector<int> as_widths(const std::string& key, const json& v) {
  if (!v.is_array()) type_error(key, "an array of layer widths");
  std::vector<int> out;
  for (const auto& e : v) out.push_back(static_cast<int>(as_long(key, e)));
  return out;
}

template <typename T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

struct Field {
  std::function<json(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&, const json&)> set;
};

#define SO3RL_DOUBLE(path) \
  Field{[](const TrainConfig& c) { return json(c.path); }, \
        [](TrainConfig& c, const std::string& k, const json& v) { c.path = as_double(k, v); }}
#define SO3RL_INT(path) \
  Field{[](const TrainConfig& c) { return json(c.path); }, \
        [](TrainConfig& c, const std::string& k, const json& v) { c.path = static_cast<decltype(c.path)>(as_long(k, v)); }}
#define SO3RL_BOOL(path) \
  Field{[](const TrainConfig& c) { return json(c.path); }, \
        [](TrainConfig& c, const std::string& k, const json& v) { c.path = as_bool(k, v); }}
#define SO3RL_WIDTHS(path) \
  Field{[](const TrainConfig& c) { return json(c.path); }, \
        [](TrainConfig& c, const std::string& k, const json& v) { c.path = as_widths(k, v); }}

template <typename Section>
void add_off_policy(std::vector<std::pair<std::string, Field>>& f, const std::string& p, Section TrainConfig::*sec) {
  auto dbl = [&](const char* name, double OffPolicyCommon::*m) {
    f.emplace_back(p + "." + name,
                   Field{[sec, m](const TrainConfig& c) { return json((c.*sec).*m); },
                         [sec, m](TrainConfig& c, const std::string& k, const json& v) { (c.*sec).*m = as_double(k, v); }});
  };
  auto lng = [&](const char* name, long OffPolicyCommon::*m) {
    f.emplace_back(p + "." + name,
                   Field{[sec, m](const TrainConfig& c) { return json((c.*sec).*m); },
                         [sec, m](TrainConfig& c, const std::string& k, const json& v) { (c.*sec).*m = as_long(k, v); }});
  };
  auto integer = [&](const char* name, int OffPolicyCommon::*m) {
    f.emplace_back(p + "." + name, Field{[sec, m](const TrainConfig& c) { return json((c.*sec).*m); },
                                         [sec, m](TrainConfig& c, const std::string& k, const json& v) {
                                           (c.*sec).*m = static_cast<int>(as_long(k, v));
                                         }});
  };
  dbl("gamma", &OffPolicyCommon::gamma);
  dbl("tau_polyak", &OffPolicyCommon::tau_polyak);
  dbl("lr", &OffPolicyCommon::lr);
  integer("batch", &OffPolicyCommon::batch);
  lng("buffer_size", &OffPolicyCommon::buffer_size);
  lng("start_steps", &OffPolicyCommon::start_steps);
  lng("update_after", &OffPolicyCommon::update_after);
  integer("update_every", &OffPolicyCommon::update_every);
  integer("her_k", &OffPolicyCommon::her_k);
  f.emplace_back(p + ".hidden", Field{[sec](const TrainConfig& c) { return json((c.*sec).hidden); },
                                      [sec](TrainConfig& c, const std::string& k, const json& v) {
                                        (c.*sec).hidden = as_widths(k, v);
                                      }});
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const auto table = [] {
    std::vector<std::pair<std::string, Field>> f;
    f.emplace_back("schema_version",
                   Field{[](const TrainConfig&) { return json(TrainConfig::kSchemaVersion); },
                         [](TrainConfig&, const std::string& k, const json& v) {
                           if (as_long(k, v) != TrainConfig::kSchemaVersion) {
                             throw InvalidArgument(k + ": unsupported version (expected " +
                                                   std::to_string(TrainConfig::kSchemaVersion) + ")");
                           }
                         }});
    f.emplace_back("algo", Field{[](const TrainConfig& c) { return json(std::string(to_string(c.algo))); },
                                 [](TrainConfig& c, const std::string& k, const json& v) {
                                   c.algo = parse_algo(as_string(k, v));
                                 }});
    f.emplace_back("repr", Field{[](const TrainConfig& c) {
                                   return json(std::string(so3rl::to_string(c.env.repr.representation)));
                                 },
                                 [](TrainConfig& c, const std::string& k, const json& v) {
                                   c.env.repr.representation = parse_representation(as_string(k, v));
                                 }});
    f.emplace_back("frame", Field{[](const TrainConfig& c) { return json(std::string(so3rl::to_string(c.env.repr.frame))); },
                                  [](TrainConfig& c, const std::string& k, const json& v) {
                                    c.env.repr.frame = parse_frame(as_string(k, v));
                                  }});
    f.emplace_back("scaled", SO3RL_BOOL(env.repr.scaled));
    f.emplace_back("reward", Field{[](const TrainConfig& c) { return json(std::string(so3rl::to_string(c.env.reward_mode))); },
                                   [](TrainConfig& c, const std::string& k, const json& v) {
                                     c.env.reward_mode = parse_reward_mode(as_string(k, v));
                                   }});
    f.emplace_back("seed", Field{[](const TrainConfig& c) { return json(c.seed); },
                                 [](TrainConfig& c, const std::string& k, const json& v) {
                                   const long s = as_long(k, v);
                                   if (s < 0) throw InvalidArgument(k + ": must be non-negative");
                                   c.seed = static_cast<std::uint64_t>(s);
                                 }});
    f.emplace_back("steps", Field{[](const TrainConfig& c) { return json(c.resolved_steps()); },
                                  [](TrainConfig& c, const std::string& k, const json& v) {
                                    if (v.is_null()) c.steps.reset(); else c.steps = as_long(k, v);
                                  }});
    f.emplace_back("project_mean", Field{[](const TrainConfig& c) { return json(c.projection().project_mean); },
                                         [](TrainConfig& c, const std::string& k, const json& v) {
                                           if (v.is_null()) c.project_mean.reset(); else c.project_mean = as_bool(k, v);
                                         }});
    f.emplace_back("project_samples", SO3RL_BOOL(project_samples));
    f.emplace_back("tag", Field{[](const TrainConfig& c) { return json(c.tag); },
                                [](TrainConfig& c, const std::string& k, const json& v) { c.tag = as_string(k, v); }});
    f.emplace_back("save_buffer", SO3RL_BOOL(save_buffer));

    f.emplace_back("env.alpha_max", SO3RL_DOUBLE(env.alpha_max));
    f.emplace_back("env.horizon", SO3RL_INT(env.horizon));
    f.emplace_back("env.success_threshold", SO3RL_DOUBLE(env.success_threshold));
    f.emplace_back("env.init", Field{[](const TrainConfig& c) { return json(std::string(so3rl::to_string(c.env.init))); },
                                     [](TrainConfig& c, const std::string& k, const json& v) {
                                       c.env.init = parse_init_mode(as_string(k, v));
                                     }});
    f.emplace_back("env.goal_angle", Field{[](const TrainConfig& c) { return optional_json(c.env.goal_angle); },
                                           [](TrainConfig& c, const std::string& k, const json& v) {
                                             if (v.is_null()) c.env.goal_angle.reset(); else c.env.goal_angle = as_double(k, v);
                                           }});
    f.emplace_back("eval.interval", SO3RL_INT(eval.interval));
    f.emplace_back("eval.episodes", SO3RL_INT(eval.episodes));

    f.emplace_back("ppo.clip_eps", SO3RL_DOUBLE(ppo.clip_eps));
    f.emplace_back("ppo.gae_lambda", SO3RL_DOUBLE(ppo.gae_lambda));
    f.emplace_back("ppo.gamma", SO3RL_DOUBLE(ppo.gamma));
    f.emplace_back("ppo.entropy_coef", SO3RL_DOUBLE(ppo.entropy_coef));
    f.emplace_back("ppo.value_coef", SO3RL_DOUBLE(ppo.value_coef));
    f.emplace_back("ppo.lr", SO3RL_DOUBLE(ppo.lr));
    f.emplace_back("ppo.max_grad_norm", SO3RL_DOUBLE(ppo.max_grad_norm));
    f.emplace_back("ppo.rollout_len", SO3RL_INT(ppo.rollout_len));
    f.emplace_back("ppo.minibatch", SO3RL_INT(ppo.minibatch));
    f.emplace_back("ppo.epochs", SO3RL_INT(ppo.epochs));
    f.emplace_back("ppo.log_std_init",
                   Field{[](const TrainConfig& c) { return json(c.ppo.resolved_log_std_init(c.env.repr.representation)); },
                         [](TrainConfig& c, const std::string& k, const json& v) {
                           if (v.is_null()) c.ppo.log_std_init.reset(); else c.ppo.log_std_init = as_double(k, v);
                         }});
    f.emplace_back("ppo.hidden", SO3RL_WIDTHS(ppo.hidden));

    add_off_policy(f, "sac", &TrainConfig::sac);
    f.emplace_back("sac.target_entropy",
                   Field{[](const TrainConfig& c) { return json(c.sac.resolved_target_entropy(c.env.repr.action_dim())); },
                         [](TrainConfig& c, const std::string& k, const json& v) {
                           if (v.is_null()) c.sac.target_entropy.reset(); else c.sac.target_entropy = as_double(k, v);
                         }});
    f.emplace_back("sac.auto_alpha", SO3RL_BOOL(sac.auto_alpha));
    f.emplace_back("sac.init_alpha", SO3RL_DOUBLE(sac.init_alpha));

    add_off_policy(f, "td3", &TrainConfig::td3);
    f.emplace_back("td3.expl_noise_std", SO3RL_DOUBLE(td3.expl_noise_std));
    f.emplace_back("td3.target_noise_std", SO3RL_DOUBLE(td3.target_noise_std));
    f.emplace_back("td3.target_noise_clip", SO3RL_DOUBLE(td3.target_noise_clip));
    f.emplace_back("td3.policy_delay", SO3RL_INT(td3.policy_delay));
    return f;
  }();
  return table;
}

#undef SO3RL_DOUBLE
#undef SO3RL_INT
#undef SO3RL_BOOL
#undef SO3RL_WIDTHS

}  // namespace

std::string_view to_string(RunStatus s) { return s == RunStatus::Ok ? "ok" : "nan_abort"; }

RunStatus parse_run_status(std::string_view s) {
  if (s == "ok") return RunStatus::Ok;
  if (s == "nan_abort") return RunStatus::NanAbort;
  throw InvalidArgument("unknown run status '" + std::string(s) + "'");
}

RunSummary summarize(const std::vector<CurveRow>& curve) {
  RunSummary s;
  s.final_return = tail_mean(curve, &CurveRow::eval_return_mean);
  s.final_success = tail_mean(curve, &CurveRow::success_rate);
  s.env_steps = curve.empty() ? 0 : curve.back().env_steps;
  s.evals = static_cast<int>(curve.size());
  return s;
}

void write_curve_csv(std::ostream& out, const std::vector<CurveRow>& rows) {
  out << "env_steps,eval_return_mean,eval_return_std,success_rate,policy_entropy,mean_action_norm\n";
  out << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.env_steps << ',' << r.eval_return_mean << ',' << r.eval_return_std << ',' << r.success_rate << ','
        << r.policy_entropy << ',' << r.mean_action_norm << '\n';
  }
}

std::vector<CurveRow> read_curve_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("env_steps,", 0) != 0) throw InvalidArgument("curve: missing header");
  std::vector<CurveRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() != 6) throw InvalidArgument("curve: expected 6 columns");
    CurveRow r;
    r.env_steps = std::stol(c[0]);
    r.eval_return_mean = parse_double(c[1]);
    r.eval_return_std = parse_double(c[2]);
    r.success_rate = parse_double(c[3]);
    r.policy_entropy = parse_double(c[4]);
    r.mean_action_norm = parse_double(c[5]);
    if (!rows.empty() && r.env_steps <= rows.back().env_steps) {
      throw InvalidArgument("curve: env_steps must increase strictly");
    }
    rows.push_back(r);
  }
  return rows;
}

json summary_to_json(const RunSummary& s) {
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  return {{"final_return", num(s.final_return)},
          {"final_success", num(s.final_success)},
          {"env_steps", s.env_steps},
          {"evals", s.evals},
          {"status", std::string(to_string(s.status))},
          {"message", s.message},
          {"wall_seconds", s.wall_seconds},
          {"build", s.build}};
}

RunSummary summary_from_json(const json& j) {
  auto num = [&](const char* k) {
    const auto& v = j.at(k);
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
  };
  RunSummary s;
  s.final_return = num("final_return");
  s.final_success = num("final_success");
  s.env_steps = j.at("env_steps").get<long>();
  s.evals = j.at("evals").get<int>();
  s.status = parse_run_status(j.at("status").get<std::string>());
  s.message = j.value("message", "");
  s.wall_seconds = j.value("wall_seconds", 0.0);
  s.build = j.value("build", "");
  return s;
}

void write_buffer_goals_csv(std::ostream& out, const std::vector<BufferGoal>& goals) {
  out << "env_step,g00,g01,g02,g10,g11,g12,g20,g21,g22\n" << std::setprecision(17);
  for (const auto& g : goals) {
    out << g.env_step;
    for (double v : g.achieved) out << ',' << v;
    out << '\n';
  }
}

std::vector<BufferGoal> read_buffer_goals_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("env_step,", 0) != 0) throw InvalidArgument("buffer goals: missing header");
  std::vector<BufferGoal> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() != 10) throw InvalidArgument("buffer goals: expected 10 columns");
    BufferGoal g;
    g.env_step = std::stol(c[0]);
    for (int i = 0; i < 9; ++i) g.achieved[i] = parse_double(c[i + 1]);
    out.push_back(g);
  }
  return out;
}

json config_to_json(const TrainConfig& c) {
  json out = json::object();
  for (const auto& [key, field] : fields()) out[key] = field.get(c);
  return out;
}

void apply_config_value(TrainConfig& c, const std::string& key, const json& value) {
  for (const auto& [name, field] : fields()) {
    if (name == key) {
      try {
        field.set(c, key, value);
      } catch (const InvalidArgument& e) {
        const std::string msg = e.what();
        if (msg.rfind(key + ":", 0) == 0) throw;
        throw InvalidArgument(key + ": " + msg);
      }
      return;
    }
  }
  throw InvalidArgument(key + ": unknown configuration key");
}

TrainConfig config_from_json(const json& doc) {
  if (!doc.is_object()) throw InvalidArgument("configuration must be a JSON object");
  TrainConfig c;
  for (const auto& [key, value] : doc.items()) apply_config_value(c, key, value);
  c.validate();
  return c;
}

}  // namespace so3rl::rl

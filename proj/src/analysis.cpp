#include "so3rl/analysis.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace so3rl::analysis {

namespace {

using Points = Eigen::Matrix<double, Eigen::Dynamic, 3>;

constexpr double kPiD = kPi<double>;

double pitch_of(const Eigen::Vector3d& p) { return matrix_to_euler(exp_map<double>(p)).pitch; }

long resolve_total(const std::vector<rl::BufferGoal>& goals, long total_steps) {
  if (total_steps > 0) return total_steps;
  long last = 0;
  for (const auto& g : goals) last = std::max(last, g.env_step);
  return last + 1;
}

int quarter_of(long step, long total) {
  return static_cast<int>(std::min<long>(3, std::max<long>(0, 4 * step / total)));
}

double goal_pitch(const rl::BufferGoal& g) {
  return matrix_to_euler(Rotation<double>::from_row_major(std::span<const double>(g.achieved))).pitch;
}

}  // namespace

nlohmann::json PointCloud::meta() const {
  return {{"representation", std::string(to_string(representation))},
          {"sigma", sigma},
          {"squashed", squashed},
          {"clipped", clipped},
          {"n", points.rows()},
          {"coordinates", "lie_algebra_radians"}};
}

PointCloud noise_projection_cloud(Representation r, double sigma, long n, bool squash, bool clip, Rng& rng) {
  if (n < 1) throw InvalidArgument("noise_projection_cloud: n must be at least 1");
  if (!(sigma > 0) || !std::isfinite(sigma)) throw InvalidArgument("noise_projection_cloud: sigma must be positive");
  const auto spec = ReprSpec::make(r, Frame::Global);
  const int d = spec.action_dim();
  std::normal_distribution<double> normal(0.0, sigma);
  PointCloud cloud;
  cloud.representation = r;
  cloud.sigma = sigma;
  cloud.squashed = squash;
  cloud.clipped = clip;
  cloud.points.resize(n, 3);
  std::vector<double> raw(d);
  for (long i = 0; i < n; ++i) {
    for (auto& x : raw) {
      x = normal(rng);
      if (squash) x = std::tanh(x);
      if (clip) x = std::clamp(x, -1.0, 1.0);
    }
    const auto rot = decode_action(raw, spec, Rotation<double>::identity(), kPiD / 10);
    cloud.points.row(i) = log_map(rot).transpose();
  }
  return cloud;
}

void write_cloud_csv(std::ostream& out, const PointCloud& cloud) {
  out << "x,y,z\n" << std::setprecision(17);
  for (Eigen::Index i = 0; i < cloud.points.rows(); ++i) {
    out << cloud.points(i, 0) << ',' << cloud.points(i, 1) << ',' << cloud.points(i, 2) << '\n';
  }
}

Points read_cloud_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "x,y,z") throw InvalidArgument("cloud: missing header");
  std::vector<Eigen::Vector3d> pts;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    Eigen::Vector3d p;
    char c1 = 0, c2 = 0;
    if (!(ss >> p.x() >> c1 >> p.y() >> c2 >> p.z()) || c1 != ',' || c2 != ',') {
      throw InvalidArgument("cloud: malformed row '" + line + "'");
    }
    if (!p.allFinite() || p.norm() > kPiD + 1e-9) throw InvalidArgument("cloud: point outside the pi-ball");
    pts.push_back(p);
  }
  Points out(static_cast<Eigen::Index>(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
  return out;
}

double mean_trace(const Points& points) {
  return (1.0 + 2.0 * points.rowwise().norm().array().cos()).mean();
}

Eigen::Vector3d axis_kurtosis(const Points& points) {
  Eigen::Vector3d k;
  for (int j = 0; j < 3; ++j) {
    const Eigen::ArrayXd c = points.col(j).array() - points.col(j).mean();
    const double m2 = c.square().mean();
    k(j) = c.square().square().mean() / (m2 * m2);
  }
  return k;
}

double pitch_fraction(const Points& points, double margin) {
  if (points.rows() == 0) return 0;
  long hits = 0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    if (std::abs(pitch_of(points.row(i).transpose())) > kPiD / 2 - margin) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(points.rows());
}

void ProbeReport::write_csv(std::ostream& out) const {
  for (std::size_t j = 0; j < columns.size(); ++j) out << (j ? "," : "") << columns[j];
  out << '\n' << std::setprecision(17);
  for (const auto& row : rows) {
    for (std::size_t j = 0; j < row.size(); ++j) out << (j ? "," : "") << row[j];
    out << '\n';
  }
}

Eigen::Vector4d double_cover_point(const UnitQuaternion<double>& q, const Eigen::Vector3d& direction, double s) {
  const double n = direction.norm();
  if (!(n > 0) || !direction.allFinite()) throw InvalidArgument("double_cover_point: direction must be nonzero");
  const Eigen::Vector3d u = direction / n;
  const auto step = UnitQuaternion<double>::assume_valid(Eigen::Vector4d(std::cos(s), std::sin(s) * u.x(),
                                                                         std::sin(s) * u.y(), std::sin(s) * u.z()));
  return (q * step).coeffs();
}

ProbeReport double_cover_probe(const ReprSpec& spec, const Critic& critic, const Eigen::VectorXd& obs,
                               const UnitQuaternion<double>& q, const Eigen::Vector3d& direction, int n_points) {
  if (spec.representation != Representation::Quaternion || spec.frame != Frame::Global) {
    throw InvalidArgument("double_cover_probe: requires a global quaternion policy, got " + spec.to_string());
  }
  if (n_points < 2) throw InvalidArgument("double_cover_probe: n_points must be at least 2");
  ProbeReport report;
  report.columns = {"s", "q_value"};
  for (int i = 0; i < n_points; ++i) {
    const double s = kPiD * i / (n_points - 1);
    report.rows.push_back({s, critic(obs, double_cover_point(q, direction, s))});
  }
  report.meta = {{"probe", "double_cover"},
                 {"spacing", "arc_length"},
                 {"path", "q*(cos s, sin s * n), s in [0, pi]"},
                 {"n_points", n_points}};
  return report;
}

DoubleCoverSummary double_cover_study(const rl::SacAgent& agent, const EnvConfig& env_config, int states,
                                      int n_points, std::uint64_t seed) {
  if (env_config.repr.representation != Representation::Quaternion || env_config.repr.frame != Frame::Global) {
    throw InvalidArgument("double_cover_study: requires a global quaternion policy");
  }
  Rng rng(seed);
  RotationEnv env(env_config);
  const Critic critic = [&agent](const Eigen::VectorXd& o, const Eigen::VectorXd& a) { return agent.q_value(o, a); };
  DoubleCoverSummary out;
  out.detail = nlohmann::json::array();
  for (int k = 0; k < states; ++k) {
    const auto start = haar_random<double>(rng);
    const auto goal = haar_random<double>(rng);
    const auto obs = env.reset_to(start, goal).obs;
    const Eigen::VectorXd action = agent.act_deterministic(obs);
    const auto q = quat_normalize(Eigen::Vector4d(action)).value;
    Eigen::Vector3d dir = log_map(quat_to_matrix(q).inverse() * goal);
    if (dir.norm() < 1e-9) dir = Eigen::Vector3d::UnitX();
    const auto report = double_cover_probe(env_config.repr, critic, obs, q, dir, n_points);
    const double q_anti = critic(obs, double_cover_point(q, dir, kPiD));
    const double q_quarter = critic(obs, double_cover_point(q, dir, kPiD / 4));
    ++out.states;
    if (q_anti >= q_quarter) ++out.antipode_at_least_quarter;
    std::vector<double> curve;
    for (const auto& row : report.rows) curve.push_back(row[1]);
    out.detail.push_back({{"q_start", report.rows.front()[1]}, {"q_antipode", q_anti}, {"q_quarter", q_quarter},
                          {"curve", curve}});
  }
  return out;
}

ProbeReport entropy_norm_probe(const std::vector<std::pair<double, const rl::Agent*>>& policies, EnvConfig env,
                               int episodes, std::uint64_t seed) {
  if (episodes < 1) throw InvalidArgument("entropy_norm_probe: episodes must be at least 1");
  env.init = InitMode::Identity;
  env.goal_angle = kPiD;
  auto sorted = policies;
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  ProbeReport report;
  report.columns = {"entropy_level", "mean_action_norm", "mean_return"};
  for (const auto& [level, agent] : sorted) {
    env.seed = seed;
    RotationEnv e(env);
    double norm_sum = 0, ret_sum = 0;
    long steps = 0;
    for (int ep = 0; ep < episodes; ++ep) {
      auto o = e.reset();
      for (;;) {
        const Eigen::VectorXd a = agent->act_deterministic(o.obs);
        norm_sum += a.norm();
        ++steps;
        const auto s = e.step(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())));
        ret_sum += s.reward;
        if (s.terminated || s.truncated) break;
        o = s.observation;
      }
    }
    report.rows.push_back({level, norm_sum / static_cast<double>(steps), ret_sum / episodes});
  }
  report.meta = {{"probe", "entropy_norm"}, {"episodes", episodes}, {"init", "identity"}, {"goal_angle", kPiD}};
  return report;
}

ProbeReport buffer_pitch_histogram(const std::vector<rl::BufferGoal>& goals, int bins, long total_steps) {
  if (bins < 1) throw InvalidArgument("buffer_pitch_histogram: bins must be at least 1");
  ProbeReport report;
  report.columns = {"bin_center", "bin_lo", "bin_hi", "q1", "q2", "q3", "q4"};
  report.meta = {{"probe", "buffer_pitch"}, {"bins", bins}, {"interval", "(-pi/2, pi/2]"}};
  if (goals.empty()) return report;
  const long total = resolve_total(goals, total_steps);
  std::vector<std::array<double, 4>> counts(bins, {0, 0, 0, 0});
  for (const auto& g : goals) {
    const double theta = goal_pitch(g);
    int b = static_cast<int>(std::ceil((theta / kPiD + 0.5) * bins)) - 1;
    b = std::clamp(b, 0, bins - 1);
    counts[b][quarter_of(g.env_step, total)] += 1;
  }
  for (int b = 0; b < bins; ++b) {
    const double lo = (static_cast<double>(b) / bins - 0.5) * kPiD;
    const double hi = (static_cast<double>(b + 1) / bins - 0.5) * kPiD;
    report.rows.push_back({(lo + hi) / 2, lo, hi, counts[b][0], counts[b][1], counts[b][2], counts[b][3]});
  }
  report.meta["total_steps"] = total;
  return report;
}

double quarter_singularity_fraction(const std::vector<rl::BufferGoal>& goals, int quarter, double margin,
                                    long total_steps) {
  if (quarter < 0 || quarter > 3) throw InvalidArgument("quarter must be 0..3");
  if (goals.empty()) return 0;
  const long total = resolve_total(goals, total_steps);
  long in_quarter = 0, near = 0;
  for (const auto& g : goals) {
    if (quarter_of(g.env_step, total) != quarter) continue;
    ++in_quarter;
    if (std::abs(goal_pitch(g)) > kPiD / 2 - margin) ++near;
  }
  return in_quarter ? static_cast<double>(near) / static_cast<double>(in_quarter) : 0.0;
}

bool nearly_monotone(const std::vector<double>& values, int allowed) {
  int inversions = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] < values[i - 1]) ++inversions;
  }
  return inversions <= allowed;
}

}  // namespace so3rl::analysis

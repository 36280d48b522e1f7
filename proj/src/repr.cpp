#include "so3rl/repr.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <vector>

namespace so3rl {

namespace {

constexpr double kPiD = kPi<double>;

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t");
  auto e = s.find_last_not_of(" \t");
  if (b == std::string_view::npos) return {};
  return std::string(s.substr(b, e - b + 1));
}

bool parse_bool(std::string_view s) {
  const std::string v = lower(s);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw InvalidArgument("expected a boolean, got '" + std::string(s) + "'");
}

}  // namespace

std::string_view to_string(Representation r) {
  switch (r) {
    case Representation::Matrix: return "matrix";
    case Representation::Quaternion: return "quat";
    case Representation::Tangent: return "tangent";
    case Representation::Euler: return "euler";
  }
  return "?";
}

std::string_view to_string(Frame f) { return f == Frame::Global ? "global" : "delta"; }

Representation parse_representation(std::string_view s) {
  const std::string v = lower(s);
  if (v == "matrix") return Representation::Matrix;
  if (v == "quat" || v == "quaternion") return Representation::Quaternion;
  if (v == "tangent") return Representation::Tangent;
  if (v == "euler") return Representation::Euler;
  throw InvalidArgument("unknown representation '" + std::string(s) + "'");
}

Frame parse_frame(std::string_view s) {
  const std::string v = lower(s);
  if (v == "global") return Frame::Global;
  if (v == "delta") return Frame::Delta;
  throw InvalidArgument("unknown frame '" + std::string(s) + "'");
}

int ambient_dim(Representation r) {
  switch (r) {
    case Representation::Matrix: return 9;
    case Representation::Quaternion: return 4;
    case Representation::Tangent:
    case Representation::Euler: return 3;
  }
  return 0;
}

ReprSpec ReprSpec::make(Representation r, Frame f, bool scaled) {
  ReprSpec spec{r, f, scaled};
  spec.validate();
  return spec;
}

void ReprSpec::validate() const {
  if (scaled && !(representation == Representation::Tangent && frame == Frame::Delta)) {
    throw InvalidArgument("scaled=true is only valid for the delta tangent representation");
  }
}

std::string ReprSpec::to_string() const {
  return "repr=" + std::string(so3rl::to_string(representation)) +
         ",frame=" + std::string(so3rl::to_string(frame)) +
         ",scaled=" + (scaled ? "true" : "false");
}

ReprSpec ReprSpec::parse(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const auto item = text.substr(pos, comma == std::string_view::npos ? text.size() - pos : comma - pos);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) {
      throw InvalidArgument("malformed representation item '" + std::string(item) + "'");
    }
    const std::string key = lower(trim(item.substr(0, eq)));
    if (key != "repr" && key != "frame" && key != "scaled") {
      throw InvalidArgument("unknown representation key '" + key + "'");
    }
    if (!kv.emplace(key, trim(item.substr(eq + 1))).second) {
      throw InvalidArgument("duplicate representation key '" + key + "'");
    }
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  if (!kv.count("repr") || !kv.count("frame")) {
    throw InvalidArgument("representation needs both repr= and frame=");
  }
  ReprSpec spec;
  spec.representation = parse_representation(kv["repr"]);
  spec.frame = parse_frame(kv["frame"]);
  spec.scaled = kv.count("scaled") ? parse_bool(kv["scaled"]) : false;
  spec.validate();
  return spec;
}

std::string ReprSpec::short_name() const {
  std::string base(so3rl::to_string(representation));
  if (frame == Frame::Global) return base;
  return (scaled ? "s" : "d") + base;
}

ReprSpec ReprSpec::from_short_name(std::string_view name) {
  const std::string v = lower(name);
  if (v == "stangent") return make(Representation::Tangent, Frame::Delta, true);
  if (!v.empty() && v[0] == 'd' && v != "delta") {
    return make(parse_representation(v.substr(1)), Frame::Delta, false);
  }
  return make(parse_representation(v), Frame::Global, false);
}

EulerAngles<double> euler_from_raw(std::span<const double> raw) {
  EulerAngles<double> e{kPiD * raw[0], 0.5 * kPiD * raw[1], kPiD * raw[2]};
  return canonical_euler(e);
}

DecodedAction decode_action_detailed(std::span<const double> raw, const ReprSpec& spec,
                                     const Rotation<double>& current, double alpha_max) {
  spec.validate();
  if (static_cast<int>(raw.size()) != spec.action_dim()) {
    throw InvalidArgument("decode_action: expected " + std::to_string(spec.action_dim()) +
                          " action entries, got " + std::to_string(raw.size()));
  }
  for (double v : raw) {
    if (!std::isfinite(v)) throw InvalidArgument("decode_action: non-finite action");
  }

  DecodedAction out;
  Rotation<double> local;
  switch (spec.representation) {
    case Representation::Matrix: {
      Matrix3<double> m;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m(i, j) = raw[3 * i + j];
      const auto p = svd_project(m);
      local = p.value;
      out.degenerate = p.degenerate;
      break;
    }
    case Representation::Quaternion: {
      const auto q = quat_normalize(Vector4<double>(raw[0], raw[1], raw[2], raw[3]));
      local = quat_to_matrix(q.value);
      out.degenerate = q.degenerate;
      break;
    }
    case Representation::Tangent: {
      Vector3<double> tau(raw[0], raw[1], raw[2]);
      if (spec.scaled) {
        tau *= alpha_max;
        const double n = tau.norm();
        if (n > alpha_max) tau *= alpha_max / n;
      } else {
        tau *= kPiD;
      }
      local = exp_map(tau);
      break;
    }
    case Representation::Euler:
      local = euler_to_matrix(euler_from_raw(raw));
      break;
  }
  out.desired = spec.frame == Frame::Delta ? current * local : local;
  return out;
}

Eigen::VectorXd mean_projection(const Eigen::VectorXd& raw_mean, Representation r) {
  if (raw_mean.size() != ambient_dim(r)) {
    throw InvalidArgument("mean_projection: dimension mismatch");
  }
  switch (r) {
    case Representation::Quaternion:
      return quat_normalize(Vector4<double>(raw_mean)).value.coeffs();
    case Representation::Matrix: {
      Matrix3<double> m;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m(i, j) = raw_mean(3 * i + j);
      const auto rot = svd_project(m).value.row_major();
      return Eigen::Map<const Eigen::VectorXd>(rot.data(), 9);
    }
    case Representation::Tangent:
    case Representation::Euler:
      return raw_mean;
  }
  return raw_mean;
}

}  // namespace so3rl

#include <doctest.h>

#include <vector>

#include "so3rl/repr.hpp"
#include "support.hpp"

using namespace so3rl;
using namespace testsupport;

namespace {

const double kAlpha = pi / 10;

std::vector<ReprSpec> all_specs() {
  std::vector<ReprSpec> out;
  for (auto r : {Representation::Matrix, Representation::Quaternion, Representation::Tangent, Representation::Euler}) {
    for (auto f : {Frame::Global, Frame::Delta}) out.push_back(ReprSpec::make(r, f));
  }
  out.push_back(ReprSpec::make(Representation::Tangent, Frame::Delta, true));
  return out;
}

std::vector<double> uniform_raw(std::mt19937_64& rng, int n, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

}  // namespace

TEST_CASE("spec grammar and short names") {
  const auto s = ReprSpec::parse("repr=tangent,frame=delta,scaled=true");
  CHECK(s.representation == Representation::Tangent);
  CHECK(s.frame == Frame::Delta);
  CHECK(s.scaled);
  CHECK(s.action_dim() == 3);
  CHECK(ReprSpec::parse(s.to_string()) == s);
  CHECK(ReprSpec::parse("frame=global, repr=quat").action_dim() == 4);
  CHECK_THROWS_AS(ReprSpec::parse("repr=euler,frame=delta,scaled=true"), InvalidArgument);
  CHECK_THROWS_AS(ReprSpec::parse("repr=tangent,frame=global,scaled=true"), InvalidArgument);
  CHECK_THROWS_AS(ReprSpec::parse("repr=sixd,frame=global"), InvalidArgument);
  CHECK_THROWS_AS(ReprSpec::parse("repr=quat"), InvalidArgument);
  CHECK_THROWS_AS(ReprSpec::parse("repr=quat,frame=global,colour=red"), InvalidArgument);

  for (const auto& spec : all_specs()) {
    CHECK(ReprSpec::from_short_name(spec.short_name()) == spec);
    CHECK(ReprSpec::parse(spec.to_string()) == spec);
  }
  CHECK(ReprSpec::make(Representation::Matrix, Frame::Global).action_dim() == 9);
  CHECK(ReprSpec::make(Representation::Euler, Frame::Delta).short_name() == "deuler");
  CHECK(ReprSpec::make(Representation::Tangent, Frame::Delta, true).short_name() == "stangent");
}

TEST_CASE("scaled tangent decoding") {
  const auto spec = ReprSpec::make(Representation::Tangent, Frame::Delta, true);
  std::mt19937_64 rng(1);
  const auto r = haar_random(rng);
  const std::vector<double> zero{0, 0, 0};
  CHECK((decode_action(zero, spec, r, kAlpha).matrix() - r.matrix()).norm() < 1e-15);
  const std::vector<double> x{1, 0, 0};
  CHECK((decode_action(x, spec, Rotation<double>::identity(), kAlpha).matrix() -
         exp_map(Vector3<double>(kAlpha, 0, 0)).matrix()).norm() < 1e-15);
  const std::vector<double> corner{1, 1, 1};
  CHECK(geodesic_distance(r, decode_action(corner, spec, r, kAlpha)) == doctest::Approx(kAlpha).epsilon(1e-12));

  for (int i = 0; i < 10000; ++i) {
    const auto cur = haar_random(rng);
    const auto raw = uniform_raw(rng, 3);
    REQUIRE(geodesic_distance(cur, decode_action(raw, spec, cur, kAlpha)) <= kAlpha + 1e-12);
  }
}

TEST_CASE("quaternion decoding ignores the sign") {
  std::mt19937_64 rng(2);
  const auto spec = ReprSpec::make(Representation::Quaternion, Frame::Global);
  for (int i = 0; i < 1000; ++i) {
    auto raw = uniform_raw(rng, 4);
    std::vector<double> neg(raw);
    for (auto& v : neg) v = -v;
    REQUIRE((decode_action(raw, spec, Rotation<double>::identity(), kAlpha).matrix() -
             decode_action(neg, spec, Rotation<double>::identity(), kAlpha).matrix()).norm() < 1e-15);
  }
  const std::vector<double> zero{0, 0, 0, 0};
  const auto d = decode_action_detailed(zero, spec, Rotation<double>::identity(), kAlpha);
  CHECK(d.degenerate);
  CHECK(d.desired.matrix() == Matrix3<double>::Identity());
}

TEST_CASE("decoding is total and respects frames") {
  std::mt19937_64 rng(3);
  for (const auto& spec : all_specs()) {
    for (int i = 0; i < 500; ++i) {
      const auto cur = haar_random(rng);
      const auto raw = uniform_raw(rng, spec.action_dim(), -5, 5);
      const auto out = decode_action(raw, spec, cur, kAlpha);
      REQUIRE(is_rotation(out.matrix(), 1e-10));
    }
  }
  // Delta at identity equals global.
  for (const auto& spec : all_specs()) {
    if (spec.frame != Frame::Delta || spec.scaled) continue;
    const auto global = ReprSpec::make(spec.representation, Frame::Global);
    for (int i = 0; i < 200; ++i) {
      const auto raw = uniform_raw(rng, spec.action_dim());
      REQUIRE((decode_action(raw, spec, Rotation<double>::identity(), kAlpha).matrix() -
               decode_action(raw, global, Rotation<double>::identity(), kAlpha).matrix()).norm() < 1e-14);
    }
  }
  // Delta composes onto the current orientation.
  for (const auto& spec : all_specs()) {
    if (spec.frame != Frame::Delta || spec.scaled) continue;
    const auto global = ReprSpec::make(spec.representation, Frame::Global);
    const auto cur = haar_random(rng);
    const auto raw = uniform_raw(rng, spec.action_dim());
    CHECK((decode_action(raw, spec, cur, kAlpha).matrix() -
           (cur * decode_action(raw, global, Rotation<double>::identity(), kAlpha)).matrix()).norm() < 1e-14);
  }
  // Scaled delta at identity equals the global tangent decode of (alpha/pi)·raw for in-ball raw.
  const auto scaled = ReprSpec::make(Representation::Tangent, Frame::Delta, true);
  const auto tangent = ReprSpec::make(Representation::Tangent, Frame::Global);
  for (int i = 0; i < 200; ++i) {
    const Vector3<double> v = random_tangent(rng, 0, 1);
    const std::vector<double> raw{v.x(), v.y(), v.z()};
    const std::vector<double> rescaled{v.x() * kAlpha / pi, v.y() * kAlpha / pi, v.z() * kAlpha / pi};
    REQUIRE((decode_action(raw, scaled, Rotation<double>::identity(), kAlpha).matrix() -
             decode_action(rescaled, tangent, Rotation<double>::identity(), kAlpha).matrix()).norm() < 1e-14);
  }
}

TEST_CASE("decoding rejects malformed input") {
  const auto spec = ReprSpec::make(Representation::Matrix, Frame::Global);
  const std::vector<double> short_raw{1, 0, 0};
  CHECK_THROWS_AS(decode_action(short_raw, spec, Rotation<double>::identity(), kAlpha), InvalidArgument);
  std::vector<double> nan_raw(9, 0.0);
  nan_raw[4] = NAN;
  CHECK_THROWS_AS(decode_action(nan_raw, spec, Rotation<double>::identity(), kAlpha), InvalidArgument);
}

TEST_CASE("tangent and euler decode formulas") {
  const auto tangent = ReprSpec::make(Representation::Tangent, Frame::Global);
  const std::vector<double> half{0.5, 0, 0};
  CHECK((decode_action(half, tangent, Rotation<double>::identity(), kAlpha).matrix() -
         exp_map(Vector3<double>(pi / 2, 0, 0)).matrix()).norm() < 1e-15);

  const auto euler = ReprSpec::make(Representation::Euler, Frame::Global);
  const std::vector<double> raw{0.25, 0.5, -0.5};
  const auto e = euler_from_raw(raw);
  CHECK(e.roll == doctest::Approx(pi / 4));
  CHECK(e.pitch == doctest::Approx(pi / 4));
  CHECK(e.yaw == doctest::Approx(-pi / 2));
  CHECK((decode_action(raw, euler, Rotation<double>::identity(), kAlpha).matrix() -
         euler_to_matrix(EulerAngles<double>{pi / 4, pi / 4, -pi / 2}).matrix()).norm() < 1e-15);

  std::mt19937_64 rng(4);
  for (int i = 0; i < 1000; ++i) {
    const auto r = uniform_raw(rng, 3, -3, 3);
    const auto c = euler_from_raw(r);
    REQUIRE(c.roll > -pi);
    REQUIRE(c.roll <= pi);
    REQUIRE(c.yaw > -pi);
    REQUIRE(c.yaw <= pi);
    REQUIRE(std::abs(c.pitch) <= pi / 2);
  }
}

TEST_CASE("mean projection") {
  Eigen::VectorXd q(4);
  q << 2, 0, 0, 0;
  CHECK(mean_projection(q, Representation::Quaternion) == Eigen::Vector4d(1, 0, 0, 0));
  Eigen::VectorXd t(3);
  t << 0.3, -2, 5;
  CHECK(mean_projection(t, Representation::Tangent) == t);
  CHECK(mean_projection(t, Representation::Euler) == t);
  Eigen::VectorXd m = Eigen::VectorXd::Zero(9);
  m(0) = m(4) = m(8) = 3;
  const Eigen::VectorXd p = mean_projection(m, Representation::Matrix);
  CHECK((p - Eigen::Map<const Eigen::VectorXd>(std::array<double, 9>{1, 0, 0, 0, 1, 0, 0, 0, 1}.data(), 9)).norm() < 1e-15);
  CHECK_THROWS_AS(mean_projection(t, Representation::Matrix), InvalidArgument);
}

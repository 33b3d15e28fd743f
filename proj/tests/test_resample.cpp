#include "doctest.h"

#include <map>
#include <set>

#include "cif/error.hpp"
#include "cif/resample.hpp"
#include "support.hpp"

using namespace cif;
using doctest::Approx;

TEST_CASE("instance response") {
  GaussianSet g = GaussianSet::create(3, 2);
  g.occupancy_logit[0] = 0.0;
  g.base_identity.row(0) << 0.6, 0.4;
  CHECK(instance_response(g, 0, 2) == Approx(0.2).epsilon(1e-15));
  g.base_identity.row(1) << 1.0, 0.0;
  CHECK(instance_response(g, 1, 2) == 0.0);
  g.occupancy_logit[2] = 40.0;
  g.base_identity.row(2) << 0.0, 1.0;
  CHECK(instance_response(g, 2, 2) == 1.0);
}

TEST_CASE("plan example") {
  const SamplingPlan plan = build_plan(Eigen::Vector3d(0.1, 0.2, 0.2), 1, 0.01, 0.5);
  CHECK(plan.strong[0] == Approx(0.2).epsilon(1e-15));
  CHECK(plan.strong[1] == Approx(0.4).epsilon(1e-15));
  CHECK(plan.strong[2] == Approx(0.4).epsilon(1e-15));
  CHECK(plan.weak[0] == Approx(0.5).epsilon(1e-15));
  CHECK(plan.weak[1] == Approx(0.25).epsilon(1e-15));
  CHECK(plan.weak[2] == Approx(0.25).epsilon(1e-15));
  CHECK(plan.budget == 2);
}

TEST_CASE("plan symmetry, clamping and validation") {
  const SamplingPlan flat = build_plan(Eigen::VectorXd::Constant(4, 0.3), 2, 0.01, 0.25);
  for (int i = 0; i < 4; ++i) {
    CHECK(flat.weak[i] == Approx(0.25));
    CHECK(flat.strong[i] == Approx(0.25));
  }
  const SamplingPlan clamped = build_plan(Eigen::Vector3d(0.0, 0.5, 1.0), 1, 0.05, 1.0);
  CHECK(clamped.weak.allFinite());
  CHECK(clamped.weak[0] / clamped.weak[1] == Approx(10.0));
  CHECK_THROWS_AS(build_plan(Eigen::VectorXd(), 1, 0.01, 0.1), Error);
  CHECK_THROWS_AS(build_plan(Eigen::Vector2d(0.1, 0.2), 1, 0.0, 0.1), Error);
  CHECK_THROWS_AS(build_plan(Eigen::Vector2d(0.1, 0.2), 1, 0.01, 1.5), Error);
}

TEST_CASE("plan distribution properties") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd gamma(12);
    for (Eigen::Index i = 0; i < gamma.size(); ++i) gamma[i] = rng.uniform(0.02, 1.0);
    const SamplingPlan plan = build_plan(gamma, 1, 0.01, 0.1);
    CHECK(std::abs(plan.weak.sum() - 1.0) < 1e-9);
    CHECK(std::abs(plan.strong.sum() - 1.0) < 1e-9);
    Eigen::Index top = 0, bottom = 0, strong_top = 0, strong_bottom = 0, weak_top = 0;
    gamma.maxCoeff(&top);
    gamma.minCoeff(&bottom);
    plan.strong.maxCoeff(&strong_top);
    plan.strong.minCoeff(&strong_bottom);
    plan.weak.maxCoeff(&weak_top);
    CHECK(strong_top == top);
    CHECK(strong_bottom == weak_top);
  }
}

TEST_CASE("volume-conserving adjustment") {
  CHECK(volume_conserving(0.75, 1) == Approx(0.5).epsilon(1e-15));
  CHECK(volume_conserving(0.875, 2) == Approx(0.5).epsilon(1e-15));
  CHECK(volume_conserving(0.3, 0) == 0.3);
  for (double a : {0.1, 0.5, 0.75, 0.875, 0.99}) {
    for (int n = 0; n <= 4; ++n) {
      CHECK(std::abs(1.0 - std::pow(1.0 - volume_conserving(a, n), n + 1) - a) < 1e-12);
    }
  }
}

TEST_CASE("round needs two primitives") {
  GaussianSet g = GaussianSet::create(1, 1);
  Rng rng(0);
  try {
    resample_round(g, 0.01, 0.5, rng);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Usage);
  }
}

TEST_CASE("round mutates as specified") {
  const auto scene = testing::random_scene(12, 60, 3, 8);
  GaussianSet before = scene.set;
  GaussianSet after = before;
  Rng rng(5);
  const RoundReport report = resample_round(after, 0.01, 0.1, rng);
  CHECK(after.size() == before.size());
  CHECK(report.pairs.size() + report.skipped == 6);
  REQUIRE_FALSE(report.pairs.empty());

  std::set<std::size_t> weak;
  std::map<std::size_t, int> replicas;
  for (const ResamplePair& p : report.pairs) {
    CHECK(p.weak != p.strong);
    CHECK(weak.insert(p.weak).second);
    ++replicas[p.strong];
  }
  for (const auto& [s, n] : replicas) {
    CHECK_FALSE(weak.contains(s));
    CHECK(after.opacity(s) == Approx(volume_conserving(before.opacity(s), n)).epsilon(1e-12));
    CHECK(after.occupancy(s) == Approx(volume_conserving(before.occupancy(s), n)).epsilon(1e-12));
  }
  for (const ResamplePair& p : report.pairs) {
    const auto w = static_cast<Eigen::Index>(p.weak), s = static_cast<Eigen::Index>(p.strong);
    CHECK(after.rotation.row(w) == after.rotation.row(s));
    CHECK(after.log_scale.row(w) == after.log_scale.row(s));
    CHECK(after.color.row(w) == after.color.row(s));
    CHECK(after.base_identity.row(w) == after.base_identity.row(s));
    CHECK(after.calibration_log.row(w) == after.calibration_log.row(s));
    CHECK(after.opacity_logit[w] == after.opacity_logit[s]);
    CHECK(after.occupancy_logit[w] == after.occupancy_logit[s]);
    const Eigen::Vector3d sd = 0.5 * before.log_scale.row(s).array().exp().transpose();
    CHECK((after.position.row(w) - after.position.row(s)).norm() < 6.0 * sd.maxCoeff());
  }
  for (std::size_t i = 0; i < after.size(); ++i) {
    if (weak.contains(i) || replicas.contains(i)) continue;
    CHECK(after.opacity_logit[static_cast<Eigen::Index>(i)] == before.opacity_logit[static_cast<Eigen::Index>(i)]);
    CHECK(after.position.row(static_cast<Eigen::Index>(i)) == before.position.row(static_cast<Eigen::Index>(i)));
  }
  for (int n : after.replicas) CHECK(n == 0);
}

TEST_CASE("rounds are deterministic per seed") {
  const auto scene = testing::random_scene(13, 40, 2, 8);
  GaussianSet a = scene.set, b = scene.set;
  Rng ra(77), rb(77);
  const RoundReport x = resample_round(a, 0.01, 0.2, ra);
  const RoundReport y = resample_round(b, 0.01, 0.2, rb);
  CHECK(x == y);
  CHECK(a.position == b.position);
  CHECK(x.to_log(3) == y.to_log(3));
  CHECK(x.to_log(3).starts_with("round 3 "));
}

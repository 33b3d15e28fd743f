#include "doctest.h"

#include "cif/deform.hpp"
#include "cif/error.hpp"
#include "support.hpp"

using namespace cif;
using doctest::Approx;

TEST_CASE("encoding layout") {
  const Eigen::VectorXd raw = encode({0.1, -0.2, 0.3}, 0.4, 0, 0);
  REQUIRE(raw.size() == 4);
  CHECK(raw[0] == 0.1);
  CHECK(raw[3] == 0.4);

  const Eigen::VectorXd zero = encode(Eigen::Vector3d::Zero(), 0.0, 6, 4);
  REQUIRE(zero.size() == 48);
  // per position frequency: three sines then three cosines; then time sin, cos
  for (int l = 0; l < 6; ++l) {
    for (int d = 0; d < 3; ++d) {
      CHECK(zero[4 + 6 * l + d] == 0.0);
      CHECK(zero[4 + 6 * l + 3 + d] == 1.0);
    }
  }
  for (int l = 0; l < 4; ++l) {
    CHECK(zero[40 + 2 * l] == 0.0);
    CHECK(zero[40 + 2 * l + 1] == 1.0);
  }
  const Eigen::VectorXd e = encode({0.3, 0.0, 0.0}, 0.7, 2, 1);
  CHECK(e[4 + 6] == Approx(std::sin(2.0 * 0.3)));
  CHECK(e[4 + 12] == Approx(std::sin(0.7)));
}

TEST_CASE("time outside [0, 1] is rejected") {
  CHECK_THROWS_AS(encode(Eigen::Vector3d::Zero(), 1.5, 1, 1), Error);
}

TEST_CASE("zero field is the identity deformation") {
  const auto scene = testing::random_scene(2, 8, 2, 4);
  const DeformationField zero(DeformConfig{3, 2, {16, 8}});
  for (double t : {0.0, 0.3, 1.0}) {
    const DeformedState s = deform_forward(zero, scene.set, t);
    CHECK(s.position == scene.set.position);
    CHECK((s.scale.array() / scene.set.log_scale.array().exp() - 1.0).abs().maxCoeff() < 1e-15);
    CHECK((s.rotation - scene.set.rotation).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("forward is pure") {
  const auto scene = testing::random_scene(5, 8, 2, 4);
  const DeformedState a = deform_forward(scene.deform, scene.set, 0.4);
  const DeformedState b = deform_forward(scene.deform, scene.set, 0.4);
  CHECK(a.position == b.position);
  CHECK(a.rotation == b.rotation);
  CHECK(a.scale == b.scale);
}

TEST_CASE("hand-set network moves positions") {
  // One hidden unit relu(t) = t; the x head reads 0.2 * unit, so dx = 0.1 at t = 0.5.
  DeformationField field(DeformConfig{0, 0, {1}});
  field.layers()[0].weight(0, 3) = 1.0;
  field.layers()[1].weight(0, 0) = 0.2;
  GaussianSet g = GaussianSet::create(2, 1);
  g.position.row(1) << 0.5, -0.25, 1.0;
  const DeformedState s = deform_forward(field, g, 0.5);
  CHECK(s.position(0, 0) == Approx(0.1).epsilon(1e-15));
  CHECK(s.position(1, 0) == Approx(0.6).epsilon(1e-15));
  CHECK(s.position(1, 1) == -0.25);
}

TEST_CASE("degenerate rotation is reported") {
  GaussianSet g = GaussianSet::create(1, 1);
  g.rotation.row(0).setZero();
  try {
    deform_forward(DeformationField(DeformConfig{0, 0, {2}}), g, 0.0);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateRotation);
  }
}

TEST_CASE("backward without a cache is a usage error") {
  const auto scene = testing::random_scene(1, 3, 1, 4);
  const DeformedState s = deform_forward(scene.deform, scene.set, 0.5, false);
  const RowMatrix z3 = RowMatrix::Zero(3, 3), z4 = RowMatrix::Zero(3, 4);
  try {
    deform_backward(scene.deform, scene.set, s, z3, z4, z3);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Usage);
  }
}

TEST_CASE("zero upstream gives zero gradients; zero weights give identity Jacobian") {
  const auto scene = testing::random_scene(3, 5, 1, 4);
  const DeformedState s = deform_forward(scene.deform, scene.set, 0.5);
  const RowMatrix z3 = RowMatrix::Zero(5, 3), z4 = RowMatrix::Zero(5, 4);
  const DeformGradients g = deform_backward(scene.deform, scene.set, s, z3, z4, z3);
  CHECK(g.weights.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.position.cwiseAbs().maxCoeff() == 0.0);

  const DeformationField zero(scene.deform.config());
  const DeformedState sz = deform_forward(zero, scene.set, 0.5);
  RowMatrix up = RowMatrix::Zero(5, 3);
  up(2, 1) = 1.0;
  const DeformGradients gz = deform_backward(zero, scene.set, sz, up, z4, z3);
  CHECK(gz.position == up);
}

namespace {

// Scalar test loss: fixed random linear functional of the deformed state.
struct Probe {
  RowMatrix wp, wq, ws;
  double operator()(const GaussianSet& set, const DeformationField& field, double t) const {
    const DeformedState s = deform_forward(field, set, t, false);
    return (s.position.array() * wp.array()).sum() + (s.rotation.array() * wq.array()).sum() +
           (s.scale.array() * ws.array()).sum();
  }
};

}  // namespace

TEST_CASE("deformation gradients match finite differences") {
  for (std::uint64_t seed = 10; seed < 15; ++seed) {
    const auto scene = testing::random_scene(seed, 8, 2, 4, DeformConfig{2, 2, {10, 6}});
    Rng rng(seed);
    Probe probe{RowMatrix(8, 3), RowMatrix(8, 4), RowMatrix(8, 3)};
    for (RowMatrix* m : {&probe.wp, &probe.wq, &probe.ws}) {
      for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = rng.normal();
    }
    const double t = 0.37;
    const DeformedState s = deform_forward(scene.deform, scene.set, t);
    const DeformGradients g = deform_backward(scene.deform, scene.set, s, probe.wp, probe.wq, probe.ws);

    const ParamLayout layout(scene.set, scene.deform);
    const Eigen::VectorXd numeric = testing::numeric_gradient(
        scene.set, scene.deform, [&](const GaussianSet& set, const DeformationField& d) { return probe(set, d, t); });
    auto check = [&](std::size_t offset, const Eigen::Ref<const Eigen::VectorXd>& analytic) {
      for (Eigen::Index j = 0; j < analytic.size(); ++j) {
        const double a = analytic[j], n = numeric[static_cast<Eigen::Index>(offset) + j];
        if (std::max(std::abs(a), std::abs(n)) <= 1e-8) continue;
        CHECK(testing::relative_error(a, n) < 1e-6);
      }
    };
    check(layout.position(), g.position.reshaped<Eigen::RowMajor>());
    check(layout.rotation(), g.rotation.reshaped<Eigen::RowMajor>());
    check(layout.log_scale(), (g.log_scale.reshaped<Eigen::RowMajor>()));
    check(layout.deformation(), g.weights);
  }
}

TEST_CASE("deformation is continuous in time") {
  const auto scene = testing::random_scene(8, 6, 1, 4);
  const DeformedState a = deform_forward(scene.deform, scene.set, 0.5);
  const DeformedState b = deform_forward(scene.deform, scene.set, 0.5 + 1e-6);
  CHECK((a.position - b.position).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("flatten and assign round-trip") {
  Rng rng(1);
  const DeformationField f = DeformationField::create(DeformConfig{2, 1, {5, 4}}, rng);
  DeformationField g(f.config());
  g.assign(f.flatten());
  CHECK(g.flatten() == f.flatten());
  CHECK(static_cast<std::size_t>(f.flatten().size()) == f.weight_count());
}

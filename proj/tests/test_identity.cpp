#include "doctest.h"

#include "cif/data.hpp"
#include "cif/error.hpp"
#include "cif/identity.hpp"
#include "cif/train.hpp"
#include "support.hpp"

using namespace cif;
using doctest::Approx;

namespace {

RenderBuffers one_pixel(std::vector<Contribution> list) {
  RenderBuffers b;
  b.width = b.height = 1;
  b.contributions = {std::move(list)};
  return b;
}

LabelImage label(int value) { return {1, 1, {value}}; }

SceneDataset single_frame(const testing::RandomScene& s, int k) {
  SceneDataset d;
  d.cameras = {s.camera};
  d.frames = {s.frame};
  d.instances = k;
  return d;
}

}  // namespace

TEST_CASE("accumulate routes weight by label") {
  auto acc = IdentityAccumulator::create(1, 2);
  acc.accumulate(one_pixel({{0, 1.0}}), label(2));
  CHECK(acc.numerator(0, 1) == 1.0);
  CHECK(acc.numerator(0, 0) == 0.0);
  CHECK(acc.denominator[0] == 1.0);

  auto two = IdentityAccumulator::create(1, 2);
  two.accumulate(one_pixel({{0, 1.0}}), label(1));
  two.accumulate(one_pixel({{0, 1.0}}), label(2));
  CHECK(two.numerator(0, 0) == 1.0);
  CHECK(two.numerator(0, 1) == 1.0);
  CHECK(two.denominator[0] == 2.0);
  const RowMatrix p = finalize(two);
  CHECK(p(0, 0) == 0.5);
  CHECK(p(0, 1) == 0.5);

  auto bg = IdentityAccumulator::create(1, 2);
  bg.accumulate(one_pixel({{0, 0.7}}), label(0));
  CHECK(bg.background[0] == 0.7);
  CHECK(bg.denominator[0] == 0.7);
  CHECK(bg.numerator.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("finalize examples") {
  auto acc = IdentityAccumulator::create(2, 3);
  acc.numerator.row(0) << 3.0, 0.0, 0.0;
  acc.background[1] = 5.0;
  acc.denominator << 3.0, 5.0;
  const RowMatrix p = finalize(acc);
  CHECK(p(0, 0) == 1.0);
  CHECK(p(0, 1) == 0.0);
  for (int k = 0; k < 3; ++k) CHECK(p(1, k) == Approx(1.0 / 3.0));
}

TEST_CASE("accumulate rejects bad input") {
  auto acc = IdentityAccumulator::create(1, 2);
  try {
    acc.accumulate(one_pixel({{0, 1.0}}), label(3));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Data);
  }
  RenderBuffers no_lists;
  no_lists.width = no_lists.height = 1;
  CHECK_THROWS_AS(acc.accumulate(no_lists, label(1)), Error);
}

TEST_CASE("estimate without frames is a usage error") {
  GaussianSet g = GaussianSet::create(3, 2);
  SceneDataset empty;
  empty.instances = 2;
  try {
    estimate_identities(g, DeformationField(DeformConfig{0, 0, {2}}), empty);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Usage);
  }
}

TEST_CASE("accumulation conservation, normalization and order invariance") {
  auto scene = testing::random_scene(4, 30, 3, 24);
  RenderOptions opts;
  opts.contributions = true;
  std::vector<RenderBuffers> frames;
  std::vector<LabelImage> masks;
  Rng rng(9);
  for (double t : {0.1, 0.4, 0.7, 0.95}) {
    frames.push_back(render(scene.set, scene.deform, scene.camera, t, opts).buffers);
    LabelImage m = LabelImage::zeros(24, 24);
    for (int& v : m.labels) v = static_cast<int>(rng() % 4);
    masks.push_back(m);
  }
  auto forward = IdentityAccumulator::create(30, 3), backward = IdentityAccumulator::create(30, 3);
  for (std::size_t f = 0; f < frames.size(); ++f) forward.accumulate(frames[f], masks[f]);
  for (std::size_t f = frames.size(); f-- > 0;) backward.accumulate(frames[f], masks[f]);

  for (Eigen::Index i = 0; i < 30; ++i) {
    CHECK(std::abs(forward.numerator.row(i).sum() + forward.background[i] - forward.denominator[i]) < 1e-9);
  }
  CHECK((forward.numerator - backward.numerator).cwiseAbs().maxCoeff() < 1e-12);
  const RowMatrix p = finalize(forward);
  for (Eigen::Index i = 0; i < 30; ++i) CHECK(std::abs(p.row(i).sum() - 1.0) < 1e-9);
}

TEST_CASE("exclusive evidence gives a one-hot identity; K = 1 is trivial") {
  auto scene = testing::random_scene(6, 20, 2, 24);
  scene.frame.mask.labels.assign(scene.frame.mask.labels.size(), 2);
  GaussianSet g = scene.set;
  const IdentityAccumulator acc = estimate_identities(g, scene.deform, single_frame(scene, 2));
  for (Eigen::Index i = 0; i < 20; ++i) {
    if (acc.denominator[i] > 0.0) {
      CHECK(g.base_identity(i, 1) == 1.0);
      CHECK(g.base_identity(i, 0) == 0.0);
    }
    CHECK(g.calibration_log.row(i).cwiseAbs().maxCoeff() == 0.0);
  }

  auto single = testing::random_scene(7, 20, 1, 24);
  GaussianSet h = single.set;
  estimate_identities(h, single.deform, single_frame(single, 1));
  CHECK((h.base_identity.array() == 1.0).all());
}

TEST_CASE("calibration receives gradient after estimation") {
  for (std::uint64_t seed = 40; seed < 44; ++seed) {
    auto scene = testing::random_scene(seed, 25, 2, 24);
    GaussianSet g = scene.set;
    estimate_identities(g, scene.deform, single_frame(scene, 2));
    Eigen::VectorXd grad;
    frame_loss(g, scene.deform, scene.camera, scene.frame, 1.0, &grad);
    const ParamLayout layout(g, scene.deform);
    int checked = 0;
    for (Eigen::Index i = 0; i < 25; ++i) {
      const bool participates = grad[static_cast<Eigen::Index>(layout.occupancy()) + i] != 0.0;
      const bool mixed = g.base_identity.row(i).maxCoeff() < 1.0 - 1e-9;
      if (!participates || !mixed) continue;
      const auto at = static_cast<Eigen::Index>(layout.calibration()) + 2 * i;
      CHECK(grad.segment(at, 2).cwiseAbs().maxCoeff() > 0.0);
      ++checked;
    }
    CHECK(checked > 0);
  }
}

TEST_CASE("two-blob scene recovers ownership") {
  Rng rng(0);
  const SynthScene synth = synth_scene(synth_preset("blobs2"), rng);
  GaussianSet g = synth.gaussians;
  const IdentityAccumulator acc = estimate_identities(g, synth.deform, synth.dataset);
  int considered = 0, correct = 0;
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(g.size()); ++i) {
    if (!(acc.denominator[i] > 0.1)) continue;
    Eigen::Index best = 0;
    g.base_identity.row(i).maxCoeff(&best);
    ++considered;
    correct += static_cast<int>(best + 1) == synth.owner[static_cast<std::size_t>(i)];
  }
  REQUIRE(considered > 0);
  CHECK(static_cast<double>(correct) / considered >= 0.95);
}

#include "doctest.h"

#include <algorithm>
#include <set>

#include "cif/error.hpp"
#include "cif/eval.hpp"
#include "cif/rng.hpp"

using namespace cif;
using doctest::Approx;

namespace {

RenderBuffers buffers(int w, int h, int k, std::vector<double> marginals, std::vector<double> residual) {
  RenderBuffers b;
  b.width = w;
  b.height = h;
  b.instances = k;
  b.marginals = std::move(marginals);
  b.residual = std::move(residual);
  return b;
}

// Naive set counting over one frame.
double naive_iou(const LabelImage& pred, const LabelImage& gt) {
  std::set<int> present(gt.labels.begin(), gt.labels.end());
  present.erase(0);
  if (present.empty()) return -1.0;
  double total = 0.0;
  for (int k : present) {
    std::set<std::size_t> a, b, both, any;
    for (std::size_t p = 0; p < gt.labels.size(); ++p) {
      if (pred.labels[p] == k) a.insert(p);
      if (gt.labels[p] == k) b.insert(p);
    }
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::inserter(both, both.end()));
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::inserter(any, any.end()));
    total += static_cast<double>(both.size()) / static_cast<double>(any.size());
  }
  return total / static_cast<double>(present.size());
}

LabelImage random_mask(Rng& rng, int w, int h, int k) {
  LabelImage m = LabelImage::zeros(w, h);
  for (int& v : m.labels) v = static_cast<int>(rng() % static_cast<std::uint64_t>(k + 1));
  return m;
}

}  // namespace

TEST_CASE("panoptic argmax") {
  CHECK(panoptic_map(buffers(2, 1, 2, {0, 0, 0, 0}, {1, 1})).labels == std::vector<int>{0, 0});
  CHECK(panoptic_map(buffers(1, 1, 3, {0.1, 0.6, 0.2}, {0.1})).labels == std::vector<int>{2});
  CHECK(panoptic_map(buffers(1, 1, 2, {0.4, 0.4}, {0.2})).labels == std::vector<int>{1});
  CHECK(panoptic_map(buffers(1, 1, 2, {0.3, 0.3}, {0.4})).labels == std::vector<int>{0});
}

TEST_CASE("pixel accuracy") {
  const LabelImage gt{2, 2, {0, 1, 1, 2}};
  CHECK(macc_pix({gt}, {gt}) == 1.0);
  const LabelImage pred{2, 2, {0, 1, 1, 1}};
  CHECK(macc_pix({pred}, {gt}) == 0.75);
  CHECK(macc_pix({gt, LabelImage{2, 1, {0, 1}}}, {gt, LabelImage{2, 1, {0, 0}}}) == 0.75);
  CHECK_THROWS_AS(macc_pix({LabelImage{1, 1, {0}}}, {gt}), Error);
}

TEST_CASE("instance accuracy weighs instances equally") {
  LabelImage gt = LabelImage::zeros(11, 10);
  for (int p = 0; p < 100; ++p) gt.labels[static_cast<std::size_t>(p)] = 1;
  for (int p = 100; p < 110; ++p) gt.labels[static_cast<std::size_t>(p)] = 2;
  LabelImage pred = gt;
  for (int p = 100; p < 110; ++p) pred.labels[static_cast<std::size_t>(p)] = 1;
  CHECK(macc_inst({gt}, {gt}) == 1.0);
  CHECK(macc_inst({pred}, {gt}) == 0.5);
  CHECK(macc_pix({pred}, {gt}) == Approx(100.0 / 110.0));
}

TEST_CASE("iou examples") {
  const LabelImage gt{2, 2, {1, 0, 1, 0}};
  const LabelImage pred{2, 2, {1, 1, 0, 0}};
  CHECK(miou({gt}, {gt}) == 1.0);
  CHECK(miou({pred}, {gt}) == Approx(1.0 / 3.0).epsilon(1e-15));
  const LabelImage two{2, 1, {1, 2}};
  const LabelImage only_one{2, 1, {1, 1}};
  const FrameMetrics m = frame_metrics(only_one, two);
  CHECK(m.instance_iou.at(2) == 0.0);
  CHECK(m.instance_iou.at(1) == 0.5);
}

TEST_CASE("frames without instances are excluded from instance means") {
  const LabelImage empty{2, 1, {0, 0}};
  const LabelImage gt{2, 1, {1, 0}};
  const MetricReport r = evaluate({LabelImage{2, 1, {1, 1}}, gt}, {empty, gt});
  CHECK_FALSE(r.per_frame[0].iou.has_value());
  CHECK(r.miou == 1.0);
  CHECK(r.macc_inst == 1.0);
  CHECK(r.macc_pix == 0.5);
}

TEST_CASE("metrics match a brute-force oracle") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const int w = 1 + static_cast<int>(rng() % 6), h = 1 + static_cast<int>(rng() % 6);
    const int k = 1 + static_cast<int>(rng() % 3);
    const LabelImage gt = random_mask(rng, w, h, k), pred = random_mask(rng, w, h, k);
    const double expect = naive_iou(pred, gt);
    const FrameMetrics m = frame_metrics(pred, gt);
    if (expect < 0.0) {
      CHECK_FALSE(m.iou.has_value());
    } else {
      REQUIRE(m.iou.has_value());
      CHECK(std::abs(*m.iou - expect) < 1e-12);
    }
  }
}

TEST_CASE("iou is symmetric when both masks carry the same instances") {
  Rng rng(18);
  int checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const LabelImage a = random_mask(rng, 5, 5, 2), b = random_mask(rng, 5, 5, 2);
    std::set<int> la(a.labels.begin(), a.labels.end()), lb(b.labels.begin(), b.labels.end());
    if (la != lb) continue;
    CHECK(std::abs(miou({a}, {b}) - miou({b}, {a})) < 1e-12);
    ++checked;
  }
  CHECK(checked > 100);
}

TEST_CASE("metrics are invariant to frame order and consistent relabeling") {
  Rng rng(19);
  std::vector<LabelImage> pred, gt;
  for (int f = 0; f < 6; ++f) {
    pred.push_back(random_mask(rng, 6, 6, 3));
    gt.push_back(random_mask(rng, 6, 6, 3));
  }
  const MetricReport base = evaluate(pred, gt);
  std::vector<LabelImage> rp(pred.rbegin(), pred.rend()), rg(gt.rbegin(), gt.rend());
  const MetricReport reversed = evaluate(rp, rg);
  CHECK(reversed.miou == Approx(base.miou).epsilon(1e-14));
  CHECK(reversed.macc_inst == Approx(base.macc_inst).epsilon(1e-14));
  CHECK(reversed.macc_pix == Approx(base.macc_pix).epsilon(1e-14));

  const int swap[] = {0, 3, 1, 2};
  for (auto* frames : {&pred, &gt}) {
    for (auto& m : *frames) {
      for (int& v : m.labels) v = swap[v];
    }
  }
  const MetricReport relabeled = evaluate(pred, gt);
  CHECK(relabeled.miou == Approx(base.miou).epsilon(1e-14));
  CHECK(relabeled.macc_inst == Approx(base.macc_inst).epsilon(1e-14));
  CHECK(relabeled.macc_pix == base.macc_pix);
}

TEST_CASE("report formatting") {
  const LabelImage gt{2, 1, {1, 0}};
  const MetricReport r = evaluate({gt}, {gt});
  const std::string kv = format_key_values(r);
  CHECK(kv.find("miou = 1") != std::string::npos);
  CHECK(kv.find("instance.1.iou = 1") != std::string::npos);
  CHECK(kv.find("frames = 1") != std::string::npos);
  CHECK_FALSE(format_table(r).empty());
}

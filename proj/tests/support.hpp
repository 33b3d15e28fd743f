#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include <Eigen/Core>

#include "cif/core.hpp"
#include "cif/data.hpp"
#include "cif/deform.hpp"
#include "cif/gaussians.hpp"
#include "cif/rng.hpp"
#include "cif/splat.hpp"

namespace cif::testing {

struct RandomScene {
  GaussianSet set;
  DeformationField deform;
  Camera camera;
  FrameObservation frame;
};

inline DeformConfig small_deform() { return {2, 2, {12}}; }

/// Random primitives in front of a look-at camera, a small random
/// deformation network and a random target frame.
inline RandomScene random_scene(std::uint64_t seed, int n = 30, int k = 2, int size = 32,
                                DeformConfig config = small_deform()) {
  Rng rng(seed);
  RandomScene s;
  s.set = GaussianSet::create(static_cast<std::size_t>(n), static_cast<std::size_t>(k));
  for (int i = 0; i < n; ++i) {
    s.set.position.row(i) << rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7), rng.uniform(-0.4, 0.4);
    Eigen::Vector4d q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    s.set.rotation.row(i) = q.normalized().transpose();
    for (int a = 0; a < 3; ++a) s.set.log_scale(i, a) = std::log(rng.uniform(0.08, 0.25));
    for (int a = 0; a < 3; ++a) s.set.color(i, a) = rng.uniform(0.1, 0.9);
    s.set.opacity_logit[i] = rng.uniform(-1.5, 1.5);
    s.set.occupancy_logit[i] = rng.uniform(-1.5, 1.5);
    double total = 0.0;
    for (int j = 0; j < k; ++j) total += (s.set.base_identity(i, j) = rng.uniform(0.05, 1.0));
    s.set.base_identity.row(i) /= total;
    for (int j = 0; j < k; ++j) s.set.calibration_log(i, j) = 0.3 * rng.normal();
  }
  s.deform = DeformationField::create(config, rng);
  auto& out = s.deform.layers().back();
  for (Eigen::Index r = 0; r < out.weight.rows(); ++r) {
    for (Eigen::Index c = 0; c < out.weight.cols(); ++c) out.weight(r, c) = 0.03 * rng.normal();
    out.bias[r] = 0.02 * rng.normal();
  }
  s.camera = Camera::look_at({0.3, -0.2, -3.0}, {0.0, 0.0, 0.0}, {0.0, -1.0, 0.0}, 1.1 * size, size, size);
  s.frame.time = rng.uniform(0.1, 0.9);
  s.frame.rgb = RgbImage::zeros(size, size);
  for (double& v : s.frame.rgb.data) v = rng.uniform();
  s.frame.mask = LabelImage::zeros(size, size);
  for (int& v : s.frame.mask.labels) v = static_cast<int>(rng() % static_cast<std::uint64_t>(k + 1));
  return s;
}

/// Central finite differences of `f` over every packed parameter.
inline Eigen::VectorXd numeric_gradient(const GaussianSet& set, const DeformationField& deform,
                                        const std::function<double(const GaussianSet&, const DeformationField&)>& f,
                                        double h = 1e-5) {
  const Eigen::VectorXd base = pack_parameters(set, deform);
  Eigen::VectorXd grad(base.size());
  GaussianSet s = set;
  DeformationField d = deform;
  for (Eigen::Index j = 0; j < base.size(); ++j) {
    Eigen::VectorXd x = base;
    x[j] = base[j] + h;
    unpack_parameters(x, s, d);
    const double up = f(s, d);
    x[j] = base[j] - h;
    unpack_parameters(x, s, d);
    const double down = f(s, d);
    grad[j] = (up - down) / (2.0 * h);
  }
  return grad;
}

/// Everything that makes the loss piecewise: composited-term counts (skip
/// thresholds, early exits, culling), ReLU activation pattern, L1 signs and the
/// probability floor of the instance loss. Central differences are only
/// meaningful while this stays fixed.
struct Signature {
  std::vector<int> color_terms, instance_terms;
  std::vector<char> relu, l1, floor;

  bool operator==(const Signature&) const = default;
};

inline Signature signature(const GaussianSet& set, const DeformationField& deform, const Camera& camera,
                           const FrameObservation& frame) {
  Signature sig;
  const RenderBuffers b = render_reference(set, deform, camera, frame.time);
  sig.color_terms = b.color_terms;
  sig.instance_terms = b.instance_terms;
  const DeformedState state = deform_forward(deform, set, frame.time);
  for (const RowMatrix& a : state.cache.activations) {
    for (Eigen::Index i = 0; i < a.size(); ++i) sig.relu.push_back(a.data()[i] > 0.0);
  }
  for (std::size_t i = 0; i < b.color.size(); ++i) {
    const double d = b.color[i] - frame.rgb.data[i];
    sig.l1.push_back(static_cast<char>((d > 0.0) - (d < 0.0)));
  }
  for (std::size_t p = 0; p < b.pixels(); ++p) {
    const int label = frame.mask.labels[p];
    const double q = label == 0 ? b.residual[p] : b.marginal(p, label);
    sig.floor.push_back(q > 1e-8);
  }
  return sig;
}

/// True when perturbing packed parameter `j` by +-h changes the signature.
inline bool kinked(const GaussianSet& set, const DeformationField& deform, const Camera& camera,
                   const FrameObservation& frame, Eigen::Index j, double h = 1e-5) {
  const Signature base = signature(set, deform, camera, frame);
  const Eigen::VectorXd x0 = pack_parameters(set, deform);
  GaussianSet s = set;
  DeformationField d = deform;
  for (double step : {h, -h}) {
    Eigen::VectorXd x = x0;
    x[j] += step;
    unpack_parameters(x, s, d);
    if (!(signature(s, d, camera, frame) == base)) return true;
  }
  return false;
}

inline double relative_error(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = a.size() == b.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace cif::testing

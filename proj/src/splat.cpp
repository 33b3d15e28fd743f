#include "cif/splat.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "cif/error.hpp"

namespace cif {

namespace {

Eigen::Matrix3d quaternion_to_matrix(const Eigen::Vector4d& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Eigen::Matrix3d r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

// d L / d q for R(q) with q treated as already normalized.
Eigen::Vector4d quaternion_backward(const Eigen::Vector4d& q, const Eigen::Matrix3d& g) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Eigen::Vector4d d;
  d[0] = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
  d[1] = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) +
              w * g(2, 1) - 2 * x * g(2, 2));
  d[2] = 2 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) +
              z * g(2, 1) - 2 * y * g(2, 2));
  d[3] = 2 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1) + y * g(1, 2) +
              x * g(2, 0) + y * g(2, 1));
  return d;
}

Eigen::Matrix<double, 2, 3> projection_jacobian(const Camera& camera, const Eigen::Vector3d& pc) {
  const double inv_z = 1.0 / pc.z();
  Eigen::Matrix<double, 2, 3> j;
  j << camera.fx * inv_z, 0.0, -camera.fx * pc.x() * inv_z * inv_z,
      0.0, camera.fy * inv_z, -camera.fy * pc.y() * inv_z * inv_z;
  return j;
}

bool splat_less(const Splat2D& a, const Splat2D& b) {
  return a.depth < b.depth || (a.depth == b.depth && a.index < b.index);
}

struct PixelBox {
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;
};

// Kernel exponent above which peak * P is certainly below the skip threshold.
// The relative margin absorbs rounding in exp and log.
double skip_exponent(double peak) {
  if (!(peak > kSkipThreshold)) return -1.0;
  return 2.0 * std::log(peak / kSkipThreshold) * (1.0 + 1e-9) + 1e-9;
}

// Pixels outside this box cannot pass the skip threshold on either path.
PixelBox influence_box(const Splat2D& s, double peak, int width, int height) {
  PixelBox box;
  if (!(peak > kSkipThreshold)) return box;
  const double c = 2.0 * std::log(peak / kSkipThreshold);
  const double ex = std::sqrt(c * s.cov(0, 0));
  const double ey = std::sqrt(c * s.cov(1, 1));
  box.x0 = std::max(0, static_cast<int>(std::floor(s.mean.x() - ex)) - 1);
  box.x1 = std::min(width - 1, static_cast<int>(std::ceil(s.mean.x() + ex)) + 1);
  box.y0 = std::max(0, static_cast<int>(std::floor(s.mean.y() - ey)) - 1);
  box.y1 = std::min(height - 1, static_cast<int>(std::ceil(s.mean.y() + ey)) + 1);
  return box;
}

void allocate(RenderBuffers& b, const Camera& camera, int k, bool contributions) {
  b.width = camera.width;
  b.height = camera.height;
  b.instances = k;
  const std::size_t pixels = b.pixels();
  b.color.assign(pixels * 3, 0.0);
  b.marginals.assign(pixels * static_cast<std::size_t>(k), 0.0);
  b.residual.assign(pixels, 1.0);
  b.transmittance.assign(pixels, 1.0);
  b.color_terms.assign(pixels, 0);
  b.instance_terms.assign(pixels, 0);
  b.contributions.clear();
  if (contributions) b.contributions.resize(pixels);
}

// Front-to-back compositing of one pixel over `order` (positions into
// pass.splats). Shared skip and early-exit rules on both paths.
void shade_pixel(const RenderPass& pass, const std::vector<int>& order, int px, int py, RenderBuffers& out,
                 std::vector<std::pair<int, double>>& scratch) {
  const std::size_t pixel = static_cast<std::size_t>(py) * static_cast<std::size_t>(out.width) +
                            static_cast<std::size_t>(px);
  const int k = out.instances;
  double* color = &out.color[pixel * 3];
  double* marginal = k > 0 ? &out.marginals[pixel * static_cast<std::size_t>(k)] : nullptr;
  const bool want_contrib = !out.contributions.empty();
  scratch.clear();

  double trans = 1.0;
  double inst_trans = 1.0;
  bool photo_done = false;
  bool inst_done = false;
  for (int pos : order) {
    const Splat2D& s = pass.splats[static_cast<std::size_t>(pos)];
    const double q = kernel_exponent(s, px, py);
    if (q > pass.cutoff[static_cast<std::size_t>(pos)]) continue;
    const double p = std::exp(-0.5 * q);
    if (!photo_done) {
      const double a = pass.opacity[s.index] * p;
      if (a >= kSkipThreshold) {
        const double w = trans * a;
        for (int c = 0; c < 3; ++c) color[c] += w * pass.color(s.index, c);
        if (want_contrib) scratch.emplace_back(s.index, w);
        ++out.color_terms[pixel];
        trans *= 1.0 - a;
        if (trans < kTransmittanceFloor) photo_done = true;
      }
    }
    if (!inst_done) {
      const double b = pass.occupancy[s.index] * p;
      if (b >= kSkipThreshold) {
        const double w = inst_trans * b;
        for (int c = 0; c < k; ++c) marginal[c] += w * pass.identity(s.index, c);
        ++out.instance_terms[pixel];
        inst_trans *= 1.0 - b;
        if (inst_trans < kTransmittanceFloor) inst_done = true;
      }
    }
    if (photo_done && inst_done) break;
  }
  out.transmittance[pixel] = trans;
  out.residual[pixel] = inst_trans;
  if (want_contrib && !scratch.empty()) {
    double total = 0.0;
    for (const auto& [idx, w] : scratch) total += w;
    auto& list = out.contributions[pixel];
    list.reserve(scratch.size());
    for (const auto& [idx, w] : scratch) list.push_back({idx, w / total});
  }
}

}  // namespace

Camera Camera::look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, const Eigen::Vector3d& up,
                       double focal, int width, int height) {
  const Eigen::Vector3d forward = (target - eye).normalized();
  const Eigen::Vector3d right = forward.cross(up).normalized();
  const Eigen::Vector3d down = forward.cross(right);
  Camera cam;
  cam.rotation.row(0) = right.transpose();
  cam.rotation.row(1) = down.transpose();
  cam.rotation.row(2) = forward.transpose();
  cam.translation = -cam.rotation * eye;
  cam.fx = focal;
  cam.fy = focal;
  cam.cx = 0.5 * (width - 1);
  cam.cy = 0.5 * (height - 1);
  cam.width = width;
  cam.height = height;
  return cam;
}

Eigen::Matrix<double, 3, 4> Camera::extrinsic() const {
  Eigen::Matrix<double, 3, 4> m;
  m.leftCols<3>() = rotation;
  m.col(3) = translation;
  return m;
}

void Camera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) fail(ErrorCode::Data, "camera focal lengths must be positive");
  if (width <= 0 || height <= 0) fail(ErrorCode::Data, "camera image size must be positive");
  if (!rotation.allFinite() || !translation.allFinite() || !std::isfinite(cx) || !std::isfinite(cy)) {
    fail(ErrorCode::Data, "camera parameters are not finite");
  }
  if ((rotation * rotation.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9) {
    fail(ErrorCode::Data, "camera rotation is not orthonormal");
  }
}

std::optional<Splat2D> project(const Eigen::Vector3d& mean, const Eigen::Vector4d& rotation,
                               const Eigen::Vector3d& scale, const Camera& camera, int index) {
  if (!mean.allFinite() || !rotation.allFinite() || !scale.allFinite()) {
    fail(ErrorCode::Numeric, "non-finite primitive passed to project");
  }
  const Eigen::Vector3d pc = camera.rotation * mean + camera.translation;
  if (pc.z() <= kNearPlane) return std::nullopt;

  const Eigen::Matrix<double, 2, 3> t = projection_jacobian(camera, pc) * camera.rotation;
  const Eigen::Matrix3d m = quaternion_to_matrix(rotation) * scale.asDiagonal();
  const Eigen::Matrix<double, 2, 3> tm = t * m;

  Splat2D s;
  s.index = index;
  s.depth = pc.z();
  s.mean = {camera.fx * pc.x() / pc.z() + camera.cx, camera.fy * pc.y() / pc.z() + camera.cy};
  s.cov = tm * tm.transpose();
  s.cov(0, 0) += kCovarianceFloor;
  s.cov(1, 1) += kCovarianceFloor;
  const double det = s.cov(0, 0) * s.cov(1, 1) - s.cov(0, 1) * s.cov(1, 0);
  if (!(det > 0.0) || !std::isfinite(det)) fail(ErrorCode::Numeric, "projected covariance is singular");
  s.conic << s.cov(1, 1) / det, -s.cov(0, 1) / det, -s.cov(1, 0) / det, s.cov(0, 0) / det;

  const double ex = 3.0 * std::sqrt(s.cov(0, 0));
  const double ey = 3.0 * std::sqrt(s.cov(1, 1));
  if (s.mean.x() + ex < 0.0 || s.mean.x() - ex > camera.width - 1 || s.mean.y() + ey < 0.0 ||
      s.mean.y() - ey > camera.height - 1) {
    return std::nullopt;
  }
  return s;
}

Rendered render(const GaussianSet& set, const DeformationField& deform, const Camera& camera, double t,
                const RenderOptions& options) {
  camera.validate();
  const auto n = static_cast<Eigen::Index>(set.size());
  const int k = static_cast<int>(set.instances());

  Rendered result;
  RenderPass& pass = result.pass;
  pass.deformed = deform_forward(deform, set, t, true);
  pass.opacity = set.opacity_logit.unaryExpr([](double v) { return sigmoid(v); });
  pass.occupancy = set.occupancy_logit.unaryExpr([](double v) { return sigmoid(v); });
  pass.identity = effective_identities(set);
  pass.color = set.color;

  for (Eigen::Index i = 0; i < n; ++i) {
    auto s = project(pass.deformed.position.row(i).transpose(), pass.deformed.rotation.row(i).transpose(),
                     pass.deformed.scale.row(i).transpose(), camera, static_cast<int>(i));
    if (s) pass.splats.push_back(*s);
  }
  std::sort(pass.splats.begin(), pass.splats.end(), splat_less);

  pass.cutoff.resize(pass.splats.size());
  for (std::size_t pos = 0; pos < pass.splats.size(); ++pos) {
    const int i = pass.splats[pos].index;
    pass.cutoff[pos] = skip_exponent(std::max(pass.opacity[i], pass.occupancy[i]));
  }

  pass.tiles_x = (camera.width + kTileSize - 1) / kTileSize;
  pass.tiles_y = (camera.height + kTileSize - 1) / kTileSize;
  pass.tiles.assign(static_cast<std::size_t>(pass.tiles_x * pass.tiles_y), {});
  for (std::size_t pos = 0; pos < pass.splats.size(); ++pos) {
    const Splat2D& s = pass.splats[pos];
    const PixelBox box = influence_box(s, std::max(pass.opacity[s.index], pass.occupancy[s.index]),
                                       camera.width, camera.height);
    if (box.x1 < box.x0 || box.y1 < box.y0) continue;
    for (int ty = box.y0 / kTileSize; ty <= box.y1 / kTileSize; ++ty) {
      for (int tx = box.x0 / kTileSize; tx <= box.x1 / kTileSize; ++tx) {
        pass.tiles[static_cast<std::size_t>(ty * pass.tiles_x + tx)].push_back(static_cast<int>(pos));
      }
    }
  }

  RenderBuffers& out = result.buffers;
  allocate(out, camera, k, options.contributions);
  out.depth_order.reserve(pass.splats.size());
  for (const auto& s : pass.splats) out.depth_order.push_back(s.index);

  const int tile_count = pass.tiles_x * pass.tiles_y;
#pragma omp parallel
  {
    std::vector<std::pair<int, double>> scratch;
#pragma omp for schedule(dynamic)
    for (int tile = 0; tile < tile_count; ++tile) {
      const int tx = tile % pass.tiles_x;
      const int ty = tile / pass.tiles_x;
      const auto& order = pass.tiles[static_cast<std::size_t>(tile)];
      for (int py = ty * kTileSize; py < std::min(camera.height, (ty + 1) * kTileSize); ++py) {
        for (int px = tx * kTileSize; px < std::min(camera.width, (tx + 1) * kTileSize); ++px) {
          shade_pixel(pass, order, px, py, out, scratch);
        }
      }
    }
  }
  pass.valid = true;
  return result;
}

RenderBuffers render_reference(const GaussianSet& set, const DeformationField& deform, const Camera& camera,
                               double t, const RenderOptions& options) {
  camera.validate();
  const int k = static_cast<int>(set.instances());
  const DeformedState state = deform_forward(deform, set, t, false);
  const RowMatrix identity = effective_identities(set);

  std::vector<Splat2D> splats;
  for (Eigen::Index i = 0; i < state.position.rows(); ++i) {
    auto s = project(state.position.row(i).transpose(), state.rotation.row(i).transpose(),
                     state.scale.row(i).transpose(), camera, static_cast<int>(i));
    if (s) splats.push_back(*s);
  }
  std::sort(splats.begin(), splats.end(), splat_less);

  RenderBuffers out;
  allocate(out, camera, k, options.contributions);
  for (const auto& s : splats) out.depth_order.push_back(s.index);

  for (int py = 0; py < camera.height; ++py) {
    for (int px = 0; px < camera.width; ++px) {
      const std::size_t pixel = static_cast<std::size_t>(py * camera.width + px);
      double trans = 1.0;
      double inst_trans = 1.0;
      std::vector<Contribution> weights;
      for (const Splat2D& s : splats) {
        const auto i = static_cast<std::size_t>(s.index);
        const double p = kernel_weight(s, px, py);
        const double a = set.opacity(i) * p;
        if (trans >= kTransmittanceFloor && a >= kSkipThreshold) {
          for (int c = 0; c < 3; ++c) out.color[pixel * 3 + c] += trans * a * set.color(s.index, c);
          weights.push_back({s.index, trans * a});
          ++out.color_terms[pixel];
          trans *= 1.0 - a;
        }
        const double b = set.occupancy(i) * p;
        if (inst_trans >= kTransmittanceFloor && b >= kSkipThreshold) {
          for (int c = 0; c < k; ++c) {
            out.marginals[pixel * static_cast<std::size_t>(k) + c] += inst_trans * b * identity(s.index, c);
          }
          ++out.instance_terms[pixel];
          inst_trans *= 1.0 - b;
        }
      }
      out.transmittance[pixel] = trans;
      out.residual[pixel] = inst_trans;
      if (options.contributions) {
        double total = 0.0;
        for (const auto& w : weights) total += w.weight;
        for (auto& w : weights) w.weight /= total;
        out.contributions[pixel] = std::move(weights);
      }
    }
  }
  return out;
}

RenderUpstream RenderUpstream::zeros(const RenderBuffers& buffers) {
  RenderUpstream up;
  up.color.assign(buffers.color.size(), 0.0);
  up.marginals.assign(buffers.marginals.size(), 0.0);
  up.residual.assign(buffers.residual.size(), 0.0);
  return up;
}

namespace {

// Screen-space gradient slots per splat; identity gradients follow.
enum Slot { kMeanX, kMeanY, kConic00, kConic01, kConic11, kOpacity, kOccupancy, kColorR, kColorG, kColorB, kSlots };

struct Term {
  int local = 0;
  double kernel = 0.0;
  double dx = 0.0;
  double dy = 0.0;
  double a = -1.0;  // alpha * P, negative when skipped on the color path
  double trans = 0.0;
  double b = -1.0;  // pi * P, negative when skipped on the instance path
  double inst_trans = 0.0;
};

}  // namespace

Eigen::VectorXd render_backward(const GaussianSet& set, const DeformationField& deform, const Camera& camera,
                                const Rendered& rendered, const RenderUpstream& upstream) {
  const RenderPass& pass = rendered.pass;
  const RenderBuffers& buffers = rendered.buffers;
  if (!pass.valid) fail(ErrorCode::Usage, "render_backward needs a cached forward pass");
  if (upstream.color.size() != buffers.color.size() || upstream.marginals.size() != buffers.marginals.size() ||
      upstream.residual.size() != buffers.residual.size()) {
    fail(ErrorCode::Structural, "upstream gradient buffers do not match the render");
  }
  const int k = buffers.instances;
  const int stride = kSlots + k;
  const int width = buffers.width;
  const int height = buffers.height;
  const int tile_count = pass.tiles_x * pass.tiles_y;

  // Per-tile accumulation, reduced in tile order below: the result does not
  // depend on how tiles are scheduled across workers.
  std::vector<std::vector<double>> tile_grads(static_cast<std::size_t>(tile_count));
#pragma omp parallel
  {
    std::vector<Term> terms;
#pragma omp for schedule(dynamic)
    for (int tile = 0; tile < tile_count; ++tile) {
      const auto& order = pass.tiles[static_cast<std::size_t>(tile)];
      auto& grad = tile_grads[static_cast<std::size_t>(tile)];
      grad.assign(order.size() * static_cast<std::size_t>(stride), 0.0);
      if (order.empty()) continue;
      const int tx = tile % pass.tiles_x;
      const int ty = tile / pass.tiles_x;
      for (int py = ty * kTileSize; py < std::min(height, (ty + 1) * kTileSize); ++py) {
        for (int px = tx * kTileSize; px < std::min(width, (tx + 1) * kTileSize); ++px) {
          const std::size_t pixel = static_cast<std::size_t>(py * width + px);
          const double* g_color = &upstream.color[pixel * 3];
          const double* g_marg = k > 0 ? &upstream.marginals[pixel * static_cast<std::size_t>(k)] : nullptr;
          const double g_res = upstream.residual[pixel];

          // Replay the forward recurrence, recording every composited term.
          terms.clear();
          double trans = 1.0;
          double inst_trans = 1.0;
          bool photo_done = false;
          bool inst_done = false;
          for (std::size_t j = 0; j < order.size(); ++j) {
            const Splat2D& s = pass.splats[static_cast<std::size_t>(order[j])];
            const double q = kernel_exponent(s, px, py);
            if (q > pass.cutoff[static_cast<std::size_t>(order[j])]) continue;
            const double p = std::exp(-0.5 * q);
            Term term;
            term.local = static_cast<int>(j);
            term.kernel = p;
            term.dx = px - s.mean.x();
            term.dy = py - s.mean.y();
            bool used = false;
            if (!photo_done) {
              const double a = pass.opacity[s.index] * p;
              if (a >= kSkipThreshold) {
                term.a = a;
                term.trans = trans;
                trans *= 1.0 - a;
                if (trans < kTransmittanceFloor) photo_done = true;
                used = true;
              }
            }
            if (!inst_done) {
              const double b = pass.occupancy[s.index] * p;
              if (b >= kSkipThreshold) {
                term.b = b;
                term.inst_trans = inst_trans;
                inst_trans *= 1.0 - b;
                if (inst_trans < kTransmittanceFloor) inst_done = true;
                used = true;
              }
            }
            if (used) terms.push_back(term);
            if (photo_done && inst_done) break;
          }

          // Back to front. `behind` is the color composited behind the current
          // term normalized by the transmittance just past it; `inst_behind`
          // is the same for the instance loss signal, seeded with the
          // residual's gradient.
          Eigen::Vector3d behind = Eigen::Vector3d::Zero();
          double inst_behind = g_res;
          for (auto it = terms.rbegin(); it != terms.rend(); ++it) {
            const Term& term = *it;
            const Splat2D& s = pass.splats[static_cast<std::size_t>(order[static_cast<std::size_t>(term.local)])];
            double* g = &grad[static_cast<std::size_t>(term.local) * static_cast<std::size_t>(stride)];
            double g_kernel = 0.0;
            if (term.a >= 0.0) {
              const Eigen::Vector3d c = pass.color.row(s.index).transpose();
              double g_a = 0.0;
              for (int ch = 0; ch < 3; ++ch) {
                g[kColorR + ch] += term.trans * term.a * g_color[ch];
                g_a += g_color[ch] * (c[ch] - behind[ch]);
              }
              g_a *= term.trans;
              behind = term.a * c + (1.0 - term.a) * behind;
              g[kOpacity] += g_a * term.kernel;
              g_kernel += g_a * pass.opacity[s.index];
            }
            if (term.b >= 0.0) {
              double signal = 0.0;
              for (int c = 0; c < k; ++c) {
                signal += g_marg[c] * pass.identity(s.index, c);
                g[kSlots + c] += term.inst_trans * term.b * g_marg[c];
              }
              const double g_b = term.inst_trans * (signal - inst_behind);
              inst_behind = term.b * signal + (1.0 - term.b) * inst_behind;
              g[kOccupancy] += g_b * term.kernel;
              g_kernel += g_b * pass.occupancy[s.index];
            }
            if (g_kernel != 0.0) {
              const double gp = g_kernel * term.kernel;
              g[kMeanX] += gp * (s.conic(0, 0) * term.dx + s.conic(0, 1) * term.dy);
              g[kMeanY] += gp * (s.conic(1, 0) * term.dx + s.conic(1, 1) * term.dy);
              g[kConic00] += -0.5 * gp * term.dx * term.dx;
              g[kConic01] += -gp * term.dx * term.dy;
              g[kConic11] += -0.5 * gp * term.dy * term.dy;
            }
          }
        }
      }
    }
  }

  // Reduce into per-splat totals in tile order.
  const std::size_t splat_count = pass.splats.size();
  std::vector<double> splat_grad(splat_count * static_cast<std::size_t>(stride), 0.0);
  for (int tile = 0; tile < tile_count; ++tile) {
    const auto& order = pass.tiles[static_cast<std::size_t>(tile)];
    const auto& grad = tile_grads[static_cast<std::size_t>(tile)];
    for (std::size_t j = 0; j < order.size(); ++j) {
      double* dst = &splat_grad[static_cast<std::size_t>(order[j]) * static_cast<std::size_t>(stride)];
      const double* src = &grad[j * static_cast<std::size_t>(stride)];
      for (int c = 0; c < stride; ++c) dst[c] += src[c];
    }
  }

  const auto n = static_cast<Eigen::Index>(set.size());
  const ParamLayout layout(set, deform);
  Eigen::VectorXd packed = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.total()));
  RowMatrix g_position = RowMatrix::Zero(n, 3);
  RowMatrix g_rotation = RowMatrix::Zero(n, 4);
  RowMatrix g_scale = RowMatrix::Zero(n, 3);
  RowMatrix g_identity = RowMatrix::Zero(n, k);

  const DeformedState& state = pass.deformed;
#pragma omp parallel for schedule(static)
  for (std::size_t pos = 0; pos < splat_count; ++pos) {
    const Splat2D& s = pass.splats[pos];
    const Eigen::Index i = s.index;
    const double* g = &splat_grad[pos * static_cast<std::size_t>(stride)];

    const auto ii = static_cast<Eigen::Index>(i);
    packed[static_cast<Eigen::Index>(layout.opacity()) + ii] = g[kOpacity] * pass.opacity[i] * (1.0 - pass.opacity[i]);
    packed[static_cast<Eigen::Index>(layout.occupancy()) + ii] =
        g[kOccupancy] * pass.occupancy[i] * (1.0 - pass.occupancy[i]);
    for (int c = 0; c < 3; ++c) packed[static_cast<Eigen::Index>(layout.color() + 3 * i) + c] = g[kColorR + c];
    for (int c = 0; c < k; ++c) g_identity(i, c) = g[kSlots + c];

    // Conic -> covariance -> (camera-space mean, 3D covariance) -> geometry.
    Eigen::Matrix2d g_conic;
    g_conic << g[kConic00], 0.5 * g[kConic01], 0.5 * g[kConic01], g[kConic11];
    const Eigen::Matrix2d g_cov = -s.conic * g_conic * s.conic;

    const Eigen::Vector3d mean = state.position.row(i).transpose();
    const Eigen::Vector4d quat = state.rotation.row(i).transpose();
    const Eigen::Vector3d scale = state.scale.row(i).transpose();
    const Eigen::Vector3d pc = camera.rotation * mean + camera.translation;
    const Eigen::Matrix<double, 2, 3> jac = projection_jacobian(camera, pc);
    const Eigen::Matrix<double, 2, 3> t = jac * camera.rotation;
    const Eigen::Matrix3d rot = quaternion_to_matrix(quat);
    const Eigen::Matrix3d m = rot * scale.asDiagonal();
    const Eigen::Matrix3d sigma = m * m.transpose();

    const Eigen::Matrix<double, 2, 3> g_t = 2.0 * g_cov * t * sigma;
    const Eigen::Matrix3d g_sigma = t.transpose() * g_cov * t;
    const Eigen::Matrix<double, 2, 3> g_jac = g_t * camera.rotation.transpose();
    const Eigen::Matrix3d g_m = 2.0 * g_sigma * m;

    Eigen::Matrix3d g_rot;
    Eigen::Vector3d g_s;
    for (int c = 0; c < 3; ++c) {
      g_rot.col(c) = g_m.col(c) * scale[c];
      g_s[c] = g_m.col(c).dot(rot.col(c));
    }

    const double inv_z = 1.0 / pc.z();
    const double inv_z2 = inv_z * inv_z;
    Eigen::Vector3d g_pc;
    g_pc.x() = g[kMeanX] * camera.fx * inv_z - g_jac(0, 2) * camera.fx * inv_z2;
    g_pc.y() = g[kMeanY] * camera.fy * inv_z - g_jac(1, 2) * camera.fy * inv_z2;
    g_pc.z() = -g[kMeanX] * camera.fx * pc.x() * inv_z2 - g[kMeanY] * camera.fy * pc.y() * inv_z2 -
               g_jac(0, 0) * camera.fx * inv_z2 + g_jac(0, 2) * 2.0 * camera.fx * pc.x() * inv_z2 * inv_z -
               g_jac(1, 1) * camera.fy * inv_z2 + g_jac(1, 2) * 2.0 * camera.fy * pc.y() * inv_z2 * inv_z;

    g_position.row(i) = (camera.rotation.transpose() * g_pc).transpose();
    g_rotation.row(i) = quaternion_backward(quat, g_rot).transpose();
    g_scale.row(i) = g_s.transpose();
  }

  Eigen::RowVectorXd g_base(k);
  Eigen::RowVectorXd g_calib(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (k == 0) break;
    g_base.setZero();
    g_calib.setZero();
    effective_identity_backward(set.base_identity.row(i), set.calibration_log.row(i), g_identity.row(i), g_base,
                                g_calib);
    packed.segment(static_cast<Eigen::Index>(layout.base_identity()) + i * k, k) = g_base.transpose();
    packed.segment(static_cast<Eigen::Index>(layout.calibration()) + i * k, k) = g_calib.transpose();
  }

  const DeformGradients dg = deform_backward(deform, set, state, g_position, g_rotation, g_scale);
  packed.segment(static_cast<Eigen::Index>(layout.position()), 3 * n) = dg.position.reshaped<Eigen::RowMajor>();
  packed.segment(static_cast<Eigen::Index>(layout.rotation()), 4 * n) = dg.rotation.reshaped<Eigen::RowMajor>();
  packed.segment(static_cast<Eigen::Index>(layout.log_scale()), 3 * n) = dg.log_scale.reshaped<Eigen::RowMajor>();
  packed.tail(static_cast<Eigen::Index>(layout.deform)) = dg.weights;
  return packed;
}

}  // namespace cif

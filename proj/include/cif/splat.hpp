#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "cif/core.hpp"
#include "cif/deform.hpp"
#include "cif/gaussians.hpp"

namespace cif {

inline constexpr double kSkipThreshold = 1e-4;         // alpha*P / pi*P below this are skipped
inline constexpr double kTransmittanceFloor = 1e-4;    // compositing stops below this
inline constexpr double kNearPlane = 0.01;
inline constexpr double kCovarianceFloor = 0.3;        // px^2 added to projected covariance
inline constexpr int kTileSize = 16;

/// Pinhole camera. `rotation`/`translation` map world to camera coordinates;
/// the camera looks down +z with x right and y down. Pixel (u, v) is sampled
/// at coordinates (u, v).
struct Camera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  int width = 0;
  int height = 0;

  static Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                        const Eigen::Vector3d& up, double focal, int width, int height);

  /// Row-major 3x4 [R | t].
  Eigen::Matrix<double, 3, 4> extrinsic() const;

  void validate() const;
};

struct Splat2D {
  Eigen::Vector2d mean;
  Eigen::Matrix2d cov;    // includes the covariance floor
  Eigen::Matrix2d conic;  // inverse of cov
  double depth = 0.0;
  int index = -1;
};

/// EWA projection of one deformed primitive. Returns nullopt when the
/// primitive is culled (behind the near plane or its 3-sigma box misses the
/// image).
std::optional<Splat2D> project(const Eigen::Vector3d& mean, const Eigen::Vector4d& rotation,
                               const Eigen::Vector3d& scale, const Camera& camera, int index = -1);

/// Mahalanobis distance squared of pixel (px, py) from a splat's mean.
inline double kernel_exponent(const Splat2D& s, double px, double py) {
  const double dx = px - s.mean.x();
  const double dy = py - s.mean.y();
  return s.conic(0, 0) * dx * dx + 2.0 * s.conic(0, 1) * dx * dy + s.conic(1, 1) * dy * dy;
}

/// Peak-1 kernel value of a splat at pixel coordinates (px, py).
inline double kernel_weight(const Splat2D& s, double px, double py) {
  return std::exp(-0.5 * kernel_exponent(s, px, py));
}

struct Contribution {
  int gaussian = -1;
  double weight = 0.0;
};

/// Per-pixel outputs of one rasterization pass. Pixel p = y * width + x.
struct RenderBuffers {
  int width = 0;
  int height = 0;
  int instances = 0;
  std::vector<double> color;          // H*W*3
  std::vector<double> marginals;      // H*W*K, instance k at p*K + k-1
  std::vector<double> residual;       // H*W, instance-path transmittance (background)
  std::vector<double> transmittance;  // H*W, photometric transmittance
  std::vector<int> color_terms;       // H*W, splats composited on the color path
  std::vector<int> instance_terms;    // H*W, splats composited on the instance path
  std::vector<std::vector<Contribution>> contributions;  // H*W when requested
  std::vector<int> depth_order;       // visible primitives, front to back

  std::size_t pixels() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
  double marginal(std::size_t pixel, int instance) const {
    return marginals[pixel * static_cast<std::size_t>(instances) + static_cast<std::size_t>(instance - 1)];
  }
};

struct RenderOptions {
  bool contributions = false;
};

/// Everything render_backward needs from the forward pass.
struct RenderPass {
  bool valid = false;
  DeformedState deformed;
  std::vector<Splat2D> splats;  // depth order
  std::vector<double> cutoff;   // per splat: beyond this exponent both paths skip it
  Eigen::VectorXd opacity;      // per primitive
  Eigen::VectorXd occupancy;
  RowMatrix color;              // N x 3
  RowMatrix identity;           // calibrated, N x K
  int tiles_x = 0;
  int tiles_y = 0;
  std::vector<std::vector<int>> tiles;  // positions into `splats`, depth order
};

struct Rendered {
  RenderBuffers buffers;
  RenderPass pass;
};

/// Tiled front-to-back compositing of color and instance marginals.
Rendered render(const GaussianSet& set, const DeformationField& deform, const Camera& camera, double t,
                const RenderOptions& options = {});

/// Direct per-pixel loop over every projected splat; the oracle for render().
RenderBuffers render_reference(const GaussianSet& set, const DeformationField& deform,
                               const Camera& camera, double t, const RenderOptions& options = {});

/// Upstream gradients of a scalar loss with respect to the buffers.
struct RenderUpstream {
  std::vector<double> color;      // H*W*3
  std::vector<double> marginals;  // H*W*K
  std::vector<double> residual;   // H*W

  static RenderUpstream zeros(const RenderBuffers& buffers);
};

/// Exact reverse of render(); returns the gradient in pack_parameters layout.
Eigen::VectorXd render_backward(const GaussianSet& set, const DeformationField& deform,
                                const Camera& camera, const Rendered& rendered,
                                const RenderUpstream& upstream);

}  // namespace cif

#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "cif/gaussians.hpp"
#include "cif/rng.hpp"

namespace cif {

struct DeformConfig {
  int position_frequencies = 6;  // L_x
  int time_frequencies = 4;      // L_t
  std::vector<int> hidden{64, 64};

  bool operator==(const DeformConfig&) const = default;
};

struct DenseLayer {
  RowMatrix weight;  // out x in
  Eigen::VectorXd bias;
};

/// Time-conditioned MLP producing per-primitive offsets (dx, dq, dlog_scale)
/// from the encoded canonical position and time. Hidden layers use ReLU; the
/// final layer is linear and its ten outputs are the three heads in that order.
class DeformationField {
 public:
  static constexpr int kOutputs = 10;

  DeformationField() : DeformationField(DeformConfig{}) {}

  /// All weights zero: the identity deformation.
  explicit DeformationField(DeformConfig config);

  /// He-uniform hidden layers, zero output heads.
  static DeformationField create(const DeformConfig& config, Rng& rng);

  const DeformConfig& config() const { return config_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  std::size_t encoding_size() const;
  std::size_t weight_count() const;

  /// Flat weights, per layer: weight row-major then bias.
  Eigen::VectorXd flatten() const;
  void assign(const Eigen::Ref<const Eigen::VectorXd>& flat);

 private:
  DeformConfig config_;
  std::vector<DenseLayer> layers_;
};

/// (x, t) followed by sin/cos of x at 2^0..2^{L_x-1} and of t at
/// 2^0..2^{L_t-1}. Length 4 + 2 (3 L_x + L_t).
Eigen::VectorXd encode(const Eigen::Vector3d& x, double t, int position_frequencies,
                       int time_frequencies);

struct DeformCache {
  bool valid = false;
  RowMatrix features;                  // N x F
  std::vector<RowMatrix> activations;  // post-ReLU, per hidden layer
  RowMatrix raw_rotation;              // q + dq before normalization
};

/// Deformed primitive geometry at one time.
struct DeformedState {
  double time = 0.0;
  RowMatrix position;  // N x 3
  RowMatrix rotation;  // N x 4, normalized
  RowMatrix scale;     // N x 3, exp(log_scale + dlog_scale)
  DeformCache cache;
};

DeformedState deform_forward(const DeformationField& field, const GaussianSet& set, double t,
                             bool keep_cache = true);

struct DeformGradients {
  RowMatrix position;   // canonical, N x 3
  RowMatrix rotation;   // canonical quaternion, N x 4
  RowMatrix log_scale;  // N x 3
  Eigen::VectorXd weights;
};

/// Reverse pass of deform_forward for upstream gradients on the deformed
/// position, normalized rotation and scale.
DeformGradients deform_backward(const DeformationField& field, const GaussianSet& set,
                                const DeformedState& state, const RowMatrix& grad_position,
                                const RowMatrix& grad_rotation, const RowMatrix& grad_scale);

}  // namespace cif

#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Core>

namespace cif {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Inverse of sigmoid; the argument is clamped to keep the result finite.
double logit(double p);

/// Instance-embedded Gaussian primitives in canonical (time-independent) form.
///
/// Bounded quantities are stored unconstrained: opacity and occupancy as
/// logits, calibration factors as logs. Instance labels are 1..K and map to
/// column k-1 of the identity matrices; label 0 (background) has no column.
struct GaussianSet {
  RowMatrix position;         // N x 3, scene units
  RowMatrix rotation;         // N x 4, unit quaternion (w, x, y, z)
  RowMatrix log_scale;        // N x 3
  RowMatrix color;            // N x 3, in [0, 1]
  Eigen::VectorXd opacity_logit;
  Eigen::VectorXd occupancy_logit;
  RowMatrix base_identity;    // N x K, rows on the simplex
  RowMatrix calibration_log;  // N x K
  std::vector<int> replicas;  // per-round replica counter

  /// N primitives at the origin with identity rotation, unit scale, mid-gray
  /// color, opacity and occupancy 0.5, uniform identity and neutral calibration.
  static GaussianSet create(std::size_t n, std::size_t k);

  std::size_t size() const { return static_cast<std::size_t>(position.rows()); }
  std::size_t instances() const { return static_cast<std::size_t>(base_identity.cols()); }

  double opacity(std::size_t i) const { return sigmoid(opacity_logit[i]); }
  double occupancy(std::size_t i) const { return sigmoid(occupancy_logit[i]); }

  /// Copies every per-primitive attribute of `src` onto `dst`.
  void copy_primitive(std::size_t src, std::size_t dst);

  /// Primitives `indices[0]`, `indices[1]`, ... as a new set.
  GaussianSet select(const std::vector<std::size_t>& indices) const;

  void normalize_rotations();

  /// Checks shapes, finiteness and the identity simplex; throws Error.
  void validate() const;
};

/// Calibrated identity p_i^k = p̂_i^k m_i^k / sum_k' p̂_i^k' m_i^k' with
/// m = exp(calibration_log). Throws DegenerateDistribution when the
/// calibrated mass is zero.
Eigen::VectorXd effective_identity(const GaussianSet& set, std::size_t i);

/// Same for every primitive (N x K).
RowMatrix effective_identities(const GaussianSet& set);

/// Pulls a gradient on the calibrated identity back to the base identity and
/// to the calibration log-factors of one primitive.
void effective_identity_backward(const Eigen::Ref<const Eigen::RowVectorXd>& base,
                                 const Eigen::Ref<const Eigen::RowVectorXd>& calibration_log,
                                 const Eigen::Ref<const Eigen::RowVectorXd>& grad_identity,
                                 Eigen::Ref<Eigen::RowVectorXd> grad_base,
                                 Eigen::Ref<Eigen::RowVectorXd> grad_calibration);

}  // namespace cif

#include "cif/gaussians.hpp"

#include <algorithm>
#include <string>

#include "cif/error.hpp"

namespace cif {

double logit(double p) {
  constexpr double kTiny = 1e-15;
  p = std::clamp(p, kTiny, 1.0 - kTiny);
  return std::log(p / (1.0 - p));
}

GaussianSet GaussianSet::create(std::size_t n, std::size_t k) {
  const auto rows = static_cast<Eigen::Index>(n);
  const auto cols = static_cast<Eigen::Index>(k);
  GaussianSet set;
  set.position = RowMatrix::Zero(rows, 3);
  set.rotation = RowMatrix::Zero(rows, 4);
  set.rotation.col(0).setOnes();
  set.log_scale = RowMatrix::Zero(rows, 3);
  set.color = RowMatrix::Constant(rows, 3, 0.5);
  set.opacity_logit = Eigen::VectorXd::Zero(rows);
  set.occupancy_logit = Eigen::VectorXd::Zero(rows);
  set.base_identity = RowMatrix::Constant(rows, cols, k > 0 ? 1.0 / static_cast<double>(k) : 0.0);
  set.calibration_log = RowMatrix::Zero(rows, cols);
  set.replicas.assign(n, 0);
  return set;
}

void GaussianSet::copy_primitive(std::size_t src, std::size_t dst) {
  const auto s = static_cast<Eigen::Index>(src);
  const auto d = static_cast<Eigen::Index>(dst);
  position.row(d) = position.row(s);
  rotation.row(d) = rotation.row(s);
  log_scale.row(d) = log_scale.row(s);
  color.row(d) = color.row(s);
  opacity_logit[d] = opacity_logit[s];
  occupancy_logit[d] = occupancy_logit[s];
  base_identity.row(d) = base_identity.row(s);
  calibration_log.row(d) = calibration_log.row(s);
}

GaussianSet GaussianSet::select(const std::vector<std::size_t>& indices) const {
  GaussianSet out = create(indices.size(), instances());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto s = static_cast<Eigen::Index>(indices[i]);
    const auto d = static_cast<Eigen::Index>(i);
    out.position.row(d) = position.row(s);
    out.rotation.row(d) = rotation.row(s);
    out.log_scale.row(d) = log_scale.row(s);
    out.color.row(d) = color.row(s);
    out.opacity_logit[d] = opacity_logit[s];
    out.occupancy_logit[d] = occupancy_logit[s];
    out.base_identity.row(d) = base_identity.row(s);
    out.calibration_log.row(d) = calibration_log.row(s);
    out.replicas[i] = replicas[indices[i]];
  }
  return out;
}

void GaussianSet::normalize_rotations() {
  for (Eigen::Index i = 0; i < rotation.rows(); ++i) {
    const double norm = rotation.row(i).norm();
    if (!(norm > 1e-12) || !std::isfinite(norm)) {
      fail(ErrorCode::DegenerateRotation, "quaternion " + std::to_string(i) + " cannot be normalized");
    }
    rotation.row(i) /= norm;
  }
}

void GaussianSet::validate() const {
  const Eigen::Index n = position.rows();
  const Eigen::Index k = base_identity.cols();
  auto check_shape = [&](const auto& m, Eigen::Index cols, const char* name) {
    if (m.rows() != n || m.cols() != cols) {
      fail(ErrorCode::Structural, std::string("GaussianSet field '") + name + "' has the wrong shape");
    }
    if (!m.allFinite()) {
      fail(ErrorCode::Numeric, std::string("GaussianSet field '") + name + "' is not finite");
    }
  };
  check_shape(position, 3, "position");
  check_shape(rotation, 4, "rotation");
  check_shape(log_scale, 3, "log_scale");
  check_shape(color, 3, "color");
  check_shape(opacity_logit, 1, "opacity_logit");
  check_shape(occupancy_logit, 1, "occupancy_logit");
  check_shape(base_identity, k, "base_identity");
  check_shape(calibration_log, k, "calibration_log");
  if (replicas.size() != static_cast<std::size_t>(n)) {
    fail(ErrorCode::Structural, "GaussianSet replica counters have the wrong length");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if ((base_identity.row(i).array() < 0.0).any() ||
        std::abs(base_identity.row(i).sum() - 1.0) > 1e-9) {
      fail(ErrorCode::DegenerateDistribution,
           "base identity of primitive " + std::to_string(i) + " is not a distribution");
    }
  }
}

Eigen::VectorXd effective_identity(const GaussianSet& set, std::size_t i) {
  const auto row = static_cast<Eigen::Index>(i);
  if (row < 0 || row >= set.base_identity.rows()) {
    fail(ErrorCode::Usage, "primitive index out of range");
  }
  const auto lambda = set.calibration_log.row(row).array();
  Eigen::VectorXd mass = (set.base_identity.row(row).array() * (lambda - lambda.maxCoeff()).exp()).transpose();
  const double total = mass.sum();
  if (!(total > 0.0) || !std::isfinite(total)) {
    fail(ErrorCode::DegenerateDistribution,
         "calibrated identity of primitive " + std::to_string(i) + " has no mass");
  }
  return mass / total;
}

RowMatrix effective_identities(const GaussianSet& set) {
  RowMatrix out(set.base_identity.rows(), set.base_identity.cols());
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    out.row(i) = effective_identity(set, static_cast<std::size_t>(i)).transpose();
  }
  return out;
}

void effective_identity_backward(const Eigen::Ref<const Eigen::RowVectorXd>& base,
                                 const Eigen::Ref<const Eigen::RowVectorXd>& calibration_log,
                                 const Eigen::Ref<const Eigen::RowVectorXd>& grad_identity,
                                 Eigen::Ref<Eigen::RowVectorXd> grad_base,
                                 Eigen::Ref<Eigen::RowVectorXd> grad_calibration) {
  // factors relative to the largest; the common scale cancels
  const Eigen::RowVectorXd factor = (calibration_log.array() - calibration_log.maxCoeff()).exp();
  const Eigen::RowVectorXd mass = base.array() * factor.array();
  const double total = mass.sum();
  // d p_k / d mass_j = (delta_kj - p_k) / total
  const double projected = grad_identity.dot(mass) / total;
  const Eigen::RowVectorXd grad_mass = (grad_identity.array() - projected) / total;
  grad_base += (grad_mass.array() * factor.array()).matrix();
  grad_calibration += (grad_mass.array() * mass.array()).matrix();
}

}  // namespace cif

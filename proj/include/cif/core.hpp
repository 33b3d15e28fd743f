#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <utility>

#include <Eigen/Core>

#include "cif/deform.hpp"
#include "cif/gaussians.hpp"
#include "cif/rng.hpp"

namespace cif {

/// Continuous-field value at one space-time point and instance.
struct FieldSample {
  double occupancy = 0.0;    // pi(x, t)
  Eigen::VectorXd identity;  // p(x, t, .), uniform when occupancy is zero
  double joint = 0.0;        // gamma(x, t, k) = pi * p_k
  bool identity_defined = false;
};

/// pi(x,t) = 1 - prod_i (1 - pi_i G_i(x)) over the deformed primitives, with
/// G_i the peak-1 Gaussian kernel; identity is the occupancy-kernel weighted
/// mixture of the calibrated identities. `instance` is 1-based.
FieldSample field_query(const GaussianSet& set, const DeformationField& deform,
                        const Eigen::Vector3d& x, double t, std::size_t instance);

/// Offsets of each parameter block inside the packed vector. Blocks are, in
/// order: position (N x 3), rotation (N x 4), log_scale (N x 3), color (N x 3),
/// opacity logit (N), occupancy logit (N), base identity (N x K),
/// calibration log-factor (N x K), deformation weights. Matrices row-major.
struct ParamLayout {
  std::size_t n = 0;
  std::size_t k = 0;
  std::size_t deform = 0;

  ParamLayout() = default;
  ParamLayout(std::size_t n_, std::size_t k_, std::size_t deform_) : n(n_), k(k_), deform(deform_) {}
  ParamLayout(const GaussianSet& set, const DeformationField& field)
      : n(set.size()), k(set.instances()), deform(field.weight_count()) {}

  std::size_t position() const { return 0; }
  std::size_t rotation() const { return 3 * n; }
  std::size_t log_scale() const { return 7 * n; }
  std::size_t color() const { return 10 * n; }
  std::size_t opacity() const { return 13 * n; }
  std::size_t occupancy() const { return 14 * n; }
  std::size_t base_identity() const { return 15 * n; }
  std::size_t calibration() const { return 15 * n + n * k; }
  std::size_t deformation() const { return 15 * n + 2 * n * k; }
  std::size_t total() const { return deformation() + deform; }
};

Eigen::VectorXd pack_parameters(const GaussianSet& set, const DeformationField& deform);

/// Writes `packed` into `set` and `deform`, whose shapes define the layout.
void unpack_parameters(const Eigen::Ref<const Eigen::VectorXd>& packed, GaussianSet& set,
                       DeformationField& deform);

/// Everything a training run needs to resume or render.
struct Checkpoint {
  GaussianSet gaussians;
  DeformationField deform;
  std::uint64_t iteration = 0;
  Rng::State rng{};
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cif

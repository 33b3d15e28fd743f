#pragma once

#include <cstddef>
#include <vector>

#include "cif/deform.hpp"
#include "cif/gaussians.hpp"
#include "cif/splat.hpp"

namespace cif {

struct LabelImage;
struct SceneDataset;

/// Rendering-weight mass of each primitive, split by the mask label under it.
struct IdentityAccumulator {
  RowMatrix numerator;         // N x K, weight under labels 1..K
  Eigen::VectorXd denominator; // total weight
  Eigen::VectorXd background;  // weight under label 0

  static IdentityAccumulator create(std::size_t n, std::size_t k);

  std::size_t size() const { return static_cast<std::size_t>(denominator.size()); }
  std::size_t instances() const { return static_cast<std::size_t>(numerator.cols()); }

  /// Adds every (primitive, weight) pair of every pixel to the label found
  /// under that pixel. `buffers` must carry contribution lists.
  void accumulate(const RenderBuffers& buffers, const LabelImage& mask);

  /// Adds another accumulator's totals.
  void merge(const IdentityAccumulator& other);
};

/// Base identity per primitive; primitives with no instance evidence get the
/// uniform distribution.
RowMatrix finalize(const IdentityAccumulator& acc);

/// Renders every training frame with contribution lists, aggregates against
/// the masks, and writes the result into `set.base_identity`. Calibration
/// log-factors are reset to zero.
IdentityAccumulator estimate_identities(GaussianSet& set, const DeformationField& deform,
                                        const SceneDataset& scene);

}  // namespace cif

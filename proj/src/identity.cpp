#include "cif/identity.hpp"

#include <string>

#include "cif/data.hpp"
#include "cif/error.hpp"

namespace cif {

IdentityAccumulator IdentityAccumulator::create(std::size_t n, std::size_t k) {
  const auto rows = static_cast<Eigen::Index>(n);
  return {RowMatrix::Zero(rows, static_cast<Eigen::Index>(k)), Eigen::VectorXd::Zero(rows),
          Eigen::VectorXd::Zero(rows)};
}

void IdentityAccumulator::accumulate(const RenderBuffers& buffers, const LabelImage& mask) {
  if (mask.width != buffers.width || mask.height != buffers.height) {
    fail(ErrorCode::DimensionMismatch, "mask and render sizes differ");
  }
  if (buffers.contributions.size() != buffers.pixels()) {
    fail(ErrorCode::Usage, "render was produced without contribution lists");
  }
  const int k = static_cast<int>(instances());
  for (std::size_t pixel = 0; pixel < buffers.pixels(); ++pixel) {
    const int label = mask.labels[pixel];
    if (label < 0 || label > k) {
      fail(ErrorCode::Data, "mask label " + std::to_string(label) + " exceeds K=" + std::to_string(k));
    }
    for (const Contribution& c : buffers.contributions[pixel]) {
      if (c.gaussian < 0 || static_cast<std::size_t>(c.gaussian) >= size()) {
        fail(ErrorCode::Structural, "contribution refers to an unknown primitive");
      }
      if (label == 0) {
        background[c.gaussian] += c.weight;
      } else {
        numerator(c.gaussian, label - 1) += c.weight;
      }
      denominator[c.gaussian] += c.weight;
    }
  }
}

void IdentityAccumulator::merge(const IdentityAccumulator& other) {
  if (other.size() != size() || other.instances() != instances()) {
    fail(ErrorCode::Structural, "cannot merge accumulators of different shapes");
  }
  numerator += other.numerator;
  denominator += other.denominator;
  background += other.background;
}

RowMatrix finalize(const IdentityAccumulator& acc) {
  const auto k = static_cast<Eigen::Index>(acc.instances());
  RowMatrix out(acc.numerator.rows(), k);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double evidence = acc.numerator.row(i).sum();
    if (evidence > 0.0) {
      out.row(i) = acc.numerator.row(i) / evidence;
    } else {
      out.row(i).setConstant(1.0 / static_cast<double>(k));
    }
  }
  return out;
}

IdentityAccumulator estimate_identities(GaussianSet& set, const DeformationField& deform,
                                        const SceneDataset& scene) {
  const auto train = scene.split_indices(Split::Train);
  if (train.empty()) fail(ErrorCode::Usage, "identity estimation needs at least one training frame");
  if (set.instances() != static_cast<std::size_t>(scene.instances)) {
    fail(ErrorCode::Structural, "Gaussian set and scene disagree on K");
  }

  IdentityAccumulator acc = IdentityAccumulator::create(set.size(), set.instances());
  RenderOptions options;
  options.contributions = true;
  for (std::size_t f : train) {
    const FrameObservation& frame = scene.frames[f];
    const Rendered r = render(set, deform, scene.cameras[frame.camera], frame.time, options);
    acc.accumulate(r.buffers, frame.mask);
  }
  set.base_identity = finalize(acc);
  set.calibration_log.setZero();
  return acc;
}

}  // namespace cif

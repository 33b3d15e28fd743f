#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cif/core.hpp"
#include "cif/data.hpp"
#include "cif/deform.hpp"
#include "cif/eval.hpp"
#include "cif/gaussians.hpp"
#include "cif/resample.hpp"
#include "cif/rng.hpp"
#include "cif/splat.hpp"

namespace cif {

struct LearningRates {
  double position = 1.6e-4;
  double position_final = 1.6e-6;  // exponential decay target over all iterations
  double rotation = 1e-3;
  double scale = 5e-3;
  double color = 2.5e-3;
  double opacity = 5e-2;
  double occupancy = 1e-2;
  double calibration = 1e-2;
  double deform = 1.6e-4;
};

struct TrainConfig {
  int iters_recon = 10000;
  int iters_inst = 3000;
  int static_iters = 0;      // leading reconstruction iterations with the deformation frozen
  double lambda_inst = 0.01;
  LearningRates lr;
  double resample_rate = 0.01;
  int resample_every = 500;
  double resample_epsilon = kResponseFloor;
  bool calibration = true;  // false: log-factors stay at zero
  bool resampling = true;
  bool shuffle = false;     // seeded per-epoch shuffle instead of round-robin
  std::uint64_t seed = 0;
  int gaussians = 2000;
  double initial_opacity = 0.1;
  double initial_occupancy = 0.1;
  int log_every = 100;
  DeformConfig deform;

  void validate() const;
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::uint64_t step = 0;

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  static AdamState create(std::size_t size);
  /// Clears both moments of primitive `i` in every per-primitive block.
  void reset_primitive(const ParamLayout& layout, std::size_t i);
};

/// One bias-corrected Adam update with per-element learning rates. With a
/// layout, quaternion blocks are renormalized and colors clamped to [0, 1]
/// afterwards. A non-finite gradient aborts with a Numeric error.
void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grads,
               const Eigen::VectorXd& learning_rates, const ParamLayout* layout = nullptr);

struct ImageLoss {
  double value = 0.0;
  std::vector<double> grad;
};

/// Mean absolute error over pixels and channels.
ImageLoss loss_rgb(const std::vector<double>& rendered, const std::vector<double>& target);

struct InstanceLoss {
  double value = 0.0;
  std::vector<double> grad_marginals;
  std::vector<double> grad_residual;
};

inline constexpr double kProbabilityFloor = 1e-8;

/// Mean over pixels of -log max(q(label), 1e-8) with q(0) = R, q(k) = M_k.
InstanceLoss loss_inst(const RenderBuffers& buffers, const LabelImage& mask);

struct FrameLoss {
  double rgb = 0.0;
  double inst = 0.0;
  double total = 0.0;
  double psnr = 0.0;
};

/// L = L_rgb + lambda L_inst for one frame. When `grad` is non-null it
/// receives the packed gradient.
FrameLoss frame_loss(const GaussianSet& set, const DeformationField& deform, const Camera& camera,
                     const FrameObservation& frame, double lambda_inst, Eigen::VectorXd* grad = nullptr);

double psnr(const std::vector<double>& rendered, const std::vector<double>& target);

struct ProgressRecord {
  std::uint64_t iteration = 0;
  double loss_rgb = 0.0;
  double loss_inst = 0.0;
  double psnr = 0.0;
};

struct TrainState {
  GaussianSet gaussians;
  DeformationField deform;
  AdamState optimizer;
  Rng rng;
  std::uint64_t iteration = 0;
  std::vector<ProgressRecord> progress;
  std::vector<RoundReport> rounds;
};

struct TrainObserver {
  std::function<void(const ProgressRecord&)> progress;
  std::function<void(std::size_t round, const RoundReport&)> resample;
};

/// Random primitives in the scene box (or at the seed points), identity
/// rotation, nearest-neighbour scales, mid-gray color, uniform identity.
TrainState initialize_state(const SceneDataset& scene, const TrainConfig& config);

void train_reconstruction(const SceneDataset& scene, const TrainConfig& config, TrainState& state,
                          const TrainObserver& observer = {});

/// Estimates identities once, then optimizes the joint loss with periodic
/// resampling rounds.
void train_instance(const SceneDataset& scene, const TrainConfig& config, TrainState& state,
                    const TrainObserver& observer = {});

Checkpoint make_checkpoint(const TrainState& state);
TrainState restore_state(const Checkpoint& ckpt);

struct SplitScore {
  double psnr = 0.0;  // mean over frames
  MetricReport metrics;
};

/// Renders every frame of `split` and scores color and panoptic maps.
SplitScore score_split(const GaussianSet& set, const DeformationField& deform, const SceneDataset& scene,
                       Split split);

/// CSV header and line for a progress record.
std::string progress_header();
std::string progress_line(const ProgressRecord& record);

}  // namespace cif

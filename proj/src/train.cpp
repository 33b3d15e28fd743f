#include "cif/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "cif/error.hpp"
#include "cif/identity.hpp"

namespace cif {

void TrainConfig::validate() const {
  if (iters_recon < 0 || iters_inst < 0 || static_iters < 0) {
    fail(ErrorCode::Usage, "iteration counts must be non-negative");
  }
  const double rates[] = {lr.position, lr.position_final, lr.rotation, lr.scale, lr.color,
                          lr.opacity,  lr.occupancy,      lr.calibration, lr.deform};
  for (double r : rates) {
    if (!(r > 0.0)) fail(ErrorCode::Usage, "learning rates must be positive");
  }
  if (!(lambda_inst >= 0.0)) fail(ErrorCode::Usage, "lambda_inst must be non-negative");
  if (!(resample_rate > 0.0 && resample_rate <= 1.0)) fail(ErrorCode::Usage, "resample rate must lie in (0, 1]");
  if (resample_every <= 0) fail(ErrorCode::Usage, "resample cadence must be positive");
  if (!(resample_epsilon > 0.0 && resample_epsilon < 1.0)) fail(ErrorCode::Usage, "epsilon must lie in (0, 1)");
  if (gaussians < 2) fail(ErrorCode::Usage, "at least two primitives are required");
  if (log_every <= 0) fail(ErrorCode::Usage, "log interval must be positive");
}

// --- optimizer ---------------------------------------------------------------------

AdamState AdamState::create(std::size_t size) {
  AdamState s;
  s.m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size));
  s.v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size));
  return s;
}

void AdamState::reset_primitive(const ParamLayout& layout, std::size_t i) {
  auto clear = [&](std::size_t offset, std::size_t width) {
    const auto at = static_cast<Eigen::Index>(offset + i * width);
    m.segment(at, static_cast<Eigen::Index>(width)).setZero();
    v.segment(at, static_cast<Eigen::Index>(width)).setZero();
  };
  clear(layout.position(), 3);
  clear(layout.rotation(), 4);
  clear(layout.log_scale(), 3);
  clear(layout.color(), 3);
  clear(layout.opacity(), 1);
  clear(layout.occupancy(), 1);
  clear(layout.base_identity(), layout.k);
  clear(layout.calibration(), layout.k);
}

namespace {

std::string block_name(const ParamLayout& layout, std::size_t index) {
  if (index < layout.rotation()) return "position";
  if (index < layout.log_scale()) return "rotation";
  if (index < layout.color()) return "log_scale";
  if (index < layout.opacity()) return "color";
  if (index < layout.occupancy()) return "opacity";
  if (index < layout.base_identity()) return "occupancy";
  if (index < layout.calibration()) return "base_identity";
  if (index < layout.deformation()) return "calibration";
  return "deformation";
}

}  // namespace

void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grads,
               const Eigen::VectorXd& learning_rates, const ParamLayout* layout) {
  if (params.size() != grads.size() || params.size() != learning_rates.size() || state.m.size() != params.size()) {
    fail(ErrorCode::Structural, "optimizer shapes do not match the parameter vector");
  }
  for (Eigen::Index i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      std::string where = "index " + std::to_string(i);
      if (layout) where += " (" + block_name(*layout, static_cast<std::size_t>(i)) + ")";
      fail(ErrorCode::Numeric, "non-finite gradient at " + where + " on step " + std::to_string(state.step + 1));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(AdamState::kBeta1, t);
  const double c2 = 1.0 - std::pow(AdamState::kBeta2, t);
  state.m = AdamState::kBeta1 * state.m + (1.0 - AdamState::kBeta1) * grads;
  state.v = AdamState::kBeta2 * state.v + (1.0 - AdamState::kBeta2) * grads.cwiseAbs2();
  params.array() -= learning_rates.array() * (state.m.array() / c1) /
                    ((state.v.array() / c2).sqrt() + AdamState::kEpsilon);

  if (layout) {
    for (std::size_t i = 0; i < layout->n; ++i) {
      auto q = params.segment(static_cast<Eigen::Index>(layout->rotation() + 4 * i), 4);
      const double norm = q.norm();
      if (!(norm > 1e-12)) fail(ErrorCode::DegenerateRotation, "quaternion collapsed during optimization");
      q /= norm;
    }
    auto color = params.segment(static_cast<Eigen::Index>(layout->color()), static_cast<Eigen::Index>(3 * layout->n));
    color = color.cwiseMax(0.0).cwiseMin(1.0);
  }
}

// --- losses ------------------------------------------------------------------------

ImageLoss loss_rgb(const std::vector<double>& rendered, const std::vector<double>& target) {
  if (rendered.size() != target.size() || rendered.empty()) {
    fail(ErrorCode::DimensionMismatch, "rendered and target images differ in size");
  }
  ImageLoss out;
  out.grad.resize(rendered.size());
  const double scale = 1.0 / static_cast<double>(rendered.size());
  long double sum = 0.0L;  // extended accumulator keeps finite differences clean
  for (std::size_t i = 0; i < rendered.size(); ++i) {
    const double d = rendered[i] - target[i];
    sum += std::abs(d);
    out.grad[i] = d > 0.0 ? scale : (d < 0.0 ? -scale : 0.0);
  }
  out.value = static_cast<double>(sum / static_cast<long double>(rendered.size()));
  return out;
}

InstanceLoss loss_inst(const RenderBuffers& buffers, const LabelImage& mask) {
  if (mask.width != buffers.width || mask.height != buffers.height) {
    fail(ErrorCode::DimensionMismatch, "mask and render differ in size");
  }
  const std::size_t pixels = buffers.pixels();
  const auto k = static_cast<std::size_t>(buffers.instances);
  InstanceLoss out;
  out.grad_marginals.assign(pixels * k, 0.0);
  out.grad_residual.assign(pixels, 0.0);
  const double scale = 1.0 / static_cast<double>(pixels);
  long double sum = 0.0L;
  for (std::size_t p = 0; p < pixels; ++p) {
    const int label = mask.labels[p];
    if (label < 0 || label > buffers.instances) {
      fail(ErrorCode::Data, "mask label " + std::to_string(label) + " out of range");
    }
    const double q = label == 0 ? buffers.residual[p] : buffers.marginals[p * k + static_cast<std::size_t>(label - 1)];
    if (q > kProbabilityFloor) {
      sum -= std::log(static_cast<long double>(q));
      const double g = -scale / q;
      if (label == 0) {
        out.grad_residual[p] = g;
      } else {
        out.grad_marginals[p * k + static_cast<std::size_t>(label - 1)] = g;
      }
    } else {
      sum -= std::log(static_cast<long double>(kProbabilityFloor));
    }
  }
  out.value = static_cast<double>(sum / static_cast<long double>(pixels));
  return out;
}

double psnr(const std::vector<double>& rendered, const std::vector<double>& target) {
  if (rendered.size() != target.size() || rendered.empty()) {
    fail(ErrorCode::DimensionMismatch, "rendered and target images differ in size");
  }
  double mse = 0.0;
  for (std::size_t i = 0; i < rendered.size(); ++i) mse += (rendered[i] - target[i]) * (rendered[i] - target[i]);
  mse /= static_cast<double>(rendered.size());
  return mse > 0.0 ? -10.0 * std::log10(mse) : 100.0;
}

FrameLoss frame_loss(const GaussianSet& set, const DeformationField& deform, const Camera& camera,
                     const FrameObservation& frame, double lambda_inst, Eigen::VectorXd* grad) {
  const Rendered rendered = render(set, deform, camera, frame.time);
  const RenderBuffers& b = rendered.buffers;
  FrameLoss loss;
  const ImageLoss rgb = loss_rgb(b.color, frame.rgb.data);
  loss.rgb = rgb.value;
  loss.psnr = psnr(b.color, frame.rgb.data);
  RenderUpstream upstream = RenderUpstream::zeros(b);
  upstream.color = rgb.grad;
  if (lambda_inst > 0.0 && b.instances > 0) {
    const InstanceLoss inst = loss_inst(b, frame.mask);
    loss.inst = inst.value;
    for (std::size_t i = 0; i < inst.grad_marginals.size(); ++i) upstream.marginals[i] = lambda_inst * inst.grad_marginals[i];
    for (std::size_t i = 0; i < inst.grad_residual.size(); ++i) upstream.residual[i] = lambda_inst * inst.grad_residual[i];
  }
  loss.total = loss.rgb + lambda_inst * loss.inst;
  if (grad) *grad = render_backward(set, deform, camera, rendered, upstream);
  return loss;
}

// --- schedule ----------------------------------------------------------------------

namespace {

double nearest_scale(const std::vector<Eigen::Vector3d>& points, std::size_t i) {
  double best[3] = {INFINITY, INFINITY, INFINITY};
  for (std::size_t j = 0; j < points.size(); ++j) {
    if (j == i) continue;
    double d = (points[j] - points[i]).squaredNorm();
    for (double& b : best) {
      if (d < b) std::swap(d, b);
    }
  }
  double sum = 0.0;
  int count = 0;
  for (double b : best) {
    if (std::isfinite(b)) {
      sum += b;
      ++count;
    }
  }
  const double mean = count > 0 ? sum / count : 1e-2;
  return 0.5 * std::log(std::max(mean, 1e-8));
}

Eigen::VectorXd learning_rates(const ParamLayout& layout, const TrainConfig& config, double position_lr,
                               bool instance_stage) {
  Eigen::VectorXd lr = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.total()));
  auto fill = [&](std::size_t offset, std::size_t count, double value) {
    lr.segment(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(count)).setConstant(value);
  };
  const std::size_t n = layout.n;
  fill(layout.position(), 3 * n, position_lr);
  fill(layout.rotation(), 4 * n, config.lr.rotation);
  fill(layout.log_scale(), 3 * n, config.lr.scale);
  fill(layout.color(), 3 * n, config.lr.color);
  fill(layout.opacity(), n, config.lr.opacity);
  if (instance_stage) {
    fill(layout.occupancy(), n, config.lr.occupancy);
    if (config.calibration) fill(layout.calibration(), n * layout.k, config.lr.calibration);
  }
  fill(layout.deformation(), layout.deform, config.lr.deform);
  return lr;
}

double position_rate(const TrainConfig& config, std::uint64_t iteration) {
  const double total = static_cast<double>(config.iters_recon) + static_cast<double>(config.iters_inst);
  const double u = total > 0.0 ? std::min(1.0, static_cast<double>(iteration) / total) : 0.0;
  return config.lr.position * std::pow(config.lr.position_final / config.lr.position, u);
}

class FrameSchedule {
 public:
  FrameSchedule(const SceneDataset& scene, bool shuffle) : order_(scene.split_indices(Split::Train)), shuffle_(shuffle) {
    if (order_.empty()) fail(ErrorCode::Usage, "scene has no training frames");
  }

  std::size_t frame(std::uint64_t iteration, Rng& rng) {
    const std::size_t slot = static_cast<std::size_t>(iteration % order_.size());
    if (shuffle_ && slot == 0) std::shuffle(order_.begin(), order_.end(), rng);
    return order_[slot];
  }

 private:
  std::vector<std::size_t> order_;
  bool shuffle_;
};

struct Window {
  double rgb = 0.0;
  double inst = 0.0;
  double psnr = 0.0;
  int count = 0;

  void add(const FrameLoss& loss) {
    rgb += loss.rgb;
    inst += loss.inst;
    psnr += loss.psnr;
    ++count;
  }
};

void run_iterations(const SceneDataset& scene, const TrainConfig& config, TrainState& state, int iterations,
                    bool instance_stage, const TrainObserver& observer) {
  const ParamLayout layout(state.gaussians, state.deform);
  if (state.optimizer.m.size() != static_cast<Eigen::Index>(layout.total())) {
    state.optimizer = AdamState::create(layout.total());
  }
  FrameSchedule schedule(scene, config.shuffle);
  const double lambda = instance_stage ? config.lambda_inst : 0.0;
  Window window;
  std::size_t round = state.rounds.size();
  Eigen::VectorXd grad;
  for (int it = 0; it < iterations; ++it) {
    if (instance_stage && config.resampling && it > 0 && it % config.resample_every == 0) {
      RoundReport report = resample_round(state.gaussians, config.resample_epsilon, config.resample_rate, state.rng);
      for (const auto& pair : report.pairs) state.optimizer.reset_primitive(layout, pair.weak);
      if (observer.resample) observer.resample(round, report);
      state.rounds.push_back(std::move(report));
      ++round;
    }

    const FrameObservation& frame = scene.frames[schedule.frame(state.iteration, state.rng)];
    const FrameLoss loss =
        frame_loss(state.gaussians, state.deform, scene.cameras[frame.camera], frame, lambda, &grad);
    window.add(loss);

    Eigen::VectorXd params = pack_parameters(state.gaussians, state.deform);
    Eigen::VectorXd lr = learning_rates(layout, config, position_rate(config, state.iteration), instance_stage);
    if (state.iteration < static_cast<std::uint64_t>(config.static_iters)) {
      lr.tail(static_cast<Eigen::Index>(layout.deform)).setZero();
    }
    adam_step(state.optimizer, params, grad, lr, &layout);
    unpack_parameters(params, state.gaussians, state.deform);
    ++state.iteration;

    if (state.iteration % static_cast<std::uint64_t>(config.log_every) == 0) {
      ProgressRecord record{state.iteration, window.rgb / window.count, window.inst / window.count,
                            window.psnr / window.count};
      state.progress.push_back(record);
      if (observer.progress) observer.progress(record);
      window = {};
    }
  }
}

}  // namespace

TrainState initialize_state(const SceneDataset& scene, const TrainConfig& config) {
  config.validate();
  TrainState state;
  state.rng.reseed(config.seed);
  const auto n = static_cast<std::size_t>(config.gaussians);
  const auto k = static_cast<std::size_t>(scene.instances);
  state.gaussians = GaussianSet::create(n, k);

  std::vector<Eigen::Vector3d> points(n);
  const Eigen::Vector3d extent = scene.bounds_max - scene.bounds_min;
  for (std::size_t i = 0; i < n; ++i) {
    if (scene.seed_points.empty()) {
      for (int a = 0; a < 3; ++a) points[i][a] = state.rng.uniform(scene.bounds_min[a], scene.bounds_max[a]);
    } else {
      points[i] = scene.seed_points[i % scene.seed_points.size()];
      if (i >= scene.seed_points.size()) {
        for (int a = 0; a < 3; ++a) points[i][a] += 0.01 * extent[a] * state.rng.normal();
      }
    }
  }
  GaussianSet& g = state.gaussians;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    g.position.row(r) = points[i].transpose();
    g.log_scale.row(r).setConstant(nearest_scale(points, i));
    g.opacity_logit[r] = logit(config.initial_opacity);
    g.occupancy_logit[r] = logit(config.initial_occupancy);
  }
  state.deform = DeformationField::create(config.deform, state.rng);
  state.optimizer = AdamState::create(ParamLayout(state.gaussians, state.deform).total());
  return state;
}

void train_reconstruction(const SceneDataset& scene, const TrainConfig& config, TrainState& state,
                          const TrainObserver& observer) {
  config.validate();
  if (config.iters_recon == 0) return;
  run_iterations(scene, config, state, config.iters_recon, false, observer);
}

void train_instance(const SceneDataset& scene, const TrainConfig& config, TrainState& state,
                    const TrainObserver& observer) {
  config.validate();
  if (scene.instances <= 0 || state.gaussians.instances() == 0) {
    fail(ErrorCode::Usage, "instance training needs at least one instance");
  }
  estimate_identities(state.gaussians, state.deform, scene);
  run_iterations(scene, config, state, config.iters_inst, true, observer);
}

Checkpoint make_checkpoint(const TrainState& state) {
  return {state.gaussians, state.deform, state.iteration, state.rng.state()};
}

TrainState restore_state(const Checkpoint& ckpt) {
  TrainState state;
  state.gaussians = ckpt.gaussians;
  state.deform = ckpt.deform;
  state.iteration = ckpt.iteration;
  state.rng.set_state(ckpt.rng);
  state.optimizer = AdamState::create(ParamLayout(state.gaussians, state.deform).total());
  return state;
}

SplitScore score_split(const GaussianSet& set, const DeformationField& deform, const SceneDataset& scene,
                       Split split) {
  const std::vector<std::size_t> indices = scene.split_indices(split);
  if (indices.empty()) fail(ErrorCode::Usage, "split has no frames");
  SplitScore score;
  std::vector<LabelImage> pred, gt;
  for (std::size_t f : indices) {
    const FrameObservation& frame = scene.frames[f];
    const Rendered r = render(set, deform, scene.cameras[frame.camera], frame.time);
    score.psnr += psnr(r.buffers.color, frame.rgb.data);
    pred.push_back(panoptic_map(r.buffers));
    gt.push_back(frame.mask);
  }
  score.psnr /= static_cast<double>(indices.size());
  score.metrics = evaluate(pred, gt);
  return score;
}

std::string progress_header() { return "iter,L_rgb,L_inst,PSNR"; }

std::string progress_line(const ProgressRecord& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%llu,%.6f,%.6f,%.3f", static_cast<unsigned long long>(r.iteration), r.loss_rgb,
                r.loss_inst, r.psnr);
  return buf;
}

}  // namespace cif

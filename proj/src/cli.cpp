#include "cif/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cif/core.hpp"
#include "cif/data.hpp"
#include "cif/error.hpp"
#include "cif/eval.hpp"
#include "cif/parallel.hpp"
#include "cif/splat.hpp"
#include "cif/train.hpp"

namespace cif {

namespace fs = std::filesystem;

namespace {

struct TrainArgs {
  std::string scene;
  std::string out;
  std::string stage = "full";
  std::string init;
  std::string resample_log;
  std::string progress_log;
  TrainConfig config;
  bool no_calibration = false;
  bool no_resampling = false;
};

struct RenderArgs {
  std::string ckpt;
  std::string scene;
  std::size_t frame = 0;
  std::optional<double> time;
  std::optional<std::size_t> camera;
  std::string out_rgb;
  std::string out_panoptic;
  std::string out_marginals;
};

struct EvalArgs {
  std::string ckpt;
  std::string scene;
  std::string split = "test";
  std::string out;
};

struct SynthArgs {
  std::string preset;
  std::string out;
  std::uint64_t seed = 0;
  std::string gt_ckpt;
};

struct MergeArgs {
  std::vector<std::string> inputs;
  std::string out;
};

struct InspectArgs {
  std::string ckpt;
  std::string scene;
};

void require_instances(const GaussianSet& set, const SceneDataset& scene) {
  if (static_cast<int>(set.instances()) != scene.instances) {
    fail(ErrorCode::Data, "checkpoint has K=" + std::to_string(set.instances()) + " but the scene has K=" +
                              std::to_string(scene.instances));
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream file(path, std::ios::trunc);
  if (!file) fail(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  file << text;
  if (!file) fail(ErrorCode::Io, "failed to write " + path.string());
}

int cmd_train(const TrainArgs& args, std::ostream& out) {
  TrainConfig config = args.config;
  config.calibration = !args.no_calibration;
  config.resampling = !args.no_resampling;
  config.validate();
  const SceneDataset scene = load_scene(args.scene);

  TrainState state = args.init.empty() ? initialize_state(scene, config) : restore_state(load_checkpoint(args.init));
  if (!args.init.empty()) require_instances(state.gaussians, scene);

  std::ofstream progress_file, resample_file;
  if (!args.progress_log.empty()) {
    progress_file.open(args.progress_log, std::ios::trunc);
    if (!progress_file) fail(ErrorCode::Io, "cannot open " + args.progress_log);
    progress_file << progress_header() << "\n";
  }
  if (!args.resample_log.empty()) {
    resample_file.open(args.resample_log, std::ios::trunc);
    if (!resample_file) fail(ErrorCode::Io, "cannot open " + args.resample_log);
  }
  TrainObserver observer;
  observer.progress = [&](const ProgressRecord& r) {
    out << progress_line(r) << "\n";
    if (progress_file.is_open()) progress_file << progress_line(r) << "\n";
  };
  observer.resample = [&](std::size_t round, const RoundReport& report) {
    if (resample_file.is_open()) resample_file << report.to_log(round);
  };

  if (args.stage == "recon" || args.stage == "full") train_reconstruction(scene, config, state, observer);
  if (args.stage == "instance" || args.stage == "full") train_instance(scene, config, state, observer);

  save_checkpoint(args.out, make_checkpoint(state));
  const SplitScore score = score_split(state.gaussians, state.deform, scene, Split::Test);
  out << "test PSNR " << score.psnr << "\n";
  out << "test mIoU " << score.metrics.miou << "\n";
  return kExitOk;
}

int cmd_render(const RenderArgs& args, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(args.ckpt);
  const SceneDataset scene = load_scene(args.scene);
  require_instances(ckpt.gaussians, scene);
  double time = 0.0;
  std::size_t camera = 0;
  const FrameObservation* frame = nullptr;
  if (!args.time || !args.camera) {
    if (args.frame >= scene.frames.size()) fail(ErrorCode::Data, "frame index out of range");
    frame = &scene.frames[args.frame];
    time = frame->time;
    camera = frame->camera;
  }
  if (args.time) time = *args.time;
  if (args.camera) camera = *args.camera;
  if (!(time >= 0.0 && time <= 1.0)) fail(ErrorCode::Usage, "--time must lie in [0, 1]");
  if (camera >= scene.cameras.size()) fail(ErrorCode::Data, "camera index out of range");

  const Rendered r = render(ckpt.gaussians, ckpt.deform, scene.cameras[camera], time);
  write_image_ppm(args.out_rgb, to_image(r.buffers));
  write_mask_pgm(args.out_panoptic, panoptic_map(r.buffers));
  if (!args.out_marginals.empty()) {
    fs::create_directories(args.out_marginals);
    const auto k = static_cast<std::size_t>(r.buffers.instances);
    for (int inst = 1; inst <= r.buffers.instances; ++inst) {
      LabelImage img = LabelImage::zeros(r.buffers.width, r.buffers.height);
      for (std::size_t p = 0; p < r.buffers.pixels(); ++p) {
        img.labels[p] = static_cast<int>(std::lround(255.0 * r.buffers.marginals[p * k + static_cast<std::size_t>(inst - 1)]));
      }
      write_mask_pgm(fs::path(args.out_marginals) / ("instance_" + std::to_string(inst) + ".pgm"), img);
    }
  }
  if (frame && !args.time && !args.camera) {
    out << "PSNR " << psnr(r.buffers.color, frame->rgb.data) << "\n";
  }
  return kExitOk;
}

int cmd_eval(const EvalArgs& args, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(args.ckpt);
  const SceneDataset scene = load_scene(args.scene);
  require_instances(ckpt.gaussians, scene);
  const Split split = args.split == "train" ? Split::Train : Split::Test;
  if (scene.split_indices(split).empty()) fail(ErrorCode::Data, "split '" + args.split + "' has no frames");
  const SplitScore score = score_split(ckpt.gaussians, ckpt.deform, scene, split);
  std::string report = format_key_values(score.metrics);
  std::ostringstream psnr_line;
  psnr_line.precision(17);
  psnr_line << "psnr = " << score.psnr << "\n";
  report += psnr_line.str();
  if (!args.out.empty()) write_text(args.out, report);
  out << format_table(score.metrics);
  out << "PSNR       " << score.psnr << "\n";
  return kExitOk;
}

int cmd_synth(const SynthArgs& args, std::ostream& out) {
  const SynthSpec spec = synth_preset(args.preset);
  Rng rng(args.seed);
  const SynthScene synth = synth_scene(spec, rng);
  write_scene(args.out, synth.dataset);
  if (!args.gt_ckpt.empty()) save_checkpoint(args.gt_ckpt, {synth.gaussians, synth.deform, 0, rng.state()});
  out << "wrote " << synth.dataset.frames.size() << " frames, K=" << synth.dataset.instances << " to " << args.out
      << "\n";
  return kExitOk;
}

int cmd_merge(const MergeArgs& args, std::ostream& out) {
  std::vector<SceneDataset> views;
  for (const auto& dir : args.inputs) views.push_back(load_scene(dir));
  const VisibilityResult result = visibility_filter(merge_views(views));
  write_scene(args.out, result.scene);
  out << "merged " << views.size() << " views into " << result.scene.frames.size() << " frames, kept "
      << result.retained.size() << " instances\n";
  return kExitOk;
}

int cmd_inspect(const InspectArgs& args, std::ostream& out) {
  if (args.ckpt.empty() && args.scene.empty()) fail(ErrorCode::Usage, "inspect needs --ckpt or --scene");
  if (!args.ckpt.empty()) {
    const Checkpoint ckpt = load_checkpoint(args.ckpt);
    const DeformConfig& d = ckpt.deform.config();
    out << "gaussians " << ckpt.gaussians.size() << "\n";
    out << "instances " << ckpt.gaussians.instances() << "\n";
    out << "iteration " << ckpt.iteration << "\n";
    out << "deform L_x=" << d.position_frequencies << " L_t=" << d.time_frequencies << " hidden";
    for (int h : d.hidden) out << " " << h;
    out << "\n";
    out << "parameters " << ParamLayout(ckpt.gaussians, ckpt.deform).total() << "\n";
  }
  if (!args.scene.empty()) {
    const SceneDataset scene = load_scene(args.scene);
    out << "frames " << scene.frames.size() << " (train " << scene.split_indices(Split::Train).size() << ", test "
        << scene.split_indices(Split::Test).size() << ")\n";
    out << "cameras " << scene.cameras.size() << "\n";
    out << "instances " << scene.instances << "\n";
    out << "views " << scene.view_count() << "\n";
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Consistent instance field engine"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "cif 0.1.0");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Optimize Gaussians on a scene");
  t->add_option("--scene", train.scene, "Scene directory")->required()->check(CLI::ExistingDirectory);
  t->add_option("--out", train.out, "Output checkpoint")->required();
  t->add_option("--stage", train.stage, "Stages to run")
      ->check(CLI::IsMember({"recon", "instance", "full"}))
      ->capture_default_str();
  t->add_option("--init", train.init, "Start from this checkpoint instead of a fresh initialization");
  t->add_option("--iters-recon", train.config.iters_recon, "Reconstruction iterations")->capture_default_str();
  t->add_option("--iters-inst", train.config.iters_inst, "Instance iterations")->capture_default_str();
  t->add_option("--lambda-inst", train.config.lambda_inst, "Instance loss weight")->capture_default_str();
  t->add_option("--resample-rate", train.config.resample_rate, "Fraction of primitives resampled per round")
      ->capture_default_str();
  t->add_option("--resample-every", train.config.resample_every, "Instance iterations between rounds")
      ->capture_default_str();
  t->add_option("--seed", train.config.seed, "Random seed")->capture_default_str();
  t->add_option("--gaussians", train.config.gaussians, "Number of primitives")->capture_default_str();
  t->add_option("--lr-position", train.config.lr.position, "Initial position learning rate")->capture_default_str();
  t->add_option("--lr-position-final", train.config.lr.position_final, "Final position learning rate")
      ->capture_default_str();
  t->add_option("--lr-rotation", train.config.lr.rotation, "Rotation learning rate")->capture_default_str();
  t->add_option("--lr-scale", train.config.lr.scale, "Log-scale learning rate")->capture_default_str();
  t->add_option("--lr-color", train.config.lr.color, "Color learning rate")->capture_default_str();
  t->add_option("--lr-opacity", train.config.lr.opacity, "Opacity logit learning rate")->capture_default_str();
  t->add_option("--lr-occupancy", train.config.lr.occupancy, "Occupancy logit learning rate")->capture_default_str();
  t->add_option("--lr-calibration", train.config.lr.calibration, "Calibration log-factor learning rate")
      ->capture_default_str();
  t->add_option("--static-iters", train.config.static_iters, "Leading iterations with the deformation frozen")
      ->capture_default_str();
  t->add_option("--lr-deform", train.config.lr.deform, "Deformation network learning rate")->capture_default_str();
  t->add_flag("--shuffle", train.config.shuffle, "Seeded per-epoch frame shuffle");
  t->add_flag("--no-calibration", train.no_calibration, "Keep calibration factors at one");
  t->add_flag("--no-resampling", train.no_resampling, "Skip resampling rounds");
  t->add_option("--resample-log", train.resample_log, "Write resampling pairs to this file");
  t->add_option("--progress-log", train.progress_log, "Write the progress CSV to this file");

  RenderArgs render_args;
  auto* r = app.add_subcommand("render", "Render color and panoptic labels");
  r->add_option("--ckpt", render_args.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  r->add_option("--scene", render_args.scene, "Scene directory")->required()->check(CLI::ExistingDirectory);
  r->add_option("--frame", render_args.frame, "Frame index")->capture_default_str();
  r->add_option("--time", render_args.time, "Override time in [0, 1]");
  r->add_option("--camera", render_args.camera, "Override camera index");
  r->add_option("--out-rgb", render_args.out_rgb, "Output PPM")->required();
  r->add_option("--out-panoptic", render_args.out_panoptic, "Output PGM labels")->required();
  r->add_option("--out-marginals", render_args.out_marginals, "Directory for per-instance marginal PGMs");

  EvalArgs eval_args;
  auto* e = app.add_subcommand("eval", "Score a checkpoint on a scene split");
  e->add_option("--ckpt", eval_args.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  e->add_option("--scene", eval_args.scene, "Scene directory")->required()->check(CLI::ExistingDirectory);
  e->add_option("--split", eval_args.split, "Split")->check(CLI::IsMember({"train", "test"}))->capture_default_str();
  e->add_option("--out", eval_args.out, "Key-value report file");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Write a synthetic scene");
  s->add_option("--preset", synth.preset, "Preset name")->required();
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
  s->add_option("--gt-ckpt", synth.gt_ckpt, "Also write the ground-truth checkpoint");

  MergeArgs merge;
  auto* m = app.add_subcommand("merge-views", "Merge single-view scenes into one sequence");
  m->add_option("--in", merge.inputs, "Scene directories in adjacency order")->required()->check(CLI::ExistingDirectory);
  m->add_option("--out", merge.out, "Output directory")->required();

  InspectArgs inspect;
  auto* i = app.add_subcommand("inspect", "Summarize a checkpoint or scene");
  i->add_option("--ckpt", inspect.ckpt, "Checkpoint")->check(CLI::ExistingFile);
  i->add_option("--scene", inspect.scene, "Scene directory")->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    configure_threads_from_env();
    if (*t) return cmd_train(train, out);
    if (*r) return cmd_render(render_args, out);
    if (*e) return cmd_eval(eval_args, out);
    if (*s) return cmd_synth(synth, out);
    if (*m) return cmd_merge(merge, out);
    if (*i) return cmd_inspect(inspect, out);
  } catch (const Error& ex) {
    err << "error [" << to_string(ex.code()) << "]: " << ex.what() << "\n";
    return ex.is_numeric() ? kExitNumeric : kExitInput;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}

}  // namespace cif

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "cif/deform.hpp"
#include "cif/gaussians.hpp"
#include "cif/rng.hpp"
#include "cif/splat.hpp"

namespace cif {

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;  // H*W*3, row-major, values in [0, 1]

  static RgbImage zeros(int width, int height) {
    return {width, height, std::vector<double>(static_cast<std::size_t>(width) * height * 3, 0.0)};
  }
  bool operator==(const RgbImage&) const = default;
};

/// Per-pixel instance labels; 0 is background.
struct LabelImage {
  int width = 0;
  int height = 0;
  std::vector<int> labels;  // H*W

  static LabelImage zeros(int width, int height) {
    return {width, height, std::vector<int>(static_cast<std::size_t>(width) * height, 0)};
  }
  int max_label() const;
  bool operator==(const LabelImage&) const = default;
};

// Binary NetPBM: P6 for 8-bit RGB, P5 for 8-bit labels. Floats are stored as
// round(255 v).
std::string encode_ppm(const RgbImage& image);
RgbImage decode_ppm(std::string_view bytes);
std::string encode_pgm(const LabelImage& mask);
LabelImage decode_pgm(std::string_view bytes);

void write_image_ppm(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_image_ppm(const std::filesystem::path& path);
void write_mask_pgm(const std::filesystem::path& path, const LabelImage& mask);
LabelImage read_mask_pgm(const std::filesystem::path& path);

/// Rounds every channel to the nearest 8-bit level.
RgbImage quantize(const RgbImage& image);
RgbImage to_image(const RenderBuffers& buffers);

enum class Split { Train, Test };

struct FrameObservation {
  double time = 0.0;
  std::size_t camera = 0;
  RgbImage rgb;
  LabelImage mask;
  Split split = Split::Train;
  int view = 0;  // source view, used by the multi-view filter
  std::string name;
};

struct SceneDataset {
  std::vector<FrameObservation> frames;
  std::vector<Camera> cameras;
  int instances = 0;  // K
  Eigen::Vector3d bounds_min = Eigen::Vector3d::Constant(-1.0);
  Eigen::Vector3d bounds_max = Eigen::Vector3d::Constant(1.0);
  std::vector<Eigen::Vector3d> seed_points;

  std::vector<std::size_t> split_indices(Split split) const;
  int view_count() const;
  void validate() const;
};

/// Reads `dir/scene.json` with its `rgb/*.ppm` and `mask/*.pgm` files.
SceneDataset load_scene(const std::filesystem::path& dir);
void write_scene(const std::filesystem::path& dir, const SceneDataset& scene);

/// Concatenates per-view sequences, keeping odd-numbered views (1st, 3rd, ...)
/// in time order and reversing even-numbered ones.
template <class T>
std::vector<T> zigzag_merge(const std::vector<std::vector<T>>& views);

/// Merges single-view scenes into one pseudo-monocular scene in zigzag order.
/// Frames keep their camera and time and record their source view.
SceneDataset merge_views(const std::vector<SceneDataset>& views);

struct VisibilityResult {
  SceneDataset scene;
  std::vector<int> retained;  // original labels kept, in new-label order
};

/// Keeps instances whose masks are non-empty in every view; dropped labels
/// become background and the rest are renumbered 1..K' in original order.
VisibilityResult visibility_filter(const SceneDataset& scene);

// --- synthetic scenes --------------------------------------------------------

struct BlobSpec {
  std::vector<Eigen::Vector3d> waypoints;  // evenly spaced in time; one entry = static
  Eigen::Vector3d color = Eigen::Vector3d::Constant(0.5);
  double radius = 0.3;
  int instance = 1;
};

struct SynthSpec {
  std::string name;
  std::vector<BlobSpec> blobs;
  int width = 64;
  int height = 64;
  int frames = 60;
  double focal = 90.0;
  double orbit_radius = 4.0;
  double orbit_degrees = 30.0;  // total sweep around the vertical axis
  double elevation = 0.0;       // camera height
  Eigen::Vector3d bounds_min = Eigen::Vector3d::Constant(-1.5);
  Eigen::Vector3d bounds_max = Eigen::Vector3d::Constant(1.5);
  int gaussians = 240;          // total ground-truth primitives
  double opacity = 0.95;
  double occupancy = 0.95;
  int test_every = 8;
};

struct SynthScene {
  SceneDataset dataset;
  GaussianSet gaussians;  // canonical ground truth, one-hot identities
  DeformationField deform;  // reproduces the blob trajectories exactly
  std::vector<int> owner;   // instance label of every primitive
};

std::vector<std::string> synth_presets();
SynthSpec synth_preset(std::string_view name);
SynthScene synth_scene(const SynthSpec& spec, Rng& rng);

}  // namespace cif

#include "cif/detail/zigzag.hpp"

#include "cif/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "json.hpp"

#include "cif/error.hpp"
#include "cif/eval.hpp"

namespace cif {

namespace fs = std::filesystem;
using nlohmann::json;

int LabelImage::max_label() const {
  return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
}

// --- NetPBM ------------------------------------------------------------------

namespace {

struct PnmHeader {
  int width = 0;
  int height = 0;
  std::size_t data_offset = 0;
};

PnmHeader parse_header(std::string_view bytes, std::string_view magic) {
  if (bytes.size() < 2 || bytes.substr(0, 2) != magic) {
    fail(ErrorCode::MalformedHeader, "expected NetPBM magic " + std::string(magic));
  }
  std::size_t at = 2;
  auto next_number = [&]() -> long {
    // whitespace and '#' comments may separate header fields
    while (at < bytes.size()) {
      const char c = bytes[at];
      if (c == '#') {
        while (at < bytes.size() && bytes[at] != '\n') ++at;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++at;
      } else {
        break;
      }
    }
    if (at >= bytes.size() || !std::isdigit(static_cast<unsigned char>(bytes[at]))) {
      fail(ErrorCode::MalformedHeader, "malformed NetPBM header");
    }
    long value = 0;
    while (at < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[at]))) {
      value = value * 10 + (bytes[at] - '0');
      if (value > 1'000'000) fail(ErrorCode::MalformedHeader, "NetPBM header value out of range");
      ++at;
    }
    return value;
  };
  PnmHeader h;
  h.width = static_cast<int>(next_number());
  h.height = static_cast<int>(next_number());
  const long maxval = next_number();
  if (h.width <= 0 || h.height <= 0) fail(ErrorCode::MalformedHeader, "NetPBM image has no pixels");
  if (maxval != 255) {
    fail(ErrorCode::UnsupportedFormat, "unsupported NetPBM maxval " + std::to_string(maxval));
  }
  if (at >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[at]))) {
    fail(ErrorCode::MalformedHeader, "NetPBM header must end with whitespace");
  }
  h.data_offset = at + 1;
  return h;
}

unsigned char to_byte(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::Io, "failed to write " + path.string());
}

}  // namespace

std::string encode_ppm(const RgbImage& image) {
  std::string out = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.reserve(out.size() + image.data.size());
  for (double v : image.data) out.push_back(static_cast<char>(to_byte(v)));
  return out;
}

RgbImage decode_ppm(std::string_view bytes) {
  const PnmHeader h = parse_header(bytes, "P6");
  const std::size_t count = static_cast<std::size_t>(h.width) * static_cast<std::size_t>(h.height) * 3;
  if (bytes.size() - h.data_offset < count) fail(ErrorCode::Truncated, "PPM pixel data is truncated");
  RgbImage image = RgbImage::zeros(h.width, h.height);
  for (std::size_t i = 0; i < count; ++i) {
    image.data[i] = static_cast<unsigned char>(bytes[h.data_offset + i]) / 255.0;
  }
  return image;
}

std::string encode_pgm(const LabelImage& mask) {
  std::string out = "P5\n" + std::to_string(mask.width) + " " + std::to_string(mask.height) + "\n255\n";
  out.reserve(out.size() + mask.labels.size());
  for (int v : mask.labels) {
    if (v < 0 || v > 255) fail(ErrorCode::Data, "label " + std::to_string(v) + " does not fit in 8 bits");
    out.push_back(static_cast<char>(v));
  }
  return out;
}

LabelImage decode_pgm(std::string_view bytes) {
  const PnmHeader h = parse_header(bytes, "P5");
  const std::size_t count = static_cast<std::size_t>(h.width) * static_cast<std::size_t>(h.height);
  if (bytes.size() - h.data_offset < count) fail(ErrorCode::Truncated, "PGM pixel data is truncated");
  LabelImage mask = LabelImage::zeros(h.width, h.height);
  for (std::size_t i = 0; i < count; ++i) mask.labels[i] = static_cast<unsigned char>(bytes[h.data_offset + i]);
  return mask;
}

void write_image_ppm(const fs::path& path, const RgbImage& image) { write_file(path, encode_ppm(image)); }
RgbImage read_image_ppm(const fs::path& path) { return decode_ppm(read_file(path)); }
void write_mask_pgm(const fs::path& path, const LabelImage& mask) { write_file(path, encode_pgm(mask)); }
LabelImage read_mask_pgm(const fs::path& path) { return decode_pgm(read_file(path)); }

RgbImage quantize(const RgbImage& image) {
  RgbImage out = image;
  for (double& v : out.data) v = to_byte(v) / 255.0;
  return out;
}

RgbImage to_image(const RenderBuffers& buffers) {
  return {buffers.width, buffers.height, buffers.color};
}

// --- scene ---------------------------------------------------------------------

std::vector<std::size_t> SceneDataset::split_indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    if (frames[f].split == split) out.push_back(f);
  }
  return out;
}

int SceneDataset::view_count() const {
  int views = 0;
  for (const auto& f : frames) views = std::max(views, f.view + 1);
  return views;
}

void SceneDataset::validate() const {
  for (const Camera& cam : cameras) cam.validate();
  for (const FrameObservation& f : frames) {
    if (f.camera >= cameras.size()) fail(ErrorCode::Data, "frame '" + f.name + "' references a missing camera");
    const Camera& cam = cameras[f.camera];
    if (f.rgb.width != cam.width || f.rgb.height != cam.height || f.mask.width != cam.width ||
        f.mask.height != cam.height) {
      fail(ErrorCode::DimensionMismatch, "frame '" + f.name + "' does not match its camera size");
    }
    if (f.rgb.data.size() != static_cast<std::size_t>(cam.width) * cam.height * 3 ||
        f.mask.labels.size() != static_cast<std::size_t>(cam.width) * cam.height) {
      fail(ErrorCode::DimensionMismatch, "frame '" + f.name + "' has inconsistent buffers");
    }
    if (!(f.time >= 0.0 && f.time <= 1.0)) fail(ErrorCode::Data, "frame '" + f.name + "' has time outside [0, 1]");
    const int max_label = f.mask.max_label();
    if (max_label > instances) {
      fail(ErrorCode::LabelOverflow, "frame '" + f.name + "' has label " + std::to_string(max_label) +
                                         " but K=" + std::to_string(instances));
    }
    for (int label : f.mask.labels) {
      if (label < 0) fail(ErrorCode::Data, "negative mask label");
    }
  }
}

namespace {

Camera camera_from_json(const json& j) {
  Camera cam;
  cam.width = j.at("width").get<int>();
  cam.height = j.at("height").get<int>();
  cam.fx = j.at("fx").get<double>();
  cam.fy = j.at("fy").get<double>();
  cam.cx = j.at("cx").get<double>();
  cam.cy = j.at("cy").get<double>();
  const auto ext = j.at("extrinsic").get<std::vector<double>>();
  if (ext.size() != 12) fail(ErrorCode::Data, "camera extrinsic must have 12 entries (row-major 3x4)");
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) cam.rotation(r, c) = ext[static_cast<std::size_t>(r * 4 + c)];
    cam.translation[r] = ext[static_cast<std::size_t>(r * 4 + 3)];
  }
  return cam;
}

json camera_to_json(const Camera& cam) {
  std::vector<double> ext;
  const auto m = cam.extrinsic();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) ext.push_back(m(r, c));
  }
  return {{"width", cam.width}, {"height", cam.height}, {"fx", cam.fx}, {"fy", cam.fy},
          {"cx", cam.cx},       {"cy", cam.cy},         {"extrinsic", ext}};
}

Eigen::Vector3d vec3(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) fail(ErrorCode::Data, "expected a 3-vector");
  return {v[0], v[1], v[2]};
}

}  // namespace

SceneDataset load_scene(const fs::path& dir) {
  const fs::path manifest = dir / "scene.json";
  if (!fs::exists(manifest)) fail(ErrorCode::MissingManifest, "missing manifest " + manifest.string());

  json j;
  try {
    j = json::parse(read_file(manifest));
  } catch (const json::exception& e) {
    fail(ErrorCode::Data, "cannot parse " + manifest.string() + ": " + e.what());
  }

  SceneDataset scene;
  try {
    for (const auto& c : j.at("cameras")) scene.cameras.push_back(camera_from_json(c));
    if (j.contains("bounds")) {
      scene.bounds_min = vec3(j["bounds"].at("min"));
      scene.bounds_max = vec3(j["bounds"].at("max"));
    }
    if (j.contains("seed_points")) {
      for (const auto& p : j["seed_points"]) scene.seed_points.push_back(vec3(p));
    }
    const auto& frames = j.at("frames");
    std::size_t index = 0;
    for (const auto& fj : frames) {
      FrameObservation f;
      f.camera = fj.at("camera").get<std::size_t>();
      f.time = fj.at("time").get<double>();
      f.view = fj.value("view", 0);
      const std::string rgb = fj.at("rgb").get<std::string>();
      const std::string mask = fj.at("mask").get<std::string>();
      f.name = fj.value("name", fs::path(rgb).stem().string());
      if (fj.contains("split")) {
        const std::string split = fj["split"].get<std::string>();
        if (split != "train" && split != "test") fail(ErrorCode::Data, "unknown split '" + split + "'");
        f.split = split == "test" ? Split::Test : Split::Train;
      } else {
        f.split = index % 8 == 0 ? Split::Test : Split::Train;
      }
      f.rgb = read_image_ppm(dir / rgb);
      f.mask = read_mask_pgm(dir / mask);
      scene.frames.push_back(std::move(f));
      ++index;
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::Data, "invalid manifest " + manifest.string() + ": " + e.what());
  }

  // Normalize times to [0, 1] when the manifest uses another range.
  if (!scene.frames.empty()) {
    auto [lo, hi] = std::minmax_element(scene.frames.begin(), scene.frames.end(),
                                        [](const auto& a, const auto& b) { return a.time < b.time; });
    const double t0 = lo->time;
    const double t1 = hi->time;
    if (t0 < 0.0 || t1 > 1.0) {
      for (auto& f : scene.frames) f.time = t1 > t0 ? (f.time - t0) / (t1 - t0) : 0.0;
    }
  }

  int max_label = 0;
  for (const auto& f : scene.frames) max_label = std::max(max_label, f.mask.max_label());
  if (j.contains("instances")) {
    scene.instances = j["instances"].get<int>();
    if (max_label > scene.instances) {
      fail(ErrorCode::LabelOverflow, "mask label " + std::to_string(max_label) + " exceeds declared K=" +
                                         std::to_string(scene.instances));
    }
  } else {
    scene.instances = max_label;
  }
  scene.validate();
  return scene;
}

void write_scene(const fs::path& dir, const SceneDataset& scene) {
  fs::create_directories(dir / "rgb");
  fs::create_directories(dir / "mask");
  json j;
  j["version"] = 1;
  j["instances"] = scene.instances;
  j["bounds"] = {{"min", {scene.bounds_min.x(), scene.bounds_min.y(), scene.bounds_min.z()}},
                 {"max", {scene.bounds_max.x(), scene.bounds_max.y(), scene.bounds_max.z()}}};
  j["cameras"] = json::array();
  for (const auto& cam : scene.cameras) j["cameras"].push_back(camera_to_json(cam));
  if (!scene.seed_points.empty()) {
    j["seed_points"] = json::array();
    for (const auto& p : scene.seed_points) j["seed_points"].push_back({p.x(), p.y(), p.z()});
  }
  j["frames"] = json::array();
  for (std::size_t f = 0; f < scene.frames.size(); ++f) {
    const auto& frame = scene.frames[f];
    std::ostringstream stem;
    stem << std::setw(4) << std::setfill('0') << f;
    const std::string rgb = "rgb/" + stem.str() + ".ppm";
    const std::string mask = "mask/" + stem.str() + ".pgm";
    write_image_ppm(dir / rgb, frame.rgb);
    write_mask_pgm(dir / mask, frame.mask);
    j["frames"].push_back({{"name", frame.name.empty() ? stem.str() : frame.name},
                           {"rgb", rgb},
                           {"mask", mask},
                           {"camera", frame.camera},
                           {"time", frame.time},
                           {"view", frame.view},
                           {"split", frame.split == Split::Test ? "test" : "train"}});
  }
  write_file(dir / "scene.json", j.dump(2) + "\n");
}

// --- multi-view merge ----------------------------------------------------------

SceneDataset merge_views(const std::vector<SceneDataset>& views) {
  if (views.empty()) fail(ErrorCode::Usage, "merge needs at least one view");
  SceneDataset merged;
  merged.bounds_min = views.front().bounds_min;
  merged.bounds_max = views.front().bounds_max;
  std::vector<std::vector<FrameObservation>> sequences;
  for (std::size_t v = 0; v < views.size(); ++v) {
    const SceneDataset& view = views[v];
    const std::size_t camera_offset = merged.cameras.size();
    merged.cameras.insert(merged.cameras.end(), view.cameras.begin(), view.cameras.end());
    merged.instances = std::max(merged.instances, view.instances);
    merged.bounds_min = merged.bounds_min.cwiseMin(view.bounds_min);
    merged.bounds_max = merged.bounds_max.cwiseMax(view.bounds_max);
    std::vector<FrameObservation> frames = view.frames;
    for (auto& f : frames) {
      f.camera += camera_offset;
      f.view = static_cast<int>(v);
    }
    sequences.push_back(std::move(frames));
  }
  merged.frames = zigzag_merge(sequences);
  return merged;
}

VisibilityResult visibility_filter(const SceneDataset& scene) {
  const int views = std::max(1, scene.view_count());
  const int k = scene.instances;
  // seen[v][label]
  std::vector<std::vector<bool>> seen(static_cast<std::size_t>(views),
                                      std::vector<bool>(static_cast<std::size_t>(k) + 1, false));
  for (const auto& f : scene.frames) {
    for (int label : f.mask.labels) {
      if (label > 0 && label <= k) seen[static_cast<std::size_t>(f.view)][static_cast<std::size_t>(label)] = true;
    }
  }
  std::vector<int> remap(static_cast<std::size_t>(k) + 1, 0);
  VisibilityResult result;
  for (int label = 1; label <= k; ++label) {
    bool everywhere = true;
    for (int v = 0; v < views; ++v) everywhere = everywhere && seen[static_cast<std::size_t>(v)][static_cast<std::size_t>(label)];
    if (everywhere) {
      result.retained.push_back(label);
      remap[static_cast<std::size_t>(label)] = static_cast<int>(result.retained.size());
    }
  }
  result.scene = scene;
  result.scene.instances = static_cast<int>(result.retained.size());
  for (auto& f : result.scene.frames) {
    for (int& label : f.mask.labels) label = label >= 0 && label <= k ? remap[static_cast<std::size_t>(label)] : 0;
  }
  return result;
}

// --- synthetic scenes ------------------------------------------------------------

std::vector<std::string> synth_presets() { return {"blob1-static", "blobs2", "blobs3-occlude"}; }

SynthSpec synth_preset(std::string_view name) {
  SynthSpec spec;
  spec.name = std::string(name);
  if (name == "blob1-static") {
    spec.blobs = {{{Eigen::Vector3d(0.0, 0.0, 0.0)}, {0.9, 0.6, 0.2}, 0.5, 1}};
    spec.width = 32;
    spec.height = 32;
    spec.frames = 4;
    spec.focal = 40.0;
    spec.orbit_degrees = 0.0;
    spec.gaussians = 40;
    spec.bounds_min = Eigen::Vector3d::Constant(-1.0);
    spec.bounds_max = Eigen::Vector3d::Constant(1.0);
  } else if (name == "blobs2") {
    spec.blobs = {{{Eigen::Vector3d(-0.55, 0.0, 0.0)}, {0.85, 0.25, 0.2}, 0.4, 1},
                  {{Eigen::Vector3d(0.55, 0.1, 0.2)}, {0.2, 0.35, 0.9}, 0.4, 2}};
    spec.width = 48;
    spec.height = 48;
    spec.frames = 16;
    spec.focal = 60.0;
    spec.orbit_degrees = 40.0;
    spec.gaussians = 160;
    spec.bounds_min = Eigen::Vector3d(-1.2, -0.8, -0.8);
    spec.bounds_max = Eigen::Vector3d(1.2, 0.8, 0.8);
  } else if (name == "blobs3-occlude") {
    // Blob 2 sweeps left to right in front of blob 3, covering it mid-sequence.
    spec.blobs = {{{Eigen::Vector3d(-0.6, -0.6, 0.2)}, {0.85, 0.25, 0.2}, 0.4, 1},
                  {{Eigen::Vector3d(-0.9, 0.15, -0.6), Eigen::Vector3d(0.9, 0.15, -0.6)}, {0.2, 0.75, 0.3}, 0.4, 2},
                  {{Eigen::Vector3d(0.0, 0.15, 0.5)}, {0.25, 0.35, 0.9}, 0.4, 3}};
    spec.width = 64;
    spec.height = 64;
    spec.frames = 60;
    spec.focal = 90.0;
    spec.orbit_degrees = 24.0;
    spec.gaussians = 300;
    spec.bounds_min = Eigen::Vector3d(-1.4, -1.1, -1.1);
    spec.bounds_max = Eigen::Vector3d(1.4, 0.7, 1.0);
  } else {
    fail(ErrorCode::Usage, "unknown synthetic preset '" + std::string(name) + "'");
  }
  return spec;
}

namespace {

// Builds a ReLU network whose position head reproduces piecewise-linear blob
// trajectories exactly. Each moving blob is isolated by an indicator over a
// coordinate slab that contains only its own primitives:
//   layer 1: t, and four ramps per moving blob (indicator = r1 - r2 - r3 + r4)
//   layer 2: (t - t_c)+ gated by the indicator, one unit per segment
//   output : sum of velocity changes times the gated units
DeformationField trajectory_field(const SynthSpec& spec, const GaussianSet& set, const std::vector<int>& owner_blob) {
  DeformationField field(DeformConfig{});
  auto& layers = field.layers();
  const int width1 = static_cast<int>(layers[0].weight.rows());
  const int width2 = static_cast<int>(layers[1].weight.rows());
  layers[0].weight(0, 3) = 1.0;  // unit 0 = relu(t) = t

  int unit1 = 1;
  int unit2 = 0;
  const auto n = static_cast<Eigen::Index>(set.size());
  for (std::size_t b = 0; b < spec.blobs.size(); ++b) {
    const auto& wp = spec.blobs[b].waypoints;
    bool moving = false;
    for (const auto& p : wp) moving = moving || (p - wp.front()).norm() > 0.0;
    if (!moving) continue;

    int best_axis = -1;
    double best_gap = 0.0, best_lo = 0.0, best_hi = 0.0;
    for (int axis = 0; axis < 3; ++axis) {
      double lo = INFINITY, hi = -INFINITY;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (owner_blob[static_cast<std::size_t>(i)] != static_cast<int>(b)) continue;
        lo = std::min(lo, set.position(i, axis));
        hi = std::max(hi, set.position(i, axis));
      }
      double gap = INFINITY;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (owner_blob[static_cast<std::size_t>(i)] == static_cast<int>(b)) continue;
        const double v = set.position(i, axis);
        gap = std::min(gap, v < lo ? lo - v : (v > hi ? v - hi : 0.0));
      }
      if (gap > best_gap) {
        best_gap = gap;
        best_axis = axis;
        best_lo = lo;
        best_hi = hi;
      }
    }
    if (best_axis < 0 || !(best_gap > 1e-6)) {
      fail(ErrorCode::Data, "moving blob " + std::to_string(b) + " overlaps other blobs along every axis");
    }
    const int segments = static_cast<int>(wp.size()) - 1;
    if (unit1 + 4 > width1 || unit2 + segments > width2) {
      fail(ErrorCode::Data, "too many moving blobs or waypoints for the trajectory network");
    }
    const double slope = 2.0 / std::min(best_gap, 1.0);  // ramps are half a gap wide
    const double offsets[4] = {-slope * best_lo + 1.0, -slope * best_lo, -slope * best_hi, -slope * best_hi - 1.0};
    const double signs[4] = {1.0, -1.0, -1.0, 1.0};
    for (int r = 0; r < 4; ++r) {
      layers[0].weight(unit1 + r, best_axis) = slope;
      layers[0].bias[unit1 + r] = offsets[r];
    }
    Eigen::Vector3d previous_velocity = Eigen::Vector3d::Zero();
    for (int c = 0; c < segments; ++c) {
      const double knot = static_cast<double>(c) / segments;
      layers[1].weight(unit2, 0) = 1.0;
      for (int r = 0; r < 4; ++r) layers[1].weight(unit2, unit1 + r) = signs[r];
      layers[1].bias[unit2] = -1.0 - knot;
      const Eigen::Vector3d velocity = (wp[static_cast<std::size_t>(c) + 1] - wp[static_cast<std::size_t>(c)]) * segments;
      layers[2].weight.block(0, unit2, 3, 1) = velocity - previous_velocity;
      previous_velocity = velocity;
      ++unit2;
    }
    unit1 += 4;
  }
  return field;
}

}  // namespace

SynthScene synth_scene(const SynthSpec& spec, Rng& rng) {
  if (spec.blobs.empty()) fail(ErrorCode::Usage, "synthetic scene needs at least one blob");
  if (spec.frames <= 0 || spec.width <= 0 || spec.height <= 0 || spec.gaussians < static_cast<int>(spec.blobs.size())) {
    fail(ErrorCode::Usage, "synthetic scene sizes must be positive");
  }
  std::set<int> ids;
  for (const auto& blob : spec.blobs) {
    if (blob.waypoints.empty()) fail(ErrorCode::Usage, "blob needs at least one waypoint");
    ids.insert(blob.instance);
    for (const auto& p : blob.waypoints) {
      const Eigen::Vector3d r = Eigen::Vector3d::Constant(blob.radius);
      if (((p - r).array() < spec.bounds_min.array()).any() || ((p + r).array() > spec.bounds_max.array()).any()) {
        fail(ErrorCode::Data, "blob trajectory leaves the bounding box");
      }
    }
  }
  const int k = static_cast<int>(ids.size());
  if (*ids.begin() != 1 || *ids.rbegin() != k) fail(ErrorCode::Usage, "blob instance ids must be dense 1..K");

  SynthScene out;
  const auto n = static_cast<std::size_t>(spec.gaussians);
  out.gaussians = GaussianSet::create(n, static_cast<std::size_t>(k));
  out.owner.assign(n, 0);
  std::vector<int> owner_blob(n, 0);
  const std::size_t blobs = spec.blobs.size();
  std::size_t at = 0;
  for (std::size_t b = 0; b < blobs; ++b) {
    const BlobSpec& blob = spec.blobs[b];
    const std::size_t count = n / blobs + (b < n % blobs ? 1 : 0);
    for (std::size_t c = 0; c < count; ++c, ++at) {
      Eigen::Vector3d offset;
      do {
        offset = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
      } while (offset.squaredNorm() > 1.0);
      const auto i = static_cast<Eigen::Index>(at);
      out.gaussians.position.row(i) = (blob.waypoints.front() + 0.6 * blob.radius * offset).transpose();
      out.gaussians.log_scale.row(i).setConstant(std::log(0.35 * blob.radius));
      out.gaussians.color.row(i) = blob.color.transpose();
      out.gaussians.opacity_logit[i] = logit(spec.opacity);
      out.gaussians.occupancy_logit[i] = logit(spec.occupancy);
      out.gaussians.base_identity.row(i).setZero();
      out.gaussians.base_identity(i, blob.instance - 1) = 1.0;
      out.owner[at] = blob.instance;
      owner_blob[at] = static_cast<int>(b);
    }
  }
  out.deform = trajectory_field(spec, out.gaussians, owner_blob);

  SceneDataset& scene = out.dataset;
  scene.instances = k;
  scene.bounds_min = spec.bounds_min;
  scene.bounds_max = spec.bounds_max;
  const double sweep = spec.orbit_degrees * std::numbers::pi / 180.0;
  for (int f = 0; f < spec.frames; ++f) {
    const double u = spec.frames > 1 ? static_cast<double>(f) / (spec.frames - 1) : 0.0;
    const double angle = sweep * (u - 0.5);
    const Eigen::Vector3d eye(spec.orbit_radius * std::sin(angle), spec.elevation, -spec.orbit_radius * std::cos(angle));
    scene.cameras.push_back(
        Camera::look_at(eye, Eigen::Vector3d::Zero(), Eigen::Vector3d(0.0, -1.0, 0.0), spec.focal, spec.width, spec.height));

    FrameObservation frame;
    frame.time = u;
    frame.camera = static_cast<std::size_t>(f);
    frame.split = f % spec.test_every == 0 ? Split::Test : Split::Train;
    std::ostringstream name;
    name << std::setw(4) << std::setfill('0') << f;
    frame.name = name.str();
    const RenderBuffers buffers = render_reference(out.gaussians, out.deform, scene.cameras.back(), u);
    frame.rgb = quantize(to_image(buffers));
    frame.mask = panoptic_map(buffers);
    scene.frames.push_back(std::move(frame));
  }
  scene.validate();
  return out;
}

}  // namespace cif

#include "cif/core.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "cif/error.hpp"

namespace cif {

namespace {

Eigen::Matrix3d rotation_matrix(const Eigen::Vector4d& q) {
  return Eigen::Quaterniond(q[0], q[1], q[2], q[3]).normalized().toRotationMatrix();
}

}  // namespace

FieldSample field_query(const GaussianSet& set, const DeformationField& deform,
                        const Eigen::Vector3d& x, double t, std::size_t instance) {
  const std::size_t k = set.instances();
  if (instance < 1 || instance > k) {
    fail(ErrorCode::Usage, "instance must be in 1..K");
  }
  FieldSample sample;
  sample.identity = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(k), 1.0 / static_cast<double>(k));
  if (set.size() == 0) return sample;

  const DeformedState state = deform_forward(deform, set, t, false);
  double empty = 1.0;
  Eigen::VectorXd mixture = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
  double weight_sum = 0.0;
  for (Eigen::Index i = 0; i < state.position.rows(); ++i) {
    const Eigen::Matrix3d r = rotation_matrix(state.rotation.row(i).transpose());
    const Eigen::Vector3d s = state.scale.row(i).transpose();
    // Σ^{-1} = R diag(1/s²) Rᵀ
    const Eigen::Vector3d local = r.transpose() * (x - state.position.row(i).transpose());
    const double mahalanobis = (local.array() / s.array()).square().sum();
    const double kernel = std::exp(-0.5 * mahalanobis);
    const double weight = set.occupancy(static_cast<std::size_t>(i)) * kernel;
    if (weight <= 0.0) continue;
    empty *= 1.0 - weight;
    mixture += weight * effective_identity(set, static_cast<std::size_t>(i));
    weight_sum += weight;
  }
  sample.occupancy = 1.0 - empty;
  if (weight_sum > 0.0) {
    sample.identity = mixture / weight_sum;
    sample.identity_defined = true;
  }
  sample.joint = sample.occupancy * sample.identity[static_cast<Eigen::Index>(instance - 1)];
  return sample;
}

Eigen::VectorXd pack_parameters(const GaussianSet& set, const DeformationField& deform) {
  const ParamLayout layout(set, deform);
  Eigen::VectorXd packed(static_cast<Eigen::Index>(layout.total()));
  auto put = [&](std::size_t offset, const auto& block) {
    packed.segment(static_cast<Eigen::Index>(offset), block.size()) = block.template reshaped<Eigen::RowMajor>();
  };
  put(layout.position(), set.position);
  put(layout.rotation(), set.rotation);
  put(layout.log_scale(), set.log_scale);
  put(layout.color(), set.color);
  put(layout.opacity(), set.opacity_logit);
  put(layout.occupancy(), set.occupancy_logit);
  put(layout.base_identity(), set.base_identity);
  put(layout.calibration(), set.calibration_log);
  packed.tail(static_cast<Eigen::Index>(layout.deform)) = deform.flatten();
  return packed;
}

void unpack_parameters(const Eigen::Ref<const Eigen::VectorXd>& packed, GaussianSet& set,
                       DeformationField& deform) {
  const ParamLayout layout(set, deform);
  if (static_cast<std::size_t>(packed.size()) != layout.total()) {
    fail(ErrorCode::Structural, "packed parameter vector has length " + std::to_string(packed.size()) +
                                    ", expected " + std::to_string(layout.total()));
  }
  auto take = [&](std::size_t offset, auto& block) {
    block.template reshaped<Eigen::RowMajor>() =
        packed.segment(static_cast<Eigen::Index>(offset), block.size());
  };
  take(layout.position(), set.position);
  take(layout.rotation(), set.rotation);
  take(layout.log_scale(), set.log_scale);
  take(layout.color(), set.color);
  take(layout.opacity(), set.opacity_logit);
  take(layout.occupancy(), set.occupancy_logit);
  take(layout.base_identity(), set.base_identity);
  take(layout.calibration(), set.calibration_log);
  deform.assign(packed.tail(static_cast<Eigen::Index>(layout.deform)));
}

// --- checkpoint -------------------------------------------------------------

namespace {

constexpr std::array<char, 4> kMagic{'C', 'I', 'F', '1'};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void u32(std::uint32_t v) { bytes(v, 4); }
  void u64(std::uint64_t v) { bytes(v, 8); }
  void f64(double v) { bytes(std::bit_cast<std::uint64_t>(v), 8); }

 private:
  void bytes(std::uint64_t v, int count) {
    for (int b = 0; b < count; ++b) out_.put(static_cast<char>((v >> (8 * b)) & 0xffU));
  }
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(bytes(4)); }
  std::uint64_t u64() { return bytes(8); }
  double f64() { return std::bit_cast<double>(bytes(8)); }

 private:
  std::uint64_t bytes(int count) {
    std::uint64_t v = 0;
    for (int b = 0; b < count; ++b) {
      const int c = in_.get();
      if (c == std::char_traits<char>::eof()) fail(ErrorCode::Truncated, "checkpoint is truncated");
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * b);
    }
    return v;
  }
  std::istream& in_;
};

}  // namespace

// Layout: magic, u32 version, u64 N, u64 K, u64 layer count, per layer u64
// (in, out), u64 L_x, u64 L_t, f64 packed parameters, u64 iteration, 4 x u64
// RNG state. All little-endian.
void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kMagic.data(), kMagic.size());
  Writer w(out);
  w.u32(kCheckpointVersion);
  w.u64(ckpt.gaussians.size());
  w.u64(ckpt.gaussians.instances());
  const auto& layers = ckpt.deform.layers();
  w.u64(layers.size());
  for (const auto& layer : layers) {
    w.u64(static_cast<std::uint64_t>(layer.weight.cols()));
    w.u64(static_cast<std::uint64_t>(layer.weight.rows()));
  }
  w.u64(static_cast<std::uint64_t>(ckpt.deform.config().position_frequencies));
  w.u64(static_cast<std::uint64_t>(ckpt.deform.config().time_frequencies));
  const Eigen::VectorXd packed = pack_parameters(ckpt.gaussians, ckpt.deform);
  for (double v : packed) w.f64(v);
  w.u64(ckpt.iteration);
  for (std::uint64_t word : ckpt.rng) w.u64(word);
  if (!out) fail(ErrorCode::Io, "failed to write checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != 4 || magic != kMagic) fail(ErrorCode::NotACheckpoint, "not a checkpoint");
  Reader r(in);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    fail(ErrorCode::UnsupportedVersion, "unsupported checkpoint version " + std::to_string(version));
  }
  constexpr std::uint64_t kSane = std::uint64_t{1} << 32;
  const std::uint64_t n = r.u64();
  const std::uint64_t k = r.u64();
  const std::uint64_t layer_count = r.u64();
  if (n >= kSane || k >= kSane || layer_count == 0 || layer_count > 64) {
    fail(ErrorCode::Structural, "checkpoint header has implausible sizes");
  }
  std::vector<std::pair<std::uint64_t, std::uint64_t>> dims(layer_count);
  for (auto& [in_dim, out_dim] : dims) {
    in_dim = r.u64();
    out_dim = r.u64();
    if (in_dim == 0 || out_dim == 0 || in_dim >= kSane || out_dim >= kSane) {
      fail(ErrorCode::Structural, "checkpoint layer dimensions are invalid");
    }
  }
  DeformConfig config;
  config.position_frequencies = static_cast<int>(r.u64());
  config.time_frequencies = static_cast<int>(r.u64());
  config.hidden.clear();
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) config.hidden.push_back(static_cast<int>(dims[l].second));

  Checkpoint ckpt{GaussianSet::create(n, k), DeformationField(config), 0, {}};
  const auto& layers = ckpt.deform.layers();
  for (std::size_t l = 0; l < dims.size(); ++l) {
    if (static_cast<std::uint64_t>(layers[l].weight.cols()) != dims[l].first ||
        static_cast<std::uint64_t>(layers[l].weight.rows()) != dims[l].second) {
      fail(ErrorCode::Structural, "checkpoint layer dimensions do not match the encoding");
    }
  }
  Eigen::VectorXd packed(static_cast<Eigen::Index>(ParamLayout(ckpt.gaussians, ckpt.deform).total()));
  for (double& v : packed) v = r.f64();
  unpack_parameters(packed, ckpt.gaussians, ckpt.deform);
  ckpt.iteration = r.u64();
  for (std::uint64_t& word : ckpt.rng) word = r.u64();
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace cif

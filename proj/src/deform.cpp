#include "cif/deform.hpp"

#include <cmath>
#include <string>

#include "cif/error.hpp"

namespace cif {

namespace {

constexpr double kMinRotationNorm = 1e-8;

void check_time(double t) {
  if (!(t >= 0.0 && t <= 1.0)) {
    fail(ErrorCode::Usage, "time must lie in [0, 1], got " + std::to_string(t));
  }
}

void encode_into(const Eigen::Vector3d& x, double t, int lx, int lt, double* out) {
  out[0] = x[0];
  out[1] = x[1];
  out[2] = x[2];
  out[3] = t;
  std::size_t at = 4;
  for (int l = 0; l < lx; ++l) {
    const double f = std::ldexp(1.0, l);
    for (int d = 0; d < 3; ++d) out[at + d] = std::sin(f * x[d]);
    for (int d = 0; d < 3; ++d) out[at + 3 + d] = std::cos(f * x[d]);
    at += 6;
  }
  for (int l = 0; l < lt; ++l) {
    const double f = std::ldexp(1.0, l);
    out[at] = std::sin(f * t);
    out[at + 1] = std::cos(f * t);
    at += 2;
  }
}

}  // namespace

DeformationField::DeformationField(DeformConfig config) : config_(std::move(config)) {
  if (config_.position_frequencies < 0 || config_.time_frequencies < 0) {
    fail(ErrorCode::Usage, "frequency counts must be non-negative");
  }
  int in = static_cast<int>(encoding_size());
  for (int width : config_.hidden) {
    if (width <= 0) fail(ErrorCode::Usage, "hidden layer widths must be positive");
    layers_.push_back({RowMatrix::Zero(width, in), Eigen::VectorXd::Zero(width)});
    in = width;
  }
  layers_.push_back({RowMatrix::Zero(kOutputs, in), Eigen::VectorXd::Zero(kOutputs)});
}

DeformationField DeformationField::create(const DeformConfig& config, Rng& rng) {
  DeformationField field(config);
  for (std::size_t l = 0; l + 1 < field.layers_.size(); ++l) {
    auto& layer = field.layers_[l];
    const double bound = std::sqrt(6.0 / static_cast<double>(layer.weight.cols()));
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
        layer.weight(r, c) = rng.uniform(-bound, bound);
      }
    }
  }
  return field;
}

std::size_t DeformationField::encoding_size() const {
  return 4 + 2 * (3 * static_cast<std::size_t>(config_.position_frequencies) +
                  static_cast<std::size_t>(config_.time_frequencies));
}

std::size_t DeformationField::weight_count() const {
  std::size_t count = 0;
  for (const auto& layer : layers_) {
    count += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
  }
  return count;
}

Eigen::VectorXd DeformationField::flatten() const {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(weight_count()));
  Eigen::Index at = 0;
  for (const auto& layer : layers_) {
    flat.segment(at, layer.weight.size()) = layer.weight.reshaped<Eigen::RowMajor>();
    at += layer.weight.size();
    flat.segment(at, layer.bias.size()) = layer.bias;
    at += layer.bias.size();
  }
  return flat;
}

void DeformationField::assign(const Eigen::Ref<const Eigen::VectorXd>& flat) {
  if (static_cast<std::size_t>(flat.size()) != weight_count()) {
    fail(ErrorCode::Structural, "deformation weight vector has the wrong length");
  }
  Eigen::Index at = 0;
  for (auto& layer : layers_) {
    layer.weight.reshaped<Eigen::RowMajor>() = flat.segment(at, layer.weight.size());
    at += layer.weight.size();
    layer.bias = flat.segment(at, layer.bias.size());
    at += layer.bias.size();
  }
}

Eigen::VectorXd encode(const Eigen::Vector3d& x, double t, int position_frequencies,
                       int time_frequencies) {
  check_time(t);
  Eigen::VectorXd out(4 + 2 * (3 * position_frequencies + time_frequencies));
  encode_into(x, t, position_frequencies, time_frequencies, out.data());
  return out;
}

DeformedState deform_forward(const DeformationField& field, const GaussianSet& set, double t,
                             bool keep_cache) {
  check_time(t);
  const Eigen::Index n = set.position.rows();
  const auto& cfg = field.config();

  RowMatrix features(n, static_cast<Eigen::Index>(field.encoding_size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    encode_into(set.position.row(i).transpose(), t, cfg.position_frequencies, cfg.time_frequencies,
                features.row(i).data());
  }

  std::vector<RowMatrix> activations;
  activations.reserve(field.layers().size());
  const RowMatrix* input = &features;
  RowMatrix out;
  for (std::size_t l = 0; l < field.layers().size(); ++l) {
    const auto& layer = field.layers()[l];
    RowMatrix z(n, layer.weight.rows());
    z.noalias() = *input * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    if (l + 1 == field.layers().size()) {
      out = std::move(z);
    } else {
      activations.push_back(z.cwiseMax(0.0));
      input = &activations.back();
    }
  }

  DeformedState state;
  state.time = t;
  state.position = set.position + out.leftCols(3);
  RowMatrix raw_rotation = set.rotation + out.middleCols(3, 4);
  state.rotation.resize(n, 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = raw_rotation.row(i).norm();
    if (!(norm >= kMinRotationNorm)) {
      fail(ErrorCode::DegenerateRotation,
           "deformed quaternion of primitive " + std::to_string(i) + " is degenerate");
    }
    state.rotation.row(i) = raw_rotation.row(i) / norm;
  }
  state.scale = (set.log_scale + out.rightCols(3)).array().exp();
  if (!state.position.allFinite() || !state.scale.allFinite()) {
    fail(ErrorCode::Numeric, "deformation produced non-finite geometry");
  }
  if (keep_cache) {
    state.cache.valid = true;
    state.cache.features = std::move(features);
    state.cache.activations = std::move(activations);
    state.cache.raw_rotation = std::move(raw_rotation);
  }
  return state;
}

DeformGradients deform_backward(const DeformationField& field, const GaussianSet& set,
                                const DeformedState& state, const RowMatrix& grad_position,
                                const RowMatrix& grad_rotation, const RowMatrix& grad_scale) {
  if (!state.cache.valid) {
    fail(ErrorCode::Usage, "deform_backward needs a forward pass with keep_cache");
  }
  const Eigen::Index n = set.position.rows();
  const auto& cache = state.cache;
  const auto& cfg = field.config();

  // Gradient on the network output (N x 10).
  RowMatrix grad_out(n, DeformationField::kOutputs);
  grad_out.leftCols(3) = grad_position;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::RowVector4d raw = cache.raw_rotation.row(i);
    const double norm = raw.norm();
    const Eigen::RowVector4d unit = raw / norm;
    const Eigen::RowVector4d g = grad_rotation.row(i);
    grad_out.block<1, 4>(i, 3) = (g - unit * unit.dot(g)) / norm;
  }
  grad_out.rightCols(3) = grad_scale.cwiseProduct(state.scale);

  DeformGradients grads;
  grads.weights = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(field.weight_count()));
  grads.position = grad_position;
  grads.rotation = grad_out.middleCols(3, 4);
  grads.log_scale = grad_out.rightCols(3);

  // Offsets of each layer inside the flat weight vector.
  std::vector<Eigen::Index> offsets;
  Eigen::Index at = 0;
  for (const auto& layer : field.layers()) {
    offsets.push_back(at);
    at += layer.weight.size() + layer.bias.size();
  }

  RowMatrix delta = std::move(grad_out);
  for (std::size_t l = field.layers().size(); l-- > 0;) {
    const auto& layer = field.layers()[l];
    const RowMatrix& input = l == 0 ? cache.features : cache.activations[l - 1];
    RowMatrix grad_weight(layer.weight.rows(), layer.weight.cols());
    grad_weight.noalias() = delta.transpose() * input;
    grads.weights.segment(offsets[l], layer.weight.size()) = grad_weight.reshaped<Eigen::RowMajor>();
    grads.weights.segment(offsets[l] + layer.weight.size(), layer.bias.size()) =
        delta.colwise().sum().transpose();
    RowMatrix grad_input(n, layer.weight.cols());
    grad_input.noalias() = delta * layer.weight;
    if (l > 0) {
      delta = (cache.activations[l - 1].array() > 0.0).select(grad_input, 0.0);
    } else {
      delta = std::move(grad_input);
    }
  }

  // delta now holds d/d(features); chain through the position encoding.
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::RowVector3d g = delta.block<1, 3>(i, 0);
    Eigen::Index f = 4;
    for (int l = 0; l < cfg.position_frequencies; ++l) {
      const double freq = std::ldexp(1.0, l);
      for (int d = 0; d < 3; ++d) {
        const double arg = freq * set.position(i, d);
        g[d] += delta(i, f + d) * freq * std::cos(arg) - delta(i, f + 3 + d) * freq * std::sin(arg);
      }
      f += 6;
    }
    grads.position.row(i) += g;
  }
  return grads;
}

}  // namespace cif

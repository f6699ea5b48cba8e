#pragma once

// Pose regression network over ordered correspondence clusters.
//
//   per member:  shared MLP (x, y, dx, dy) -> D features
//   per cluster: element-wise max over the members
//   aggregate:   concatenation in keypoint order (n * D)
//   head:        3 fully-connected layers -> raw quaternion (4) + translation (3)
//
// The single-pool variant appends the keypoint's 3D coordinates to every
// member and max-pools over all n * m members at once (output D).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "poseforge/correspondences.hpp"
#include "poseforge/errors.hpp"
#include "poseforge/geometry.hpp"
#include "poseforge/random.hpp"

namespace poseforge::regressor {

enum class Aggregation { grouped, single_pool };

inline std::string_view to_string(Aggregation a) {
  return a == Aggregation::grouped ? "grouped" : "single-pool";
}

inline Aggregation parse_aggregation(std::string_view s) {
  if (s == "grouped") return Aggregation::grouped;
  if (s == "single-pool") return Aggregation::single_pool;
  throw InvalidArgument("unknown aggregation '" + std::string(s) + "'");
}

struct NetworkConfig {
  Aggregation aggregation = Aggregation::grouped;
  CorrespondenceMode mode = CorrespondenceMode::point;
  std::size_t n = 8;                                  // clusters / keypoints
  std::size_t m = kDefaultClusterSize;                // members per cluster (metadata)
  std::vector<std::size_t> local_widths = {64, 128, 128};
  std::vector<std::size_t> head_widths = {256, 256};  // hidden; the output layer has 7 units
  double leaky_slope = 0.01;
  Vec3 translation_scale{2.0, 2.0, 8.0};
  ImageSize image{};
  double offset_scale = 100.0;  // point-mode dx, dy divisor (pixels)

  std::size_t input_dim() const { return aggregation == Aggregation::grouped ? 4 : 7; }
  std::size_t feature_dim() const { return local_widths.back(); }
  std::size_t aggregate_dim() const {
    return aggregation == Aggregation::grouped ? n * feature_dim() : feature_dim();
  }

  void validate() const {
    if (n < 1) throw InvalidArgument("network needs at least one cluster");
    if (local_widths.empty() || head_widths.empty()) {
      throw InvalidArgument("network needs local and head layers");
    }
    for (auto w : local_widths) if (w == 0) throw InvalidArgument("zero layer width");
    for (auto w : head_widths) if (w == 0) throw InvalidArgument("zero layer width");
    if (!(translation_scale.array() > 0.0).all()) {
      throw InvalidArgument("translation scale must be positive");
    }
    if (!(leaky_slope >= 0.0 && leaky_slope <= 1.0)) {
      throw InvalidArgument("leaky slope must lie in [0, 1]");
    }
  }

  bool operator==(const NetworkConfig&) const = default;
};

inline constexpr std::size_t kOutputDim = 7;

struct LayerShape {
  std::size_t in, out, offset;  // offset of the weights; the bias follows them
};

inline std::vector<LayerShape> layer_shapes(const NetworkConfig& cfg) {
  std::vector<LayerShape> shapes;
  std::size_t offset = 0;
  std::size_t in = cfg.input_dim();
  const auto add = [&](std::size_t out) {
    shapes.push_back({in, out, offset});
    offset += in * out + out;
    in = out;
  };
  for (auto w : cfg.local_widths) add(w);
  in = cfg.aggregate_dim();
  for (auto w : cfg.head_widths) add(w);
  add(kOutputDim);
  return shapes;
}

inline std::size_t parameter_count(const NetworkConfig& cfg) {
  const auto shapes = layer_shapes(cfg);
  const auto& last = shapes.back();
  return last.offset + last.in * last.out + last.out;
}

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// All weights and biases (also used as the gradient container).
/// Weights are stored row-major (out x in), each followed by its bias.
template <typename Scalar>
class RegressorParams {
 public:
  using WeightMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstWeightMap = Eigen::Map<const RowMatrix<Scalar>>;
  using BiasMap = Eigen::Map<Vector<Scalar>>;
  using ConstBiasMap = Eigen::Map<const Vector<Scalar>>;

  RegressorParams() = default;
  explicit RegressorParams(NetworkConfig config)
      : config_(std::move(config)), shapes_(layer_shapes(config_)) {
    config_.validate();
    data_ = Vector<Scalar>::Zero(static_cast<Eigen::Index>(parameter_count(config_)));
  }

  const NetworkConfig& config() const { return config_; }
  std::size_t local_layer_count() const { return config_.local_widths.size(); }
  std::size_t layer_count() const { return shapes_.size(); }
  const LayerShape& shape(std::size_t layer) const { return shapes_[layer]; }

  Vector<Scalar>& data() { return data_; }
  const Vector<Scalar>& data() const { return data_; }
  std::size_t size() const { return static_cast<std::size_t>(data_.size()); }

  WeightMap weight(std::size_t layer) {
    const auto& s = shapes_[layer];
    return WeightMap(data_.data() + s.offset, s.out, s.in);
  }
  ConstWeightMap weight(std::size_t layer) const {
    const auto& s = shapes_[layer];
    return ConstWeightMap(data_.data() + s.offset, s.out, s.in);
  }
  BiasMap bias(std::size_t layer) {
    const auto& s = shapes_[layer];
    return BiasMap(data_.data() + s.offset + s.in * s.out, s.out);
  }
  ConstBiasMap bias(std::size_t layer) const {
    const auto& s = shapes_[layer];
    return ConstBiasMap(data_.data() + s.offset + s.in * s.out, s.out);
  }

  RegressorParams zeros_like() const {
    RegressorParams out = *this;
    out.data_.setZero();
    return out;
  }

  template <typename Other>
  RegressorParams<Other> cast() const {
    RegressorParams<Other> out(config_);
    out.data() = data_.template cast<Other>();
    return out;
  }

 private:
  NetworkConfig config_;
  std::vector<LayerShape> shapes_;
  Vector<Scalar> data_;
};

/// Uniform fan-in initialization, U(-1/sqrt(in), 1/sqrt(in)). The output bias
/// starts at the identity rotation and the mid-range depth.
template <typename Scalar>
RegressorParams<Scalar> init_params(const NetworkConfig& config, std::uint64_t seed) {
  RegressorParams<Scalar> p(config);
  Rng rng(seed);
  for (std::size_t l = 0; l < p.layer_count(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(p.shape(l).in));
    auto w = p.weight(l);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = Scalar(rng.uniform(-bound, bound));
    auto b = p.bias(l);
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = Scalar(rng.uniform(-bound, bound));
  }
  auto out_bias = p.bias(p.layer_count() - 1);
  out_bias << Scalar(1), Scalar(0), Scalar(0), Scalar(0), Scalar(0), Scalar(0),
      Scalar(6.0 / config.translation_scale.z());
  return p;
}

/// Activations kept for the backward pass.
template <typename Scalar>
struct ForwardTrace {
  std::size_t n = 0, m = 0;
  RowMatrix<Scalar> input;                     // (n*m) x input_dim
  std::vector<RowMatrix<Scalar>> local;        // per local layer, (n*m) x width
  std::vector<std::int32_t> argmax;            // grouped: n x D, single-pool: D (row index)
  std::vector<Vector<Scalar>> head;            // [aggregate, hidden..., output]
  Eigen::Matrix<Scalar, 4, 1> raw_quaternion;
  Eigen::Matrix<Scalar, 3, 1> translation;
  Eigen::Matrix<Scalar, 3, 3> rotation;
};

template <typename Scalar>
struct Prediction {
  Pose pose;
  ForwardTrace<Scalar> trace;
};

/// Network input for a scene: one row per member, cluster-major.
template <typename Scalar>
RowMatrix<Scalar> encode_scene(const SceneSample& scene, const NetworkConfig& cfg,
                               std::span<const Vec3> keypoints = {}) {
  if (scene.clusters.size() != cfg.n) {
    throw InvalidArgument("scene has " + std::to_string(scene.clusters.size()) +
                          " clusters, network expects " + std::to_string(cfg.n));
  }
  if (scene.mode != cfg.mode) throw InvalidArgument("scene mode does not match the network");
  const bool single = cfg.aggregation == Aggregation::single_pool;
  if (single && keypoints.size() != cfg.n) {
    throw InvalidArgument("single-pool encoding needs the 3D keypoints");
  }
  const std::size_t m = scene.members_per_cluster();
  if (m == 0) throw InvalidArgument("empty clusters");
  const double hx = 0.5 * cfg.image.width, hy = 0.5 * cfg.image.height;
  const double off = cfg.mode == CorrespondenceMode::point ? cfg.offset_scale : 1.0;
  RowMatrix<Scalar> x(static_cast<Eigen::Index>(cfg.n * m), static_cast<Eigen::Index>(cfg.input_dim()));
  for (std::size_t i = 0; i < cfg.n; ++i) {
    const auto& members = scene.clusters[i].members;
    if (members.size() != m) throw InvalidArgument("clusters must have equal sizes");
    for (std::size_t k = 0; k < m; ++k) {
      const auto row = static_cast<Eigen::Index>(i * m + k);
      const auto& c = members[k];
      x(row, 0) = Scalar((c.x - hx) / hx);
      x(row, 1) = Scalar((c.y - hy) / hy);
      x(row, 2) = Scalar(c.dx / off);
      x(row, 3) = Scalar(c.dy / off);
      if (single) {
        x(row, 4) = Scalar(keypoints[i].x());
        x(row, 5) = Scalar(keypoints[i].y());
        x(row, 6) = Scalar(keypoints[i].z());
      }
    }
  }
  return x;
}

template <typename Scalar>
void leaky_relu_inplace(Eigen::Ref<RowMatrix<Scalar>> a, Scalar slope) {
  a = a.cwiseMax(slope * a);  // valid for 0 <= slope <= 1
}

/// a * W^T + b computed one row at a time through the same aligned buffers, so
/// a row's result depends only on its own values. A blocked GEMM treats tail
/// rows differently, which breaks bitwise invariance to member order.
template <typename Scalar>
RowMatrix<Scalar> affine_rows(const RowMatrix<Scalar>& a, const Eigen::Ref<const RowMatrix<Scalar>>& w,
                              const Vector<Scalar>& b) {
  RowMatrix<Scalar> z(a.rows(), w.rows());
  Vector<Scalar> in(a.cols()), acc(w.rows());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    in = a.row(r).transpose();
    acc.noalias() = w * in;
    z.row(r) = (acc + b).transpose();
  }
  return z;
}

/// Shared per-member MLP. Returns (rows x D).
template <typename Scalar>
RowMatrix<Scalar> local_features(const RowMatrix<Scalar>& input, const RegressorParams<Scalar>& p,
                                 std::vector<RowMatrix<Scalar>>* keep = nullptr) {
  const auto slope = Scalar(p.config().leaky_slope);
  RowMatrix<Scalar> a = input;
  for (std::size_t l = 0; l < p.local_layer_count(); ++l) {
    RowMatrix<Scalar> z = affine_rows<Scalar>(a, p.weight(l), p.bias(l));
    leaky_relu_inplace<Scalar>(z, slope);
    a = std::move(z);
    if (keep) keep->push_back(a);
  }
  return a;
}

/// Per-cluster max over members, concatenated in cluster order. `features` is
/// (n*m) x D, cluster-major. Ties pick the lowest member index.
template <typename Scalar>
Vector<Scalar> grouped_aggregate(const RowMatrix<Scalar>& features, std::size_t n,
                                 std::vector<std::int32_t>* argmax = nullptr) {
  const auto d = static_cast<std::size_t>(features.cols());
  const std::size_t m = static_cast<std::size_t>(features.rows()) / n;
  Vector<Scalar> out(static_cast<Eigen::Index>(n * d));
  if (argmax) argmax->assign(n * d, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      Scalar best = features(static_cast<Eigen::Index>(i * m), static_cast<Eigen::Index>(c));
      std::int32_t best_k = 0;
      for (std::size_t k = 1; k < m; ++k) {
        const Scalar v = features(static_cast<Eigen::Index>(i * m + k), static_cast<Eigen::Index>(c));
        if (v > best) {
          best = v;
          best_k = static_cast<std::int32_t>(k);
        }
      }
      out[static_cast<Eigen::Index>(i * d + c)] = best;
      if (argmax) (*argmax)[i * d + c] = best_k;
    }
  }
  return out;
}

// Single max over every row (the order-agnostic variant).
template <typename Scalar>
Vector<Scalar> global_aggregate(const RowMatrix<Scalar>& features,
                                std::vector<std::int32_t>* argmax = nullptr) {
  return grouped_aggregate<Scalar>(features, 1, argmax);
}

struct HeadOutput {
  Eigen::Vector4d raw_quaternion;
  Vec3 translation;  // de-normalized
};

/// Fully-connected head on the aggregate. Optionally records the activations.
template <typename Scalar>
Vector<Scalar> head_forward(const Vector<Scalar>& aggregate, const RegressorParams<Scalar>& p,
                            std::vector<Vector<Scalar>>* keep = nullptr) {
  const auto slope = Scalar(p.config().leaky_slope);
  Vector<Scalar> h = aggregate;
  if (keep) keep->push_back(h);
  for (std::size_t l = p.local_layer_count(); l < p.layer_count(); ++l) {
    Vector<Scalar> z = p.weight(l) * h + p.bias(l);
    if (l + 1 < p.layer_count()) {
      z = z.cwiseMax(slope * z);
    }
    h = std::move(z);
    if (keep) keep->push_back(h);
  }
  return h;
}

template <typename Scalar>
HeadOutput global_head(const Vector<Scalar>& aggregate, const RegressorParams<Scalar>& p) {
  const Vector<Scalar> out = head_forward(aggregate, p);
  const Vec3& s = p.config().translation_scale;
  return {Eigen::Vector4d(double(out[0]), double(out[1]), double(out[2]), double(out[3])),
          Vec3(double(out[4]) * s.x(), double(out[5]) * s.y(), double(out[6]) * s.z())};
}

/// Full forward pass: pose plus the trace for backward(). The 3D keypoints are
/// only read by the single-pool variant.
template <typename Scalar>
Prediction<Scalar> forward(const SceneSample& scene, const RegressorParams<Scalar>& p,
                           std::span<const Vec3> keypoints = {}) {
  const NetworkConfig& cfg = p.config();
  Prediction<Scalar> pred;
  auto& tr = pred.trace;
  tr.n = cfg.n;
  tr.m = scene.members_per_cluster();
  tr.input = encode_scene<Scalar>(scene, cfg, keypoints);
  const RowMatrix<Scalar> features = local_features(tr.input, p, &tr.local);
  const Vector<Scalar> aggregate = cfg.aggregation == Aggregation::grouped
                                       ? grouped_aggregate(features, cfg.n, &tr.argmax)
                                       : global_aggregate(features, &tr.argmax);
  const Vector<Scalar> out = head_forward(aggregate, p, &tr.head);
  if (!out.allFinite()) throw NonFinite("non-finite network output");
  tr.raw_quaternion = out.template head<4>();
  tr.translation = out.template segment<3>(4).cwiseProduct(cfg.translation_scale.cast<Scalar>());
  tr.rotation = quat_to_rotmat<Scalar>(tr.raw_quaternion);
  const Eigen::Vector4d q = tr.raw_quaternion.template cast<double>().normalized();
  pred.pose = {Quaternion::from_coeffs(q), tr.translation.template cast<double>()};
  return pred;
}

// Inference only (no trace retained beyond the call).
template <typename Scalar>
Pose predict(const SceneSample& scene, const RegressorParams<Scalar>& p,
             std::span<const Vec3> keypoints = {}) {
  const NetworkConfig& cfg = p.config();
  const RowMatrix<Scalar> input = encode_scene<Scalar>(scene, cfg, keypoints);
  const RowMatrix<Scalar> features = local_features(input, p);
  const Vector<Scalar> aggregate = cfg.aggregation == Aggregation::grouped
                                       ? grouped_aggregate(features, cfg.n)
                                       : global_aggregate(features);
  const HeadOutput h = global_head(aggregate, p);
  return {Quaternion::from_coeffs(h.raw_quaternion.normalized()), h.translation};
}

/// Mean keypoint reconstruction error between the predicted and true poses,
/// in the network's scalar type.
template <typename Scalar>
Scalar loss_from_trace(const ForwardTrace<Scalar>& tr, const Pose& truth,
                       std::span<const Vec3> keypoints) {
  const Mat3 r_true = truth.rotation_matrix();
  Scalar sum(0);
  for (const Vec3& p : keypoints) {
    const Eigen::Matrix<Scalar, 3, 1> ps = p.cast<Scalar>();
    const Eigen::Matrix<Scalar, 3, 1> y = (r_true * p + truth.translation).cast<Scalar>();
    sum += (tr.rotation * ps + tr.translation - y).norm();
  }
  return sum / Scalar(keypoints.size());
}

/// Pose loss: mean 3D reconstruction error over the keypoints.
inline double loss_lp(const Pose& predicted, const Pose& truth, std::span<const Vec3> keypoints) {
  return reconstruction_error(predicted, truth, keypoints);
}

/// Exact gradient of loss_from_trace w.r.t. every parameter. When `input_grad`
/// is given it receives dL/d(encoded input), one row per member.
template <typename Scalar>
RegressorParams<Scalar> backward(const ForwardTrace<Scalar>& tr, const Pose& truth,
                                 std::span<const Vec3> keypoints, const RegressorParams<Scalar>& p,
                                 RowMatrix<Scalar>* input_grad = nullptr) {
  using Vec3s = Eigen::Matrix<Scalar, 3, 1>;
  using Mat3s = Eigen::Matrix<Scalar, 3, 3>;
  const NetworkConfig& cfg = p.config();
  const auto slope = Scalar(cfg.leaky_slope);
  RegressorParams<Scalar> grad = p.zeros_like();

  // Loss -> rotation / translation. The norm's subgradient at 0 is taken as 0.
  const Mat3 r_true = truth.rotation_matrix();
  Vec3s g_t = Vec3s::Zero();
  Mat3s g_r = Mat3s::Zero();
  const Scalar inv_n = Scalar(1) / Scalar(keypoints.size());
  for (const Vec3& pt : keypoints) {
    const Vec3s ps = pt.cast<Scalar>();
    const Vec3s e = tr.rotation * ps + tr.translation - (r_true * pt + truth.translation).cast<Scalar>();
    const Scalar len = e.norm();
    if (len > Scalar(0)) {
      const Vec3s g = e * (inv_n / len);
      g_t += g;
      g_r += g * ps.transpose();
    }
  }
  Vector<Scalar> d_out(static_cast<Eigen::Index>(kOutputDim));
  d_out.template head<4>() = quat_to_rotmat_backward<Scalar>(tr.raw_quaternion, g_r);
  d_out.template segment<3>(4) = g_t.cwiseProduct(cfg.translation_scale.cast<Scalar>());

  // Head.
  Vector<Scalar> delta = d_out;
  const std::size_t first_head = p.local_layer_count();
  for (std::size_t l = p.layer_count(); l-- > first_head;) {
    const std::size_t h_idx = l - first_head;  // tr.head[h_idx] is this layer's input
    if (l + 1 < p.layer_count()) {
      const Vector<Scalar>& act = tr.head[h_idx + 1];
      for (Eigen::Index i = 0; i < delta.size(); ++i) {
        if (!(act[i] > Scalar(0))) delta[i] *= slope;
      }
    }
    grad.weight(l).noalias() = delta * tr.head[h_idx].transpose();
    grad.bias(l) = delta;
    delta = p.weight(l).transpose() * delta;
  }

  // Max-pool: route to the argmax members only. Members that win no channel
  // get exactly zero gradient, so the local backward runs on the winners only.
  const std::size_t d = cfg.feature_dim();
  const std::size_t rows = static_cast<std::size_t>(tr.input.rows());
  const std::size_t groups = cfg.aggregation == Aggregation::grouped ? tr.n : 1;
  const std::size_t per_group = rows / groups;
  std::vector<std::int32_t> compact(rows, -1);
  std::vector<Eigen::Index> active;
  for (std::size_t i = 0; i < groups; ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      const std::size_t row = i * per_group + static_cast<std::size_t>(tr.argmax[i * d + c]);
      if (compact[row] < 0) compact[row] = 0;
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    if (compact[r] >= 0) {
      compact[r] = static_cast<std::int32_t>(active.size());
      active.push_back(static_cast<Eigen::Index>(r));
    }
  }
  const auto n_active = static_cast<Eigen::Index>(active.size());
  RowMatrix<Scalar> g_act = RowMatrix<Scalar>::Zero(n_active, static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < groups; ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      const std::size_t row = i * per_group + static_cast<std::size_t>(tr.argmax[i * d + c]);
      g_act(compact[row], static_cast<Eigen::Index>(c)) += delta[static_cast<Eigen::Index>(i * d + c)];
    }
  }

  // Local MLP.
  RowMatrix<Scalar> act = tr.local.back()(active, Eigen::all);
  for (std::size_t l = p.local_layer_count(); l-- > 0;) {
    g_act = (act.array() > Scalar(0)).select(g_act, g_act * slope);
    const RowMatrix<Scalar> in = l == 0 ? RowMatrix<Scalar>(tr.input(active, Eigen::all))
                                        : RowMatrix<Scalar>(tr.local[l - 1](active, Eigen::all));
    grad.weight(l).noalias() = g_act.transpose() * in;
    grad.bias(l) = g_act.colwise().sum().transpose();
    if (l > 0) {
      g_act = g_act * p.weight(l);
      act = in;
    } else if (input_grad) {
      const RowMatrix<Scalar> g_in = g_act * p.weight(l);
      *input_grad = RowMatrix<Scalar>::Zero(static_cast<Eigen::Index>(rows), tr.input.cols());
      for (Eigen::Index k = 0; k < n_active; ++k) input_grad->row(active[static_cast<std::size_t>(k)]) = g_in.row(k);
    }
  }
  return grad;
}

/// Parameter count of a single-pool network whose first hidden head layer is
/// widened until it matches `target` as closely as possible.
inline NetworkConfig matched_single_pool_config(const NetworkConfig& grouped) {
  NetworkConfig single = grouped;
  single.aggregation = Aggregation::single_pool;
  const std::size_t target = parameter_count(grouped);
  std::size_t best_width = single.head_widths.front();
  std::size_t best_gap = std::numeric_limits<std::size_t>::max();
  for (std::size_t w = 1; w <= 16 * target / 1000 + 4096; ++w) {
    single.head_widths.front() = w;
    const std::size_t count = parameter_count(single);
    const std::size_t gap = count > target ? count - target : target - count;
    if (gap < best_gap) {
      best_gap = gap;
      best_width = w;
    }
    if (count > target) break;
  }
  single.head_widths.front() = best_width;
  return single;
}

}  // namespace poseforge::regressor

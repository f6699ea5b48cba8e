#pragma once

// Pose, camera and metric mathematics shared by the solvers, the data
// generator and the regressor.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include "poseforge/errors.hpp"

namespace poseforge {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Smallest admissible camera-frame depth for a projected point.
inline constexpr double kMinDepth = 1e-9;

struct Quaternion {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  static Quaternion identity() { return {}; }

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

  Eigen::Vector4d coeffs() const { return {w, x, y, z}; }

  static Quaternion from_coeffs(const Eigen::Vector4d& c) { return {c[0], c[1], c[2], c[3]}; }

  Quaternion normalized() const {
    const double n = norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw InvalidArgument("cannot normalize a zero-norm or non-finite quaternion");
    }
    return {w / n, x / n, y / n, z / n};
  }

  // Unit norm, w >= 0; for w == 0 the first nonzero component is made positive.
  Quaternion canonical() const {
    Quaternion q = normalized();
    const double c[4] = {q.w, q.x, q.y, q.z};
    double lead = 0.0;
    for (double v : c) {
      if (v != 0.0) {
        lead = v;
        break;
      }
    }
    if (lead < 0.0) {
      q = {-q.w, -q.x, -q.y, -q.z};
    }
    if (q.w == 0.0) q.w = 0.0;  // drop a negative zero
    return q;
  }

  bool operator==(const Quaternion&) const = default;
};

struct Pose {
  Quaternion rotation;
  Vec3 translation = Vec3::Zero();

  Mat3 rotation_matrix() const;

  Vec3 transform(const Vec3& p) const { return rotation_matrix() * p + translation; }

  bool operator==(const Pose& other) const {
    return rotation == other.rotation && translation == other.translation;
  }
};

class CameraIntrinsics {
 public:
  CameraIntrinsics(double fx, double fy, double cx, double cy) : fx_(fx), fy_(fy), cx_(cx), cy_(cy) {
    if (!(fx > 0.0) || !(fy > 0.0)) {
      throw InvalidArgument("focal lengths must be positive");
    }
  }

  // 640x480 virtual camera with focal length 800 and centered principal point.
  static CameraIntrinsics synthetic() { return {800.0, 800.0, 320.0, 240.0}; }

  double fx() const { return fx_; }
  double fy() const { return fy_; }
  double cx() const { return cx_; }
  double cy() const { return cy_; }

  Mat3 matrix() const {
    Mat3 k;
    k << fx_, 0.0, cx_, 0.0, fy_, cy_, 0.0, 0.0, 1.0;
    return k;
  }

  // Normalized image-plane coordinates of a pixel.
  Vec2 unproject(const Vec2& pixel) const {
    return {(pixel.x() - cx_) / fx_, (pixel.y() - cy_) / fy_};
  }

  bool operator==(const CameraIntrinsics&) const = default;

 private:
  double fx_, fy_, cx_, cy_;
};

struct ObjectModel {
  std::vector<Vec3> keypoints;
  double diameter = 0.0;
  std::vector<Vec3> surface_points;
};

/// Rotation matrix of a (not necessarily unit) quaternion given as (w, x, y, z).
///
/// The input is normalized first, so the result is a proper rotation for any
/// nonzero vector and q, -q give bitwise-identical matrices.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> quat_to_rotmat(const Eigen::Matrix<Scalar, 4, 1>& raw) {
  const Scalar n = raw.norm();
  if (!(n > Scalar(0)) || !std::isfinite(static_cast<double>(n))) {
    throw InvalidArgument("zero-norm quaternion has no rotation");
  }
  const Eigen::Matrix<Scalar, 4, 1> q = raw / n;
  const Scalar w = q[0], x = q[1], y = q[2], z = q[3];
  Eigen::Matrix<Scalar, 3, 3> m;
  m << w * w + x * x - y * y - z * z, Scalar(2) * (x * y - w * z), Scalar(2) * (x * z + w * y),
      Scalar(2) * (x * y + w * z), w * w - x * x + y * y - z * z, Scalar(2) * (y * z - w * x),
      Scalar(2) * (x * z - w * y), Scalar(2) * (y * z + w * x), w * w - x * x - y * y + z * z;
  return m;
}

inline Mat3 quat_to_rotmat(const Quaternion& q) { return quat_to_rotmat<double>(q.coeffs()); }

inline Mat3 Pose::rotation_matrix() const { return quat_to_rotmat(rotation); }

/// Gradient of a scalar loss w.r.t. the raw quaternion, given dL/dM for
/// M = quat_to_rotmat(raw). Flows through the normalization.
template <typename Scalar>
Eigen::Matrix<Scalar, 4, 1> quat_to_rotmat_backward(const Eigen::Matrix<Scalar, 4, 1>& raw,
                                                    const Eigen::Matrix<Scalar, 3, 3>& grad_m) {
  const Scalar n = raw.norm();
  const Eigen::Matrix<Scalar, 4, 1> q = raw / n;
  const Scalar w = q[0], x = q[1], y = q[2], z = q[3];
  const auto& g = grad_m;
  // d/dq of the homogeneous quadratic form, contracted with g.
  Eigen::Matrix<Scalar, 4, 1> gq;
  gq[0] = Scalar(2) * (w * (g(0, 0) + g(1, 1) + g(2, 2)) + z * (g(1, 0) - g(0, 1)) +
                       y * (g(0, 2) - g(2, 0)) + x * (g(2, 1) - g(1, 2)));
  gq[1] = Scalar(2) * (x * (g(0, 0) - g(1, 1) - g(2, 2)) + y * (g(0, 1) + g(1, 0)) +
                       z * (g(0, 2) + g(2, 0)) + w * (g(2, 1) - g(1, 2)));
  gq[2] = Scalar(2) * (y * (-g(0, 0) + g(1, 1) - g(2, 2)) + x * (g(0, 1) + g(1, 0)) +
                       z * (g(1, 2) + g(2, 1)) + w * (g(0, 2) - g(2, 0)));
  gq[3] = Scalar(2) * (z * (-g(0, 0) - g(1, 1) + g(2, 2)) + x * (g(0, 2) + g(2, 0)) +
                       y * (g(1, 2) + g(2, 1)) + w * (g(1, 0) - g(0, 1)));
  // Project out the radial direction: q/|q| is invariant to scaling.
  return (gq - q * q.dot(gq)) / n;
}

/// Quaternion of a rotation matrix (Shepperd's method), canonicalized to w >= 0.
inline Quaternion rotmat_to_quat(const Mat3& m) {
  const double ortho_err = (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
  const double det = m.determinant();
  if (!(ortho_err <= 1e-6) || !(std::abs(det - 1.0) <= 1e-6)) {
    throw InvalidArgument("matrix is not a rotation (orthonormality error " +
                          std::to_string(ortho_err) + ", det " + std::to_string(det) + ")");
  }
  const double trace = m.trace();
  Quaternion q;
  if (trace >= m(0, 0) && trace >= m(1, 1) && trace >= m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + trace);
    q = {0.25 * s, (m(2, 1) - m(1, 2)) / s, (m(0, 2) - m(2, 0)) / s, (m(1, 0) - m(0, 1)) / s};
  } else if (m(0, 0) >= m(1, 1) && m(0, 0) >= m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + m(0, 0) - m(1, 1) - m(2, 2));
    q = {(m(2, 1) - m(1, 2)) / s, 0.25 * s, (m(0, 1) + m(1, 0)) / s, (m(0, 2) + m(2, 0)) / s};
  } else if (m(1, 1) >= m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + m(1, 1) - m(0, 0) - m(2, 2));
    q = {(m(0, 2) - m(2, 0)) / s, (m(0, 1) + m(1, 0)) / s, 0.25 * s, (m(1, 2) + m(2, 1)) / s};
  } else {
    const double s = 2.0 * std::sqrt(1.0 + m(2, 2) - m(0, 0) - m(1, 1));
    q = {(m(1, 0) - m(0, 1)) / s, (m(0, 2) + m(2, 0)) / s, (m(1, 2) + m(2, 1)) / s, 0.25 * s};
  }
  return q.canonical();
}

inline Pose make_pose(const Mat3& rotation, const Vec3& translation) {
  return {rotmat_to_quat(rotation), translation};
}

/// Pixel coordinates of an object-frame point. The perspective scale factor
/// equals the camera-frame depth Z.
inline Vec2 project(const Pose& pose, const CameraIntrinsics& k, const Vec3& point) {
  const Vec3 c = pose.transform(point);
  if (!(c.z() > kMinDepth)) {
    throw PointBehindCamera(c.z());
  }
  return {k.fx() * c.x() / c.z() + k.cx(), k.fy() * c.y() / c.z() + k.cy()};
}

// Same as project(), for a camera-frame point.
inline Vec2 project_camera_point(const CameraIntrinsics& k, const Vec3& c) {
  if (!(c.z() > kMinDepth)) {
    throw PointBehindCamera(c.z());
  }
  return {k.fx() * c.x() / c.z() + k.cx(), k.fy() * c.y() / c.z() + k.cy()};
}

/// Mean Euclidean distance between the keypoints transformed by the two poses.
inline double reconstruction_error(const Pose& estimated, const Pose& truth,
                                   std::span<const Vec3> keypoints) {
  if (keypoints.empty()) {
    throw InvalidArgument("reconstruction_error needs at least one keypoint");
  }
  const Mat3 r_est = estimated.rotation_matrix();
  const Mat3 r_true = truth.rotation_matrix();
  double sum = 0.0;
  for (const Vec3& p : keypoints) {
    sum += ((r_est * p + estimated.translation) - (r_true * p + truth.translation)).norm();
  }
  return sum / static_cast<double>(keypoints.size());
}

inline double pose_error_ratio(const Pose& estimated, const Pose& truth, const ObjectModel& model) {
  if (!(model.diameter > 0.0)) {
    throw InvalidArgument("object diameter must be positive");
  }
  return reconstruction_error(estimated, truth, model.keypoints) / model.diameter;
}

struct AddResult {
  double distance;  // metres
  bool correct;     // distance < 0.1 * diameter
};

inline AddResult add_metric(const Pose& estimated, const Pose& truth, const ObjectModel& model) {
  if (model.surface_points.empty()) {
    throw InvalidArgument("ADD needs surface points");
  }
  const double d = reconstruction_error(estimated, truth, model.surface_points);
  return {d, d < 0.1 * model.diameter};
}

struct RepResult {
  double distance;  // pixels
  bool correct;     // distance < 5 px
};

inline RepResult rep_metric(const Pose& estimated, const Pose& truth, const CameraIntrinsics& k,
                            const ObjectModel& model) {
  if (model.surface_points.empty()) {
    throw InvalidArgument("REP needs surface points");
  }
  double sum = 0.0;
  for (const Vec3& p : model.surface_points) {
    sum += (project(estimated, k, p) - project(truth, k, p)).norm();
  }
  const double d = sum / static_cast<double>(model.surface_points.size());
  return {d, d < 5.0};
}

/// Corners of the axis-aligned cube inscribed in a sphere whose radius is the
/// mean of `radii`, ordered by sign pattern (---, --+, -+-, ..., +++).
inline std::vector<Vec3> common_cube_keypoints(std::span<const double> radii) {
  if (radii.empty()) {
    throw InvalidArgument("common_cube_keypoints needs at least one radius");
  }
  std::vector<double> sorted(radii.begin(), radii.end());
  std::sort(sorted.begin(), sorted.end());
  double sum = 0.0;
  for (double r : sorted) {
    if (!(r > 0.0)) throw InvalidArgument("radii must be positive");
    sum += r;
  }
  const double half_edge = sum / static_cast<double>(sorted.size()) / std::sqrt(3.0);
  std::vector<Vec3> corners;
  corners.reserve(8);
  for (int i = 0; i < 8; ++i) {
    corners.emplace_back((i & 4) ? half_edge : -half_edge, (i & 2) ? half_edge : -half_edge,
                         (i & 1) ? half_edge : -half_edge);
  }
  return corners;
}

// Deterministic, near-uniform points on the unit sphere.
inline std::vector<Vec3> fibonacci_sphere(std::size_t count, double radius = 1.0) {
  std::vector<Vec3> pts;
  pts.reserve(count);
  const double golden_angle = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < count; ++i) {
    const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(count);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden_angle * static_cast<double>(i);
    pts.emplace_back(radius * r * std::cos(phi), radius * r * std::sin(phi), radius * z);
  }
  return pts;
}

/// The synthetic target: unit sphere (diameter 2), keypoints at the corners of
/// its inscribed cube, 512 surface points for ADD/REP.
inline ObjectModel unit_sphere_model() {
  const double radius[] = {1.0};
  return {common_cube_keypoints(radius), 2.0, fibonacci_sphere(512)};
}

inline nlohmann::json pose_to_json(const Pose& pose) {
  const Quaternion q = pose.rotation.canonical();
  return {{"q", {q.w, q.x, q.y, q.z}},
          {"t", {pose.translation.x(), pose.translation.y(), pose.translation.z()}}};
}

inline Pose pose_from_json(const nlohmann::json& j) {
  const auto& q = j.at("q");
  const auto& t = j.at("t");
  if (q.size() != 4 || t.size() != 3) {
    throw InvalidArgument("pose JSON needs q[4] and t[3]");
  }
  return {{q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>()},
          {t[0].get<double>(), t[1].get<double>(), t[2].get<double>()}};
}

}  // namespace poseforge

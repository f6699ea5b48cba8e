#pragma once

#include <span>

#include <Eigen/SVD>

#include "poseforge/errors.hpp"
#include "poseforge/geometry.hpp"

namespace poseforge {

struct Similarity {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;
};

/// Least-squares similarity (or rigid, when with_scale is false) transform
/// taking `source` onto `target` (Umeyama 1991). Reflections are corrected.
inline Similarity umeyama_registration(std::span<const Vec3> source, std::span<const Vec3> target,
                                       bool with_scale) {
  if (source.size() != target.size()) {
    throw InvalidArgument("registration needs matching point counts");
  }
  const std::size_t n = source.size();
  if (n < 3) throw InvalidArgument("registration needs at least 3 points");

  Vec3 mu_s = Vec3::Zero(), mu_t = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    mu_s += source[i];
    mu_t += target[i];
  }
  mu_s /= static_cast<double>(n);
  mu_t /= static_cast<double>(n);

  Mat3 cov = Mat3::Zero();
  double var_s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 ds = source[i] - mu_s;
    cov += (target[i] - mu_t) * ds.transpose();
    var_s += ds.squaredNorm();
  }
  cov /= static_cast<double>(n);
  var_s /= static_cast<double>(n);

  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  // Rank < 2 means the source (or target) is collinear or coincident.
  if (!(var_s > 0.0) || sv[1] <= 1e-12 * std::max(1.0, sv[0])) {
    throw DegenerateConfiguration("registration input is collinear or coincident");
  }
  Vec3 signs = Vec3::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) signs[2] = -1.0;

  Similarity out;
  out.rotation = svd.matrixU() * signs.asDiagonal() * svd.matrixV().transpose();
  out.scale = with_scale ? sv.dot(signs) / var_s : 1.0;
  out.translation = mu_t - out.scale * out.rotation * mu_s;
  return out;
}

}  // namespace poseforge

#pragma once

// EPnP (Lepetit, Moreno-Noguer, Fua 2009): express the points in barycentric
// coordinates of 4 control points, find the control points in the camera
// frame from the null space of a 12x12 system, then align.

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "poseforge/errors.hpp"
#include "poseforge/geometry.hpp"
#include "poseforge/registration.hpp"

namespace poseforge {

// Mean pixel distance between observed points and the projections under `pose`;
// +inf when any point falls behind the camera.
inline double mean_reprojection_error(const Pose& pose, std::span<const Vec3> points3d,
                                      std::span<const Vec2> points2d, const CameraIntrinsics& k) {
  const Mat3 r = pose.rotation_matrix();
  double sum = 0.0;
  for (std::size_t i = 0; i < points3d.size(); ++i) {
    const Vec3 c = r * points3d[i] + pose.translation;
    if (!(c.z() > kMinDepth)) return std::numeric_limits<double>::infinity();
    sum += (project_camera_point(k, c) - points2d[i]).norm();
  }
  return sum / static_cast<double>(points3d.size());
}

namespace detail {

using Vec4 = Eigen::Vector4d;
using Mat12 = Eigen::Matrix<double, 12, 12>;
using Vec12 = Eigen::Matrix<double, 12, 1>;
using Mat6x10 = Eigen::Matrix<double, 6, 10>;
using Vec6 = Eigen::Matrix<double, 6, 1>;

class EpnpSolver {
 public:
  EpnpSolver(std::span<const Vec3> pw, std::span<const Vec2> uv, const CameraIntrinsics& k)
      : pw_(pw), uv_(uv), k_(k) {}

  Pose solve() {
    choose_control_points();
    compute_alphas();
    check_image_spread();

    Mat12 mtm = Mat12::Zero();
    for (std::size_t i = 0; i < pw_.size(); ++i) {
      const Vec2 n = k_.unproject(uv_[i]);
      Vec12 r1 = Vec12::Zero(), r2 = Vec12::Zero();
      for (int j = 0; j < 4; ++j) {
        const double a = alphas_[i][j];
        r1[3 * j] = a;
        r1[3 * j + 2] = -a * n.x();
        r2[3 * j + 1] = a;
        r2[3 * j + 2] = -a * n.y();
      }
      mtm.selfadjointView<Eigen::Lower>().rankUpdate(r1);
      mtm.selfadjointView<Eigen::Lower>().rankUpdate(r2);
    }
    Eigen::SelfAdjointEigenSolver<Mat12> eig(mtm.selfadjointView<Eigen::Lower>());
    if (eig.info() != Eigen::Success) {
      throw DegenerateConfiguration("EPnP eigen decomposition failed");
    }
    // Ascending eigenvalues: columns 0..3 span the (approximate) null space.
    for (int i = 0; i < 4; ++i) null_[i] = eig.eigenvectors().col(i);

    compute_l_6x10();
    compute_rho();

    std::array<Vec4, 4> candidates = {betas_single(), betas_approx_1(), betas_approx_2(),
                                      betas_approx_3()};
    double best_err = std::numeric_limits<double>::infinity();
    Pose best;
    for (Vec4& betas : candidates) {
      if (!betas.allFinite()) continue;
      gauss_newton(betas);
      if (!betas.allFinite()) continue;
      Pose pose;
      try {
        pose = pose_from_betas(betas);
      } catch (const Error&) {
        continue;
      }
      const double err = mean_reprojection_error(pose, pw_, uv_, k_);
      if (err < best_err) {
        best_err = err;
        best = pose;
      }
    }
    if (!std::isfinite(best_err)) {
      throw DegenerateConfiguration("EPnP found no valid solution (rank-deficient system)");
    }
    return best;
  }

 private:
  void choose_control_points() {
    Vec3 c0 = Vec3::Zero();
    for (const Vec3& p : pw_) c0 += p;
    c0 /= static_cast<double>(pw_.size());
    Mat3 cov = Mat3::Zero();
    for (const Vec3& p : pw_) cov += (p - c0) * (p - c0).transpose();
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    const Vec3 ev = eig.eigenvalues();  // ascending
    if (!(ev[0] > 1e-10 * std::max(ev[2], 1e-300))) {
      throw DegenerateConfiguration("EPnP needs non-coplanar 3D points");
    }
    cws_[0] = c0;
    for (int i = 0; i < 3; ++i) {
      const double scale = std::sqrt(ev[2 - i] / static_cast<double>(pw_.size()));
      cws_[i + 1] = c0 + scale * eig.eigenvectors().col(2 - i);
    }
  }

  void compute_alphas() {
    Mat3 basis;
    for (int j = 0; j < 3; ++j) basis.col(j) = cws_[j + 1] - cws_[0];
    const Mat3 inv = basis.inverse();
    alphas_.resize(pw_.size());
    for (std::size_t i = 0; i < pw_.size(); ++i) {
      const Vec3 a = inv * (pw_[i] - cws_[0]);
      alphas_[i] = {1.0 - a.sum(), a[0], a[1], a[2]};
    }
  }

  // Image points on a line mean the object plane passes through the camera center.
  void check_image_spread() const {
    Vec2 mean = Vec2::Zero();
    std::vector<Vec2> n(uv_.size());
    for (std::size_t i = 0; i < uv_.size(); ++i) {
      n[i] = k_.unproject(uv_[i]);
      mean += n[i];
    }
    mean /= static_cast<double>(n.size());
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    for (const Vec2& v : n) cov += (v - mean) * (v - mean).transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
    if (!(eig.eigenvalues()[0] > 1e-14 * std::max(eig.eigenvalues()[1], 1e-300))) {
      throw DegenerateConfiguration("image points are collinear (points coplanar with the camera)");
    }
  }

  static constexpr std::array<std::array<int, 2>, 6> kPairs = {
      {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};

  void compute_l_6x10() {
    // dv[i][pair] = difference of control points (a, b) in null vector i.
    std::array<std::array<Vec3, 6>, 4> dv;
    for (int i = 0; i < 4; ++i) {
      for (int p = 0; p < 6; ++p) {
        const auto [a, b] = kPairs[p];
        dv[i][p] = null_[i].segment<3>(3 * a) - null_[i].segment<3>(3 * b);
      }
    }
    for (int p = 0; p < 6; ++p) {
      l_(p, 0) = dv[0][p].dot(dv[0][p]);
      l_(p, 1) = 2.0 * dv[0][p].dot(dv[1][p]);
      l_(p, 2) = dv[1][p].dot(dv[1][p]);
      l_(p, 3) = 2.0 * dv[0][p].dot(dv[2][p]);
      l_(p, 4) = 2.0 * dv[1][p].dot(dv[2][p]);
      l_(p, 5) = dv[2][p].dot(dv[2][p]);
      l_(p, 6) = 2.0 * dv[0][p].dot(dv[3][p]);
      l_(p, 7) = 2.0 * dv[1][p].dot(dv[3][p]);
      l_(p, 8) = 2.0 * dv[2][p].dot(dv[3][p]);
      l_(p, 9) = dv[3][p].dot(dv[3][p]);
    }
  }

  void compute_rho() {
    for (int p = 0; p < 6; ++p) {
      const auto [a, b] = kPairs[p];
      rho_[p] = (cws_[a] - cws_[b]).squaredNorm();
    }
  }

  // N = 1: beta^2 * |dv|^2 = rho, least squares in beta^2.
  Vec4 betas_single() const {
    const auto l = l_.col(0);
    const double b2 = l.dot(rho_) / l.squaredNorm();
    return {std::sqrt(std::abs(b2)), 0.0, 0.0, 0.0};
  }

  // betas10 = [B11 B12 B22 B13 B23 B33 B14 B24 B34 B44]
  // approx_1 = [B11 B12 B13 B14]
  Vec4 betas_approx_1() const {
    Eigen::Matrix<double, 6, 4> l;
    l << l_.col(0), l_.col(1), l_.col(3), l_.col(6);
    const Vec4 b = l.colPivHouseholderQr().solve(rho_);
    Vec4 betas;
    if (b[0] < 0) {
      betas[0] = std::sqrt(-b[0]);
      betas.tail<3>() = -b.tail<3>() / betas[0];
    } else {
      betas[0] = std::sqrt(b[0]);
      betas.tail<3>() = b.tail<3>() / betas[0];
    }
    return betas;
  }

  // approx_2 = [B11 B12 B22]
  Vec4 betas_approx_2() const {
    Eigen::Matrix<double, 6, 3> l = l_.leftCols<3>();
    const Eigen::Vector3d b = l.colPivHouseholderQr().solve(rho_);
    Vec4 betas = Vec4::Zero();
    if (b[0] < 0) {
      betas[0] = std::sqrt(-b[0]);
      betas[1] = b[2] < 0 ? std::sqrt(-b[2]) : 0.0;
    } else {
      betas[0] = std::sqrt(b[0]);
      betas[1] = b[2] > 0 ? std::sqrt(b[2]) : 0.0;
    }
    if (b[1] < 0) betas[0] = -betas[0];
    return betas;
  }

  // approx_3 = [B11 B12 B22 B13 B23]
  Vec4 betas_approx_3() const {
    Eigen::Matrix<double, 6, 5> l = l_.leftCols<5>();
    const Eigen::Matrix<double, 5, 1> b = l.colPivHouseholderQr().solve(rho_);
    Vec4 betas = Vec4::Zero();
    if (b[0] < 0) {
      betas[0] = std::sqrt(-b[0]);
      betas[1] = b[2] < 0 ? std::sqrt(-b[2]) : 0.0;
    } else {
      betas[0] = std::sqrt(b[0]);
      betas[1] = b[2] > 0 ? std::sqrt(b[2]) : 0.0;
    }
    if (b[1] < 0) betas[0] = -betas[0];
    betas[2] = b[3] / betas[0];
    return betas;
  }

  void gauss_newton(Vec4& betas) const {
    constexpr int kIterations = 10;
    for (int it = 0; it < kIterations; ++it) {
      Eigen::Matrix<double, 6, 4> jac;
      Vec6 residual;
      const Vec4& b = betas;
      for (int p = 0; p < 6; ++p) {
        const auto r = l_.row(p);
        jac(p, 0) = 2 * r[0] * b[0] + r[1] * b[1] + r[3] * b[2] + r[6] * b[3];
        jac(p, 1) = r[1] * b[0] + 2 * r[2] * b[1] + r[4] * b[2] + r[7] * b[3];
        jac(p, 2) = r[3] * b[0] + r[4] * b[1] + 2 * r[5] * b[2] + r[8] * b[3];
        jac(p, 3) = r[6] * b[0] + r[7] * b[1] + r[8] * b[2] + 2 * r[9] * b[3];
        residual[p] = rho_[p] - (r[0] * b[0] * b[0] + r[1] * b[0] * b[1] + r[2] * b[1] * b[1] +
                                 r[3] * b[0] * b[2] + r[4] * b[1] * b[2] + r[5] * b[2] * b[2] +
                                 r[6] * b[0] * b[3] + r[7] * b[1] * b[3] + r[8] * b[2] * b[3] +
                                 r[9] * b[3] * b[3]);
      }
      const Vec4 step = jac.colPivHouseholderQr().solve(residual);
      if (!step.allFinite()) break;
      betas += step;
    }
  }

  Pose pose_from_betas(const Vec4& betas) const {
    Vec12 x = Vec12::Zero();
    for (int i = 0; i < 4; ++i) x += betas[i] * null_[i];
    std::vector<Vec3> pc(pw_.size());
    double mean_z = 0.0;
    for (std::size_t i = 0; i < pw_.size(); ++i) {
      Vec3 p = Vec3::Zero();
      for (int j = 0; j < 4; ++j) p += alphas_[i][j] * x.segment<3>(3 * j);
      pc[i] = p;
      mean_z += p.z();
    }
    // The null vector is defined up to sign; the object must be in front.
    if (mean_z < 0.0) {
      for (Vec3& p : pc) p = -p;
    }
    const Similarity s = umeyama_registration(pw_, pc, false);
    return make_pose(s.rotation, s.translation);
  }

  std::span<const Vec3> pw_;
  std::span<const Vec2> uv_;
  const CameraIntrinsics& k_;
  std::array<Vec3, 4> cws_;
  std::vector<std::array<double, 4>> alphas_;
  std::array<Vec12, 4> null_;
  Mat6x10 l_;
  Vec6 rho_;
};

}  // namespace detail

/// Pose from >= 4 non-coplanar 3D points and their pixel observations.
inline Pose epnp(std::span<const Vec3> points3d, std::span<const Vec2> points2d,
                 const CameraIntrinsics& intrinsics) {
  if (points3d.size() != points2d.size()) {
    throw InvalidArgument("epnp needs matching 3D and 2D point counts");
  }
  if (points3d.size() < 4) throw InvalidArgument("epnp needs at least 4 correspondences");
  for (std::size_t i = 0; i < points3d.size(); ++i) {
    if (!points3d[i].allFinite() || !points2d[i].allFinite()) {
      throw InvalidArgument("epnp input contains non-finite values");
    }
  }
  return detail::EpnpSolver(points3d, points2d, intrinsics).solve();
}

}  // namespace poseforge

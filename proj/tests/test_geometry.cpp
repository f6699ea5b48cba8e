#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "poseforge/geometry.hpp"

using namespace poseforge;

namespace {

// Rodrigues' formula, written out without quaternions.
Mat3 axis_angle(const Vec3& axis_in, double angle) {
  const Vec3 a = axis_in.normalized();
  Mat3 k;
  k << 0, -a.z(), a.y(), a.z(), 0, -a.x(), -a.y(), a.x(), 0;
  return Mat3::Identity() + std::sin(angle) * k + (1 - std::cos(angle)) * k * k;
}

Pose random_pose(std::mt19937_64& gen) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Quaternion q{n(gen), n(gen), n(gen), n(gen)};
  return {q.normalized(), Vec3(u(gen), u(gen), 5.0 + u(gen))};
}

const CameraIntrinsics kCam = CameraIntrinsics::synthetic();

}  // namespace

TEST(Project, PointOnOpticalAxis) {
  const Pose pose{Quaternion::identity(), Vec3(0, 0, 5)};
  const Vec2 px = project(pose, kCam, Vec3::Zero());
  EXPECT_DOUBLE_EQ(px.x(), 320.0);
  EXPECT_DOUBLE_EQ(px.y(), 240.0);
}

TEST(Project, LateralOffset) {
  const Pose pose{Quaternion::identity(), Vec3(0, 0, 5)};
  const Vec2 px = project(pose, kCam, Vec3(1, 0, 0));
  EXPECT_DOUBLE_EQ(px.x(), 480.0);
  EXPECT_DOUBLE_EQ(px.y(), 240.0);
}

TEST(Project, BehindCameraThrows) {
  const Pose pose{Quaternion::identity(), Vec3(0, 0, -1)};
  EXPECT_THROW(project(pose, kCam, Vec3::Zero()), PointBehindCamera);
}

TEST(Project, ScaleFactorIsDepth) {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const Pose pose = random_pose(gen);
    const Vec3 p(u(gen), u(gen), u(gen));
    const Vec2 px = project(pose, kCam, p);
    const Vec3 cam = pose.rotation_matrix() * p + pose.translation;
    const Vec3 lhs = cam.z() * Vec3(px.x(), px.y(), 1.0);
    EXPECT_LT((lhs - kCam.matrix() * cam).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(CameraIntrinsics, RejectsNonPositiveFocal) {
  EXPECT_THROW(CameraIntrinsics(0, 800, 320, 240), InvalidArgument);
  EXPECT_THROW(CameraIntrinsics(800, -1, 320, 240), InvalidArgument);
}

TEST(QuatToRotmat, Identity) {
  EXPECT_EQ(quat_to_rotmat(Quaternion{1, 0, 0, 0}), Mat3::Identity());
}

TEST(QuatToRotmat, HalfTurnAboutZ) {
  const Mat3 m = quat_to_rotmat(Quaternion{0, 0, 0, 1});
  EXPECT_EQ(m, Vec3(-1, -1, 1).asDiagonal().toDenseMatrix());
}

TEST(QuatToRotmat, DoubleCoverExact) {
  std::mt19937_64 gen(2);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector4d q(n(gen), n(gen), n(gen), n(gen));
    EXPECT_EQ(quat_to_rotmat<double>(q), quat_to_rotmat<double>(Eigen::Vector4d(-q)));
  }
}

TEST(QuatToRotmat, ZeroNormThrows) {
  EXPECT_THROW(quat_to_rotmat<double>(Eigen::Vector4d::Zero()), InvalidArgument);
}

TEST(QuatToRotmat, AlwaysInSO3) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 100000; ++i) {
    Eigen::Vector4d q(n(gen), n(gen), n(gen), n(gen));
    if (i % 2) q = q.normalized() * 1e-6 + Eigen::Vector4d(n(gen), n(gen), n(gen), n(gen)) * 1e-12;
    const Mat3 m = quat_to_rotmat<double>(q);
    ASSERT_LT((m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-9);
    ASSERT_NEAR(m.determinant(), 1.0, 1e-9);
  }
}

TEST(QuatToRotmat, MatchesAxisAngle) {
  const double angle = 0.7;
  const Vec3 axis = Vec3(1, -2, 0.5).normalized();
  const Quaternion q{std::cos(angle / 2), axis.x() * std::sin(angle / 2), axis.y() * std::sin(angle / 2),
                     axis.z() * std::sin(angle / 2)};
  EXPECT_LT((quat_to_rotmat(q) - axis_angle(axis, angle)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(QuatToRotmatBackward, MatchesFiniteDifferences) {
  std::mt19937_64 gen(4);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Vector4d q(n(gen), n(gen), n(gen), n(gen));
    Mat3 g;
    for (int i = 0; i < 9; ++i) g(i / 3, i % 3) = n(gen);
    const auto loss = [&](const Eigen::Vector4d& v) { return (quat_to_rotmat<double>(v).cwiseProduct(g)).sum(); };
    const Eigen::Vector4d analytic = quat_to_rotmat_backward<double>(q, g);
    for (int k = 0; k < 4; ++k) {
      Eigen::Vector4d qp = q, qm = q;
      qp[k] += 1e-6;
      qm[k] -= 1e-6;
      const double fd = (loss(qp) - loss(qm)) / 2e-6;
      EXPECT_NEAR(analytic[k], fd, 1e-7 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(RotmatToQuat, Identity) {
  const Quaternion q = rotmat_to_quat(Mat3::Identity());
  EXPECT_EQ(q, (Quaternion{1, 0, 0, 0}));
}

TEST(RotmatToQuat, HalfTurnAboutZ) {
  const Quaternion q = rotmat_to_quat(Vec3(-1, -1, 1).asDiagonal().toDenseMatrix());
  EXPECT_EQ(q, (Quaternion{0, 0, 0, 1}));
}

TEST(RotmatToQuat, RandomRoundTrip) {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> ang(0.0, std::numbers::pi);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Mat3 m = axis_angle(Vec3(n(gen), n(gen), n(gen)), ang(gen));
    const Quaternion q = rotmat_to_quat(m);
    EXPECT_GE(q.w, 0.0);
    worst = std::max(worst, (quat_to_rotmat(q) - m).cwiseAbs().maxCoeff());
  }
  EXPECT_LT(worst, 1e-7);
}

TEST(RotmatToQuat, RejectsNonRotation) {
  EXPECT_THROW(rotmat_to_quat(Mat3::Identity() * 2.0), InvalidArgument);
  EXPECT_THROW(rotmat_to_quat(Vec3(1, 1, -1).asDiagonal().toDenseMatrix()), InvalidArgument);
}

TEST(Quaternion, CanonicalTieBreak) {
  const Quaternion q = Quaternion{0, -1, 0, 0}.canonical();
  EXPECT_EQ(q, (Quaternion{0, 1, 0, 0}));
  const Quaternion r = Quaternion{-2, 0, 0, 0}.canonical();
  EXPECT_EQ(r, (Quaternion{1, 0, 0, 0}));
}

TEST(ReconstructionError, ZeroOnEquality) {
  const auto kp = unit_sphere_model().keypoints;
  const Pose p{Quaternion{0.5, 0.5, 0.5, 0.5}, Vec3(0.1, 0.2, 5)};
  EXPECT_EQ(reconstruction_error(p, p, kp), 0.0);
}

TEST(ReconstructionError, PureShift) {
  const auto kp = unit_sphere_model().keypoints;
  const Pose p{Quaternion{0.5, 0.5, 0.5, 0.5}, Vec3(0.1, 0.2, 5)};
  Pose q = p;
  q.translation.x() += 0.3;
  EXPECT_NEAR(reconstruction_error(q, p, kp), 0.3, 1e-15);
}

TEST(ReconstructionError, MatchesResummation) {
  std::mt19937_64 gen(6);
  const auto kp = unit_sphere_model().keypoints;
  for (int i = 0; i < 50; ++i) {
    const Pose a = random_pose(gen), b = random_pose(gen);
    const Eigen::Quaterniond qa(a.rotation.w, a.rotation.x, a.rotation.y, a.rotation.z);
    const Eigen::Quaterniond qb(b.rotation.w, b.rotation.x, b.rotation.y, b.rotation.z);
    double sum = 0.0;
    for (const auto& p : kp) sum += ((qa * p + a.translation) - (qb * p + b.translation)).norm();
    EXPECT_NEAR(reconstruction_error(a, b, kp), sum / 8.0, 1e-12);
  }
}

TEST(ReconstructionError, Pseudometric) {
  std::mt19937_64 gen(7);
  const auto kp = unit_sphere_model().keypoints;
  for (int i = 0; i < 200; ++i) {
    const Pose a = random_pose(gen), b = random_pose(gen), c = random_pose(gen);
    EXPECT_EQ(reconstruction_error(a, b, kp), reconstruction_error(b, a, kp));
    EXPECT_LE(reconstruction_error(a, c, kp),
              reconstruction_error(a, b, kp) + reconstruction_error(b, c, kp) + 1e-12);
  }
}

TEST(ReconstructionError, EmptyKeypointsThrow) {
  const Pose p;
  EXPECT_THROW(reconstruction_error(p, p, std::span<const Vec3>{}), InvalidArgument);
}

TEST(PoseErrorRatio, Basics) {
  const ObjectModel model = unit_sphere_model();
  const Pose p{Quaternion::identity(), Vec3(0, 0, 5)};
  EXPECT_EQ(pose_error_ratio(p, p, model), 0.0);
  Pose q = p;
  q.translation.y() += 0.2;
  EXPECT_NEAR(pose_error_ratio(q, p, model), 0.1, 1e-15);

  std::mt19937_64 gen(8);
  const Pose a = random_pose(gen), b = random_pose(gen);
  EXPECT_NEAR(pose_error_ratio(a, b, model) * model.diameter, reconstruction_error(a, b, model.keypoints),
              1e-12);
}

TEST(AddMetric, Basics) {
  const ObjectModel model = unit_sphere_model();
  const Pose p{Quaternion{0.1, 0.7, -0.2, 0.3}.normalized(), Vec3(0.5, -0.5, 6)};
  const AddResult same = add_metric(p, p, model);
  EXPECT_EQ(same.distance, 0.0);
  EXPECT_TRUE(same.correct);

  Pose q = p;
  q.translation += Vec3(0.12, -0.09, 0.0);
  const AddResult shifted = add_metric(q, p, model);
  EXPECT_NEAR(shifted.distance, 0.15, 1e-14);
  EXPECT_TRUE(shifted.correct);

  q.translation = p.translation + Vec3(0.0, 0.0, 0.25);
  EXPECT_FALSE(add_metric(q, p, model).correct);
}

TEST(AddMetric, MatchesResummation) {
  std::mt19937_64 gen(9);
  const ObjectModel model = unit_sphere_model();
  for (int i = 0; i < 20; ++i) {
    const Pose a = random_pose(gen), b = random_pose(gen);
    double sum = 0.0;
    for (const auto& p : model.surface_points) sum += (a.transform(p) - b.transform(p)).norm();
    EXPECT_NEAR(add_metric(a, b, model).distance, sum / 512.0, 1e-12);
  }
}

TEST(RepMetric, Basics) {
  const ObjectModel model = unit_sphere_model();
  const Pose p{Quaternion::identity(), Vec3(0, 0, 5)};
  EXPECT_EQ(rep_metric(p, p, kCam, model).distance, 0.0);
  EXPECT_TRUE(rep_metric(p, p, kCam, model).correct);

  // Shift along the optical axis: the on-axis point projects identically.
  ObjectModel axis_only{model.keypoints, 2.0, {Vec3::Zero()}};
  Pose q = p;
  q.translation.z() += 1.0;
  EXPECT_EQ(rep_metric(q, p, kCam, axis_only).distance, 0.0);
}

TEST(RepMetric, MatchesProjectionOracle) {
  std::mt19937_64 gen(10);
  const ObjectModel model = unit_sphere_model();
  for (int i = 0; i < 20; ++i) {
    const Pose a = random_pose(gen), b = random_pose(gen);
    double sum = 0.0;
    for (const auto& p : model.surface_points) {
      const Vec3 ca = a.transform(p), cb = b.transform(p);
      const Vec2 pa(800 * ca.x() / ca.z() + 320, 800 * ca.y() / ca.z() + 240);
      const Vec2 pb(800 * cb.x() / cb.z() + 320, 800 * cb.y() / cb.z() + 240);
      sum += (pa - pb).norm();
    }
    EXPECT_NEAR(rep_metric(a, b, kCam, model).distance, sum / 512.0, 1e-9);
  }
}

TEST(RepMetric, BehindCameraPropagates) {
  const ObjectModel model = unit_sphere_model();
  const Pose good{Quaternion::identity(), Vec3(0, 0, 5)};
  const Pose bad{Quaternion::identity(), Vec3(0, 0, 0.5)};
  EXPECT_THROW(rep_metric(bad, good, kCam, model), PointBehindCamera);
}

TEST(CommonCube, SqrtThreeRadius) {
  const double r[] = {std::sqrt(3.0)};
  const auto c = common_cube_keypoints(r);
  ASSERT_EQ(c.size(), 8u);
  const int signs[8][3] = {{-1, -1, -1}, {-1, -1, 1}, {-1, 1, -1}, {-1, 1, 1},
                           {1, -1, -1},  {1, -1, 1},  {1, 1, -1},  {1, 1, 1}};
  for (int i = 0; i < 8; ++i) {
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(c[i][k], signs[i][k], 1e-15);
  }
}

TEST(CommonCube, MeanRadius) {
  const double r[] = {1.0, 3.0};
  const auto c = common_cube_keypoints(r);
  for (const auto& p : c) {
    EXPECT_NEAR(std::abs(p.x()), 2.0 / std::sqrt(3.0), 1e-15);
    EXPECT_NEAR(p.norm(), 2.0, 1e-12);
  }
}

TEST(CommonCube, PermutationStable) {
  const double a[] = {0.3, 1.7, 2.9, 0.01};
  const double b[] = {2.9, 0.01, 1.7, 0.3};
  EXPECT_EQ(common_cube_keypoints(a), common_cube_keypoints(b));
}

TEST(CommonCube, Errors) {
  EXPECT_THROW(common_cube_keypoints(std::span<const double>{}), InvalidArgument);
  const double neg[] = {1.0, -1.0};
  EXPECT_THROW(common_cube_keypoints(neg), InvalidArgument);
}

TEST(UnitSphereModel, Layout) {
  const ObjectModel m = unit_sphere_model();
  EXPECT_EQ(m.keypoints.size(), 8u);
  EXPECT_EQ(m.diameter, 2.0);
  ASSERT_EQ(m.surface_points.size(), 512u);
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : m.surface_points) {
    EXPECT_NEAR(p.norm(), 1.0, 1e-12);
    centroid += p;
  }
  EXPECT_LT((centroid / 512.0).norm(), 1e-2);
}

TEST(PoseJson, RoundTripCanonical) {
  const Pose p{Quaternion{-0.5, 0.5, -0.5, 0.5}, Vec3(0.25, -1.5, 6.125)};
  const Pose back = pose_from_json(pose_to_json(p));
  EXPECT_EQ(back.rotation, (Quaternion{0.5, -0.5, 0.5, -0.5}));
  EXPECT_EQ(back.translation, p.translation);
}

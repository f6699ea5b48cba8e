#pragma once

// Three-point absolute pose (Gao, Hou, Tang, Cheng 2003).

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "poseforge/errors.hpp"
#include "poseforge/geometry.hpp"
#include "poseforge/quartic.hpp"
#include "poseforge/registration.hpp"

namespace poseforge {

namespace detail {

// Newton iterations on the three law-of-cosines constraints
//   d_i^2 + d_j^2 - 2 d_i d_j cos_ij = |P_i - P_j|^2
inline void refine_p3p_depths(Vec3& depth, const Vec3& cosines, const Vec3& dist_sq) {
  // pair k joins (i, j): 0 -> (1, 2), 1 -> (0, 2), 2 -> (0, 1)
  constexpr int kI[3] = {1, 0, 0};
  constexpr int kJ[3] = {2, 2, 1};
  for (int it = 0; it < 3; ++it) {
    Vec3 f;
    Mat3 jac = Mat3::Zero();
    for (int k = 0; k < 3; ++k) {
      const double di = depth[kI[k]], dj = depth[kJ[k]], c = cosines[k];
      f[k] = di * di + dj * dj - 2.0 * di * dj * c - dist_sq[k];
      jac(k, kI[k]) = 2.0 * di - 2.0 * dj * c;
      jac(k, kJ[k]) = 2.0 * dj - 2.0 * di * c;
    }
    const Vec3 step = jac.colPivHouseholderQr().solve(f);
    if (!step.allFinite()) return;
    depth -= step;
  }
}

}  // namespace detail

/// Up to four candidate poses consistent with three 2D-3D correspondences.
inline std::vector<Pose> p3p(std::span<const Vec3> points3d, std::span<const Vec2> points2d,
                             const CameraIntrinsics& intrinsics) {
  if (points3d.size() != 3 || points2d.size() != 3) {
    throw InvalidArgument("p3p needs exactly 3 correspondences");
  }
  const Vec3& pa = points3d[0];
  const Vec3& pb = points3d[1];
  const Vec3& pc = points3d[2];
  const double area2 = (pb - pa).cross(pc - pa).norm();
  const double scale = std::max({(pb - pa).squaredNorm(), (pc - pa).squaredNorm(), 1e-300});
  if (!(area2 > 1e-10 * scale)) {
    throw DegenerateConfiguration("p3p needs non-collinear 3D points");
  }

  std::array<Vec3, 3> ray;
  for (int i = 0; i < 3; ++i) {
    const Vec2 n = intrinsics.unproject(points2d[i]);
    ray[i] = Vec3(n.x(), n.y(), 1.0).normalized();
  }
  const double cos_uv = ray[0].dot(ray[1]);
  const double cos_uw = ray[0].dot(ray[2]);
  const double cos_vw = ray[1].dot(ray[2]);

  const double dist_ab_2 = (pa - pb).squaredNorm();
  const double dist_ac_2 = (pa - pc).squaredNorm();
  const double dist_bc_2 = (pb - pc).squaredNorm();
  const double dist_ab = std::sqrt(dist_ab_2);

  const double a = dist_bc_2 / dist_ab_2;
  const double b = dist_ac_2 / dist_ab_2;
  const double a2 = a * a, b2 = b * b;
  const double p = 2 * cos_vw, q = 2 * cos_uw, r = 2 * cos_uv;
  const double p2 = p * p, p3 = p2 * p, q2 = q * q;
  const double r2 = r * r, r3 = r2 * r, r4 = r3 * r, r5 = r4 * r;

  // Quartic in x = |PA| / |PC|.
  const double c4 = -2 * b + b2 + a2 + 1 + a * b * (2 - r2) - 2 * a;
  const double c3 = -2 * q * a2 - r * p * b2 + 4 * q * a + (2 * q + p * r) * b +
                    (r2 * q - 2 * q + r * p) * a * b - 2 * q;
  const double c2 = (2 + q2) * a2 + (p2 + r2 - 2) * b2 - (4 + 2 * q2) * a - (p * q * r + p2) * b -
                    (p * q * r + r2) * a * b + q2 + 2;
  const double c1 = -2 * q * a2 - r * p * b2 + 4 * q * a + (p * r + q * p2 - 2 * q) * b +
                    (r * p + 2 * q) * a * b - 2 * q;
  const double c0 = a2 + b2 - 2 * a + (2 - p2) * b - 2 * a * b + 1;

  if (!(std::abs(c4) > 1e-12)) {
    throw DegenerateConfiguration("p3p quartic degenerates (leading coefficient vanishes)");
  }
  const QuarticRoots roots = quartic_roots(c4, c3, c2, c1, c0);
  if (roots.real_roots.empty()) {
    throw DegenerateConfiguration("p3p quartic has no real root");
  }

  const Vec3 cosines(cos_vw, cos_uw, cos_uv);
  const Vec3 dist_sq(dist_bc_2, dist_ac_2, dist_ab_2);
  const std::array<Vec3, 3> world = {pa, pb, pc};

  std::vector<Pose> out;
  for (const double x : roots.real_roots) {
    if (x <= 0.0) continue;
    const double x2 = x * x, x3 = x2 * x;
    // Linear equation b1 * y + b0 = 0 for y = |PB| / |PC|.
    const double bb1 = (p2 - p * q * r + r2) * a + (p2 - r2) * b - p2 + p * q * r - r2;
    const double b1 = b * bb1 * bb1;
    if (b1 == 0.0) continue;
    const double b0 =
        ((1 - a - b) * x2 + (a - 1) * q * x - a + b + 1) *
        (r3 * (a2 + b2 - 2 * a - 2 * b + (2 - r2) * a * b + 1) * x3 +
         r2 *
             (p + p * a2 - 2 * r * q * a * b + 2 * r * q * b - 2 * r * q - 2 * p * a - 2 * p * b +
              p * r2 * b + 4 * r * q * a + q * r3 * a * b - 2 * r * q * a2 + 2 * p * a * b +
              p * b2 - r2 * p * b2) *
             x2 +
         (r5 * (b2 - a * b) - r4 * p * q * b +
          r3 * (q2 - 4 * a - 2 * q2 * a + q2 * a2 + 2 * a2 - 2 * b2 + 2) +
          r2 * (4 * p * q * a - 2 * p * q * a * b + 2 * p * q * b - 2 * p * q - 2 * p * q * a2) +
          r * (p2 * b2 - 2 * p2 * b + 2 * p2 * a * b - 2 * p2 * a + p2 + p2 * a2)) *
             x +
         (2 * p * r2 - 2 * r3 * q + p3 - 2 * p2 * q * r + p * q2 * r2) * a2 +
         (p3 - 2 * p * r2) * b2 +
         (4 * q * r3 - 4 * p * r2 - 2 * p3 + 4 * p2 * q * r - 2 * p * q2 * r2) * a +
         (-2 * q * r3 + p * r4 + 2 * p2 * q * r - 2 * p3) * b +
         (2 * p3 + 2 * q * r3 - 2 * p2 * q * r) * a * b + p * q2 * r2 - 2 * p2 * q * r +
         2 * p * r2 + p3 - 2 * r3 * q);
    const double y = b0 / b1;
    if (!(y > 0.0)) continue;
    const double nu = x2 + y * y - 2 * x * y * cos_uv;
    if (!(nu > 0.0)) continue;

    const double dist_pc = dist_ab / std::sqrt(nu);
    Vec3 depth(x * dist_pc, y * dist_pc, dist_pc);
    detail::refine_p3p_depths(depth, cosines, dist_sq);
    if (!depth.allFinite() || (depth.array() <= 0.0).any()) continue;

    const std::array<Vec3, 3> camera = {ray[0] * depth[0], ray[1] * depth[1], ray[2] * depth[2]};
    try {
      const Similarity s = umeyama_registration(world, camera, false);
      out.push_back(make_pose(s.rotation, s.translation));
    } catch (const Error&) {
      continue;
    }
    if (out.size() == 4) break;
  }
  return out;
}

}  // namespace poseforge

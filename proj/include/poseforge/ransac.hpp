#pragma once

// Hypothesize-and-verify PnP over the pooled correspondences of a scene.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string_view>
#include <vector>

#include "poseforge/correspondences.hpp"
#include "poseforge/epnp.hpp"
#include "poseforge/errors.hpp"
#include "poseforge/geometry.hpp"
#include "poseforge/p3p.hpp"
#include "poseforge/random.hpp"

namespace poseforge {

struct RansacConfig {
  std::size_t max_iterations = 1000;
  double inlier_threshold = 10.0;  // pixels
  double confidence = 0.99;
  std::size_t min_inliers = 12;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (max_iterations < 1) throw InvalidArgument("max_iterations must be >= 1");
    if (!(confidence > 0.0 && confidence < 1.0)) {
      throw InvalidArgument("confidence must lie in (0, 1)");
    }
    if (!(inlier_threshold > 0.0)) throw InvalidArgument("inlier_threshold must be positive");
  }
};

enum class MinimalSolver { epnp, p3p };

inline std::string_view to_string(MinimalSolver s) { return s == MinimalSolver::epnp ? "epnp" : "p3p"; }

struct RansacResult {
  Pose pose;
  std::vector<bool> inlier_mask;  // over pool_correspondences(scene) order
  std::size_t inlier_count = 0;
  std::size_t iterations = 0;
};

namespace detail {

inline bool coplanar(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  const double vol = std::abs((b - a).dot((c - a).cross(d - a)));
  const double scale = std::max({(b - a).norm(), (c - a).norm(), (d - a).norm(), 1e-300});
  return vol <= 1e-9 * scale * scale * scale;
}

// Required iteration count for the given inlier ratio and sample size.
inline double ransac_iterations_needed(double inlier_ratio, std::size_t sample_size,
                                       double confidence) {
  const double all_good = std::pow(inlier_ratio, static_cast<double>(sample_size));
  if (all_good <= 0.0) return std::numeric_limits<double>::infinity();
  if (all_good >= 1.0) return 1.0;
  return std::log(1.0 - confidence) / std::log(1.0 - all_good);
}

}  // namespace detail

/// RANSAC PnP with EPnP or P3P hypotheses and an EPnP refit on the consensus set.
inline RansacResult ransac_pnp(const SceneSample& scene, const ObjectModel& model,
                               MinimalSolver solver, const RansacConfig& config) {
  config.validate();
  const std::vector<PooledCorrespondence> pooled = pool_correspondences(scene);
  const std::size_t n_kp = model.keypoints.size();
  const std::size_t total = pooled.size();
  constexpr std::size_t kSampleSize = 4;  // EPnP minimal set; P3P uses 3 + 1 for disambiguation
  for (const auto& c : pooled) {
    if (c.keypoint_index < 0 || static_cast<std::size_t>(c.keypoint_index) >= n_kp) {
      throw InvalidArgument("correspondence refers to an unknown keypoint");
    }
  }
  if (total < kSampleSize) throw InvalidArgument("not enough correspondences for RANSAC");

  Rng rng(config.rng_seed);
  const CameraIntrinsics& k = scene.intrinsics;
  std::vector<Vec2> projected(n_kp);
  std::vector<bool> mask(total), best_mask;
  std::size_t best_count = 0;
  Pose best_pose;
  double needed = static_cast<double>(config.max_iterations);
  std::size_t it = 0;

  std::array<std::size_t, kSampleSize> sample{};
  std::array<Vec3, kSampleSize> sample3d;
  std::array<Vec2, kSampleSize> sample2d;

  const auto draw_sample = [&]() -> bool {
    for (int attempt = 0; attempt < 100; ++attempt) {
      bool ok = true;
      for (std::size_t s = 0; s < kSampleSize && ok; ++s) {
        sample[s] = rng.index(total);
        for (std::size_t t = 0; t < s; ++t) {
          if (pooled[sample[t]].keypoint_index == pooled[sample[s]].keypoint_index) ok = false;
        }
      }
      if (!ok) continue;
      for (std::size_t s = 0; s < kSampleSize; ++s) {
        sample3d[s] = model.keypoints[pooled[sample[s]].keypoint_index];
        sample2d[s] = pooled[sample[s]].pixel;
      }
      if (solver == MinimalSolver::epnp &&
          detail::coplanar(sample3d[0], sample3d[1], sample3d[2], sample3d[3])) {
        continue;
      }
      return true;
    }
    return false;
  };

  const auto hypothesize = [&](Pose& out) -> bool {
    try {
      if (solver == MinimalSolver::epnp) {
        out = epnp(sample3d, sample2d, k);
        return true;
      }
      const auto candidates = p3p(std::span<const Vec3>(sample3d.data(), 3),
                                  std::span<const Vec2>(sample2d.data(), 3), k);
      double best = std::numeric_limits<double>::infinity();
      for (const Pose& c : candidates) {
        const double e = mean_reprojection_error(c, std::span<const Vec3>(&sample3d[3], 1),
                                                 std::span<const Vec2>(&sample2d[3], 1), k);
        if (e < best) {
          best = e;
          out = c;
        }
      }
      return std::isfinite(best);
    } catch (const Error&) {
      return false;
    }
  };

  for (; it < config.max_iterations && static_cast<double>(it) < needed; ++it) {
    if (n_kp < kSampleSize || !draw_sample()) break;
    Pose hypothesis;
    if (!hypothesize(hypothesis)) continue;

    const Mat3 r = hypothesis.rotation_matrix();
    bool valid = true;
    for (std::size_t j = 0; j < n_kp && valid; ++j) {
      const Vec3 c = r * model.keypoints[j] + hypothesis.translation;
      if (!(c.z() > kMinDepth)) {
        valid = false;
      } else {
        projected[j] = project_camera_point(k, c);
      }
    }
    if (!valid) continue;

    std::size_t count = 0;
    for (std::size_t i = 0; i < total; ++i) {
      const bool in = (projected[pooled[i].keypoint_index] - pooled[i].pixel).norm() <
                      config.inlier_threshold;
      mask[i] = in;
      count += in;
    }
    if (count > best_count) {
      best_count = count;
      best_mask = mask;
      best_pose = hypothesis;
      needed = std::min(needed, detail::ransac_iterations_needed(
                                    static_cast<double>(count) / static_cast<double>(total),
                                    kSampleSize, config.confidence));
    }
  }

  if (best_count < config.min_inliers || best_count < kSampleSize) {
    throw NoConsensus(best_count, std::max(config.min_inliers, kSampleSize));
  }

  std::vector<Vec3> in3d;
  std::vector<Vec2> in2d;
  in3d.reserve(best_count);
  in2d.reserve(best_count);
  for (std::size_t i = 0; i < total; ++i) {
    if (!best_mask[i]) continue;
    in3d.push_back(model.keypoints[pooled[i].keypoint_index]);
    in2d.push_back(pooled[i].pixel);
  }
  RansacResult result;
  result.pose = best_pose;
  try {
    result.pose = epnp(in3d, in2d, k);
  } catch (const Error&) {
    // Consensus set degenerate for a refit (e.g. all inliers on coplanar keypoints).
  }
  result.inlier_mask = std::move(best_mask);
  result.inlier_count = best_count;
  result.iterations = it;
  return result;
}

}  // namespace poseforge

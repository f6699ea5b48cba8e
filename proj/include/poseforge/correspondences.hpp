#pragma once

// Synthetic 3D-to-2D correspondence clusters: a virtual 640x480 camera looks
// at a unit sphere, grid cells inside its silhouette vote for the projections
// of the object keypoints.

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "poseforge/errors.hpp"
#include "poseforge/geometry.hpp"
#include "poseforge/random.hpp"

namespace poseforge {

enum class CorrespondenceMode { point, vector };

inline std::string_view to_string(CorrespondenceMode mode) {
  return mode == CorrespondenceMode::point ? "point" : "vector";
}

inline CorrespondenceMode parse_mode(std::string_view s) {
  if (s == "point") return CorrespondenceMode::point;
  if (s == "vector") return CorrespondenceMode::vector;
  throw InvalidArgument("unknown correspondence mode '" + std::string(s) + "'");
}

// Grid-cell center (x, y) plus an offset (point mode, pixels) or a unit
// direction (vector mode) towards the keypoint projection.
struct Correspondence {
  double x = 0.0;
  double y = 0.0;
  double dx = 0.0;
  double dy = 0.0;

  Vec2 origin() const { return {x, y}; }
  Vec2 offset() const { return {dx, dy}; }
  Vec2 target() const { return {x + dx, y + dy}; }

  bool operator==(const Correspondence&) const = default;
};

struct CorrespondenceCluster {
  int keypoint_index = 0;
  std::vector<Correspondence> members;

  bool operator==(const CorrespondenceCluster&) const = default;
};

struct SceneSample {
  std::int64_t scene_id = 0;
  CorrespondenceMode mode = CorrespondenceMode::point;
  CameraIntrinsics intrinsics = CameraIntrinsics::synthetic();
  Pose truth;
  std::vector<CorrespondenceCluster> clusters;
  double noise_sigma = 0.0;
  double outlier_rate = 0.0;
  std::uint64_t seed = 0;

  std::size_t members_per_cluster() const {
    return clusters.empty() ? 0 : clusters.front().members.size();
  }

  bool operator==(const SceneSample&) const = default;
};

struct ImageSize {
  int width = 640;
  int height = 480;

  bool operator==(const ImageSize&) const = default;
};

inline constexpr int kDefaultGridStride = 8;
inline constexpr std::size_t kDefaultClusterSize = 200;

/// Uniform rotation, translation uniform over [-2,2] x [-2,2] x [4,8].
inline Pose sample_pose(std::uint64_t rng_seed) {
  Rng rng(rng_seed);
  // Shoemake's uniform unit quaternion.
  const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  const double t1 = 2.0 * std::numbers::pi * u2, t2 = 2.0 * std::numbers::pi * u3;
  const Quaternion q{b * std::cos(t2), a * std::sin(t1), a * std::cos(t1), b * std::sin(t2)};
  const double tx = rng.uniform(-2.0, 2.0);
  const double ty = rng.uniform(-2.0, 2.0);
  const double tz = rng.uniform(4.0, 8.0);
  return {q.canonical(), {tx, ty, tz}};
}

/// Centers of the stride-aligned grid cells inside the perspective silhouette
/// of the model's bounding sphere (radius diameter/2, centered at the object
/// origin), clipped to the image.
inline std::vector<Vec2> mask_cells(const Pose& pose, const CameraIntrinsics& k,
                                    const ObjectModel& model, int grid_stride = kDefaultGridStride,
                                    ImageSize image = {}) {
  if (grid_stride <= 0) throw InvalidArgument("grid stride must be positive");
  const Vec3& center = pose.translation;
  const double radius = 0.5 * model.diameter;
  const double center_sq = center.squaredNorm();
  const double radius_sq = radius * radius;
  std::vector<Vec2> cells;
  for (int row = 0; row + grid_stride <= image.height; row += grid_stride) {
    for (int col = 0; col + grid_stride <= image.width; col += grid_stride) {
      const Vec2 c(col + 0.5 * grid_stride, row + 0.5 * grid_stride);
      const Vec2 n = k.unproject(c);
      const Vec3 ray = Vec3(n.x(), n.y(), 1.0).normalized();
      const double along = ray.dot(center);
      // The ray hits the sphere iff its distance to the center is <= radius.
      if (along > 0.0 && center_sq - along * along <= radius_sq) {
        cells.push_back(c);
      }
    }
  }
  if (cells.empty()) throw EmptyMask();
  return cells;
}

/// Applies the noise / outlier / mode protocol to a scene whose members carry
/// correct cell centers. Offsets are recomputed from the ground-truth pose,
/// so any scene (clean or already corrupted) can be re-corrupted.
inline void corrupt_scene(SceneSample& scene, const ObjectModel& model, CorrespondenceMode mode,
                          double noise_sigma, double outlier_rate, Rng& rng,
                          ImageSize image = {}) {
  if (!(outlier_rate >= 0.0 && outlier_rate <= 1.0)) {
    throw InvalidArgument("outlier rate must lie in [0, 1]");
  }
  if (!(noise_sigma >= 0.0)) throw InvalidArgument("noise sigma must be non-negative");
  if (scene.clusters.size() != model.keypoints.size()) {
    throw InvalidArgument("scene cluster count does not match the model keypoints");
  }
  scene.mode = mode;
  scene.noise_sigma = noise_sigma;
  scene.outlier_rate = outlier_rate;
  for (std::size_t i = 0; i < scene.clusters.size(); ++i) {
    auto& cluster = scene.clusters[i];
    const Vec2 target = project(scene.truth, scene.intrinsics, model.keypoints[i]);
    for (auto& c : cluster.members) {
      c.dx = target.x() - c.x;
      c.dy = target.y() - c.y;
      if (noise_sigma > 0.0) {
        c.dx += rng.normal(0.0, noise_sigma);
        c.dy += rng.normal(0.0, noise_sigma);
      }
    }
    const std::size_t m = cluster.members.size();
    const auto n_out = static_cast<std::size_t>(std::floor(outlier_rate * static_cast<double>(m)));
    // Partial Fisher-Yates: the first n_out entries of `order` are the outliers.
    std::vector<std::size_t> order(m);
    for (std::size_t j = 0; j < m; ++j) order[j] = j;
    for (std::size_t j = 0; j < n_out; ++j) {
      std::swap(order[j], order[j + rng.index(m - j)]);
      auto& c = cluster.members[order[j]];
      c.dx = rng.uniform(0.0, image.width) - c.x;
      c.dy = rng.uniform(0.0, image.height) - c.y;
    }
    if (mode == CorrespondenceMode::vector) {
      for (auto& c : cluster.members) {
        const double len = std::hypot(c.dx, c.dy);
        if (len > 0.0) {
          c.dx /= len;
          c.dy /= len;
        } else {
          c.dx = 1.0;
          c.dy = 0.0;
        }
      }
    }
  }
}

/// One synthetic scene. The same m cells (drawn with replacement) feed every
/// cluster; cluster i belongs to keypoint i.
inline SceneSample generate_scene(std::int64_t scene_id, std::uint64_t seed, CorrespondenceMode mode,
                                  const ObjectModel& model, const CameraIntrinsics& intrinsics,
                                  std::size_t m, double noise_sigma, double outlier_rate,
                                  int grid_stride = kDefaultGridStride, ImageSize image = {}) {
  if (m < 1) throw InvalidArgument("cluster size m must be >= 1");
  if (!(outlier_rate >= 0.0 && outlier_rate <= 1.0)) {
    throw InvalidArgument("outlier rate must lie in [0, 1]");
  }
  SceneSample scene;
  scene.scene_id = scene_id;
  scene.seed = seed;
  scene.intrinsics = intrinsics;
  scene.truth = sample_pose(mix_seed(seed, 0));
  const std::vector<Vec2> cells = mask_cells(scene.truth, intrinsics, model, grid_stride, image);

  Rng rng(mix_seed(seed, 1));
  std::vector<Vec2> picked(m);
  for (auto& p : picked) p = cells[rng.index(cells.size())];

  scene.clusters.resize(model.keypoints.size());
  for (std::size_t i = 0; i < scene.clusters.size(); ++i) {
    scene.clusters[i].keypoint_index = static_cast<int>(i);
    scene.clusters[i].members.reserve(m);
    for (const Vec2& p : picked) scene.clusters[i].members.push_back({p.x(), p.y(), 0.0, 0.0});
  }
  corrupt_scene(scene, model, mode, noise_sigma, outlier_rate, rng, image);
  return scene;
}

/// Seed of scene `scene_id` in a dataset generated from `global_seed`.
inline std::uint64_t scene_seed(std::uint64_t global_seed, std::int64_t scene_id) {
  return mix_seed(global_seed, static_cast<std::uint64_t>(scene_id));
}

struct DatasetConfig {
  std::size_t count = 0;
  std::uint64_t seed = 0;
  CorrespondenceMode mode = CorrespondenceMode::point;
  std::size_t m = kDefaultClusterSize;
  double noise_sigma = 0.0;
  double outlier_rate = 0.0;
  std::int64_t first_id = 0;
};

inline std::vector<SceneSample> generate_dataset(const DatasetConfig& cfg, const ObjectModel& model,
                                                 const CameraIntrinsics& k = CameraIntrinsics::synthetic()) {
  std::vector<SceneSample> out;
  out.reserve(cfg.count);
  for (std::size_t i = 0; i < cfg.count; ++i) {
    const std::int64_t id = cfg.first_id + static_cast<std::int64_t>(i);
    out.push_back(generate_scene(id, scene_seed(cfg.seed, id), cfg.mode, model, k, cfg.m,
                                 cfg.noise_sigma, cfg.outlier_rate));
  }
  return out;
}

// Flattens a point-mode scene into (keypoint index, observed pixel) pairs.
struct PooledCorrespondence {
  int keypoint_index;
  Vec2 pixel;
};

inline std::vector<PooledCorrespondence> pool_correspondences(const SceneSample& scene) {
  if (scene.mode != CorrespondenceMode::point) {
    throw InvalidArgument("pooling pixel correspondences requires a point-mode scene");
  }
  std::vector<PooledCorrespondence> out;
  out.reserve(scene.clusters.size() * scene.members_per_cluster());
  for (const auto& cl : scene.clusters) {
    for (const auto& c : cl.members) out.push_back({cl.keypoint_index, c.target()});
  }
  return out;
}

}  // namespace poseforge

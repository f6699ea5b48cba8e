#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "poseforge/ransac.hpp"
#include "poseforge/voting.hpp"

using namespace poseforge;

namespace {

const CameraIntrinsics kCam = CameraIntrinsics::synthetic();

SceneSample point_scene(std::int64_t id, double sigma, double rate, std::size_t m = 200) {
  return generate_scene(id, scene_seed(31, id), CorrespondenceMode::point, unit_sphere_model(), kCam, m,
                        sigma, rate);
}

SceneSample vector_scene(std::int64_t id, double sigma, double rate, std::size_t m = 200) {
  return generate_scene(id, scene_seed(31, id), CorrespondenceMode::vector, unit_sphere_model(), kCam, m,
                        sigma, rate);
}

Correspondence ray(double x, double y, double dx, double dy) {
  const double n = std::hypot(dx, dy);
  return {x, y, dx / n, dy / n};
}

}  // namespace

TEST(RansacConfig, Validation) {
  RansacConfig c;
  EXPECT_NO_THROW(c.validate());
  c.max_iterations = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.confidence = 1.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.inlier_threshold = 0.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(RansacIterations, ConfidenceFormula) {
  // 1 - (1 - w^s)^k >= confidence
  const double k = detail::ransac_iterations_needed(0.7, 4, 0.99);
  EXPECT_NEAR(1.0 - std::pow(1.0 - std::pow(0.7, 4), k), 0.99, 1e-12);
  EXPECT_EQ(detail::ransac_iterations_needed(1.0, 4, 0.99), 1.0);
  EXPECT_TRUE(std::isinf(detail::ransac_iterations_needed(0.0, 4, 0.99)));
}

TEST(Ransac, NoiseFreeAllInliers) {
  const ObjectModel model = unit_sphere_model();
  for (std::int64_t id = 0; id < 20; ++id) {
    const SceneSample s = point_scene(id, 0.0, 0.0);
    for (auto solver : {MinimalSolver::epnp, MinimalSolver::p3p}) {
      const RansacResult r = ransac_pnp(s, model, solver, {});
      EXPECT_EQ(r.inlier_count, 1600u);
      EXPECT_TRUE(std::all_of(r.inlier_mask.begin(), r.inlier_mask.end(), [](bool b) { return b; }));
      EXPECT_LT(pose_error_ratio(r.pose, s.truth, model), 1e-6);
    }
  }
}

TEST(Ransac, RecoversUnderOutliers) {
  const ObjectModel model = unit_sphere_model();
  for (std::int64_t id = 0; id < 50; ++id) {
    const SceneSample s = point_scene(id, 0.0, 0.3);
    RansacConfig cfg;
    cfg.rng_seed = static_cast<std::uint64_t>(id);
    EXPECT_LT(pose_error_ratio(ransac_pnp(s, model, MinimalSolver::epnp, cfg).pose, s.truth, model), 1e-3);
    EXPECT_LT(pose_error_ratio(ransac_pnp(s, model, MinimalSolver::p3p, cfg).pose, s.truth, model), 1e-3);
  }
}

TEST(Ransac, AllOutliersNoConsensus) {
  const ObjectModel model = unit_sphere_model();
  const SceneSample s = point_scene(3, 0.0, 1.0);
  try {
    ransac_pnp(s, model, MinimalSolver::epnp, {});
    FAIL() << "expected NoConsensus";
  } catch (const NoConsensus& e) {
    EXPECT_LT(e.best_inlier_count(), 12u);
  }
}

TEST(Ransac, SeedDeterminism) {
  const ObjectModel model = unit_sphere_model();
  const SceneSample s = point_scene(4, 5.0, 0.2);
  RansacConfig cfg;
  cfg.rng_seed = 99;
  const RansacResult a = ransac_pnp(s, model, MinimalSolver::epnp, cfg);
  const RansacResult b = ransac_pnp(s, model, MinimalSolver::epnp, cfg);
  EXPECT_EQ(a.pose, b.pose);
  EXPECT_EQ(a.inlier_mask, b.inlier_mask);
  EXPECT_EQ(a.iterations, b.iterations);
}

TEST(Ransac, RequiresPointMode) {
  EXPECT_THROW(ransac_pnp(vector_scene(0, 0, 0), unit_sphere_model(), MinimalSolver::epnp, {}), InvalidArgument);
}

TEST(Crosspoint, DiagonalRays) {
  const auto p = crosspoint(ray(0, 0, 1, 1), ray(2, 0, -1, 1));
  ASSERT_TRUE(p.has_value());
  EXPECT_NEAR(p->x(), 1.0, 1e-15);
  EXPECT_NEAR(p->y(), 1.0, 1e-15);
}

TEST(Crosspoint, ParallelIsNone) {
  EXPECT_FALSE(crosspoint(ray(0, 0, 1, 1), ray(2, 0, 1, 1)).has_value());
  EXPECT_FALSE(crosspoint(ray(0, 0, 1, 0), ray(0, 5, -1, 0)).has_value());
}

TEST(Crosspoint, BehindOriginIsNone) {
  EXPECT_FALSE(crosspoint(ray(0, 0, -1, -1), ray(2, 0, -1, 1)).has_value());
}

TEST(Crosspoint, RandomRaysThroughTarget) {
  std::mt19937_64 gen(32);
  std::uniform_real_distribution<double> u(0.0, 640.0);
  for (int i = 0; i < 1000; ++i) {
    const Vec2 target(u(gen), u(gen) * 0.75);
    const Vec2 a(u(gen), u(gen) * 0.75), b(u(gen), u(gen) * 0.75);
    const auto p = crosspoint(ray(a.x(), a.y(), target.x() - a.x(), target.y() - a.y()),
                              ray(b.x(), b.y(), target.x() - b.x(), target.y() - b.y()));
    const double angle = std::abs(std::atan2(cross2((target - a).normalized(), (target - b).normalized()),
                                             (target - a).normalized().dot((target - b).normalized())));
    if (angle < 1e-2 || angle > std::numbers::pi - 1e-2) continue;  // ill-conditioned
    ASSERT_TRUE(p.has_value());
    EXPECT_LT((*p - target).norm(), 1e-9);
  }
}

TEST(Voting, NoiseFreeKeypointsExact) {
  const ObjectModel model = unit_sphere_model();
  for (std::int64_t id = 0; id < 10; ++id) {
    const SceneSample s = vector_scene(id, 0.0, 0.0);
    const auto kps = vote_keypoints(s, {});
    for (std::size_t i = 0; i < 8; ++i) {
      EXPECT_LT((kps[i] - project(s.truth, kCam, model.keypoints[i])).norm(), 1e-6);
    }
    EXPECT_LT(pose_error_ratio(voting_pnp(s, model, {}), s.truth, model), 1e-6);
  }
}

TEST(Voting, SmallClusterEnumeratesPairs) {
  const ObjectModel model = unit_sphere_model();
  const SceneSample s = vector_scene(1, 0.0, 0.0, 12);
  const auto kps = vote_keypoints(s, {});
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_LT((kps[i] - project(s.truth, kCam, model.keypoints[i])).norm(), 1e-6);
  }
}

TEST(Voting, NoiseIncreasesError) {
  const ObjectModel model = unit_sphere_model();
  double clean = 0.0, noisy = 0.0;
  for (std::int64_t id = 0; id < 20; ++id) {
    clean += pose_error_ratio(voting_pnp(vector_scene(id, 0.0, 0.0), model, {}), vector_scene(id, 0, 0).truth, model);
    const SceneSample n = vector_scene(id, 10.0, 0.0);
    noisy += pose_error_ratio(voting_pnp(n, model, {}), n.truth, model);
  }
  EXPECT_LT(clean, noisy);
}

TEST(Voting, WithinClusterPermutationInvariant) {
  std::mt19937_64 gen(33);
  for (std::int64_t id = 0; id < 10; ++id) {
    const SceneSample s = vector_scene(id, 6.0, 0.2);
    SceneSample shuffled = s;
    for (auto& cl : shuffled.clusters) std::shuffle(cl.members.begin(), cl.members.end(), gen);
    RansacConfig cfg;
    cfg.rng_seed = 7;
    EXPECT_EQ(vote_keypoints(s, cfg), vote_keypoints(shuffled, cfg));
  }
}

TEST(Voting, ParallelClusterFails) {
  CorrespondenceCluster cl;
  for (int k = 0; k < 10; ++k) cl.members.push_back(ray(10.0 * k, 5.0 * k, 1.0, 0.0));
  EXPECT_THROW(vote_keypoint(cl, {}), DegenerateConfiguration);
}

TEST(Voting, RequiresVectorMode) {
  EXPECT_THROW(voting_pnp(point_scene(0, 0, 0), unit_sphere_model(), {}), InvalidArgument);
}

#pragma once

// Keypoint voting from 2D direction fields, followed by EPnP on the voted
// keypoints.

#include <algorithm>
#include <bit>
#include <cmath>
#include <optional>
#include <tuple>
#include <vector>

#include "poseforge/correspondences.hpp"
#include "poseforge/epnp.hpp"
#include "poseforge/errors.hpp"
#include "poseforge/random.hpp"
#include "poseforge/ransac.hpp"

namespace poseforge {

inline constexpr double kParallelRayTolerance = 1e-6;  // radians

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

/// Intersection of the rays origin + s * direction (s >= 0) of two vector-mode
/// correspondences; empty when parallel or when the intersection lies behind
/// either origin.
inline std::optional<Vec2> crosspoint(const Correspondence& c1, const Correspondence& c2) {
  const Vec2 o1 = c1.origin(), o2 = c2.origin();
  const double n1 = c1.offset().norm(), n2 = c2.offset().norm();
  if (!(n1 > 0.0) || !(n2 > 0.0)) return std::nullopt;
  const Vec2 d1 = c1.offset() / n1, d2 = c2.offset() / n2;
  const double den = cross2(d1, d2);
  if (std::abs(den) < std::sin(kParallelRayTolerance)) return std::nullopt;
  const Vec2 w = o2 - o1;
  const double s = cross2(w, d2) / den;
  const double u = cross2(w, d1) / den;
  if (s < 0.0 || u < 0.0) return std::nullopt;
  return o1 + s * d1;
}

namespace detail {

inline std::uint64_t hash_members(const std::vector<Correspondence>& members) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const auto& c : members) {
    for (double v : {c.x, c.y, c.dx, c.dy}) {
      h ^= std::bit_cast<std::uint64_t>(v);
      h *= 0x100000001B3ULL;
    }
  }
  return h;
}

}  // namespace detail

/// Voted 2D location of one cluster's keypoint.
///
/// Members are put in a canonical order and the pair-sampling seed is derived
/// from their contents, so the estimate does not depend on member order.
inline Vec2 vote_keypoint(const CorrespondenceCluster& cluster, const RansacConfig& config) {
  std::vector<Correspondence> members = cluster.members;
  std::sort(members.begin(), members.end(), [](const Correspondence& a, const Correspondence& b) {
    return std::tie(a.x, a.y, a.dx, a.dy) < std::tie(b.x, b.y, b.dx, b.dy);
  });
  const std::size_t m = members.size();
  if (m < 2) throw InvalidArgument("voting needs at least 2 members per cluster");

  constexpr std::size_t kMaxHypotheses = 500;
  std::vector<Vec2> hypotheses;
  const std::size_t all_pairs = m * (m - 1) / 2;
  if (all_pairs <= kMaxHypotheses) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = i + 1; j < m; ++j) {
        if (auto h = crosspoint(members[i], members[j])) hypotheses.push_back(*h);
      }
    }
  } else {
    Rng rng(mix_seed(config.rng_seed, detail::hash_members(members)));
    for (std::size_t t = 0; t < kMaxHypotheses; ++t) {
      const std::size_t i = rng.index(m);
      std::size_t j = rng.index(m - 1);
      if (j >= i) ++j;
      if (auto h = crosspoint(members[i], members[j])) hypotheses.push_back(*h);
    }
  }
  if (hypotheses.empty()) {
    throw DegenerateConfiguration("cluster " + std::to_string(cluster.keypoint_index) +
                                  " has no valid crosspoint");
  }

  const double thr = config.inlier_threshold;
  std::size_t best_votes = 0, best = 0;
  for (std::size_t h = 0; h < hypotheses.size(); ++h) {
    std::size_t votes = 0;
    for (const auto& c : members) {
      const Vec2 v = hypotheses[h] - c.origin();
      const Vec2 d = c.offset().normalized();
      if (v.dot(d) >= 0.0 && std::abs(cross2(d, v)) < thr) ++votes;
    }
    if (votes > best_votes) {
      best_votes = votes;
      best = h;
    }
  }
  // Mean of the hypotheses that agree with the winner.
  Vec2 sum = Vec2::Zero();
  std::size_t count = 0;
  for (const Vec2& h : hypotheses) {
    if ((h - hypotheses[best]).norm() < thr) {
      sum += h;
      ++count;
    }
  }
  return sum / static_cast<double>(count);
}

inline std::vector<Vec2> vote_keypoints(const SceneSample& scene, const RansacConfig& config) {
  if (scene.mode != CorrespondenceMode::vector) {
    throw InvalidArgument("voting needs a vector-mode scene");
  }
  std::vector<Vec2> out;
  out.reserve(scene.clusters.size());
  for (const auto& cl : scene.clusters) out.push_back(vote_keypoint(cl, config));
  return out;
}

inline Pose voting_pnp(const SceneSample& scene, const ObjectModel& model, const RansacConfig& config) {
  config.validate();
  const std::vector<Vec2> keypoints2d = vote_keypoints(scene, config);
  return epnp(model.keypoints, keypoints2d, scene.intrinsics);
}

}  // namespace poseforge

#pragma once

// Mini-batch Adam training with online noise / outlier augmentation.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "poseforge/correspondences.hpp"
#include "poseforge/errors.hpp"
#include "poseforge/geometry.hpp"
#include "poseforge/random.hpp"
#include "poseforge/regressor/adam.hpp"
#include "poseforge/regressor/checkpoint.hpp"
#include "poseforge/regressor/network.hpp"

namespace poseforge::regressor {

struct TrainConfig {
  std::size_t epochs = 300;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::pair<double, double> noise_sigma_range{0.0, 15.0};
  std::pair<double, double> outlier_range{0.0, 0.3};
  Vec3 translation_scale{2.0, 2.0, 8.0};
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // 0: only at the end
  std::string checkpoint_path;       // empty: no checkpoint files

  AdamConfig adam() const { return {learning_rate, adam_beta1, adam_beta2, adam_eps}; }

  void validate() const {
    adam().validate();
    if (batch_size < 1) throw InvalidArgument("batch size must be >= 1");
    if (!(noise_sigma_range.first >= 0.0 && noise_sigma_range.first <= noise_sigma_range.second)) {
      throw InvalidArgument("noise sigma range must be ordered and non-negative");
    }
    if (!(outlier_range.first >= 0.0 && outlier_range.first <= outlier_range.second &&
          outlier_range.second <= 1.0)) {
      throw InvalidArgument("outlier range must be ordered within [0, 1]");
    }
    if (!(translation_scale.array() > 0.0).all()) {
      throw InvalidArgument("translation scale must be positive");
    }
  }
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double noise_sigma = 0.0;
  double mean_loss = 0.0;
};

struct TrainResult {
  RegressorParams<float> params;
  std::vector<EpochLog> log;
};

inline std::string format_train_log(const std::vector<EpochLog>& log) {
  std::string out = "epoch,noise_sigma,mean_loss\n";
  char buf[96];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", e.epoch, e.noise_sigma, e.mean_loss);
    out += buf;
  }
  return out;
}

inline void write_train_log(const std::vector<EpochLog>& log, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path, "cannot open for writing");
  out << format_train_log(log);
  if (!out) throw IoError(path, "write failed");
}

/// Network layout the trainer uses for a given dataset.
inline NetworkConfig training_network(const std::vector<SceneSample>& scenes, NetworkConfig net,
                                      const TrainConfig& cfg) {
  if (scenes.empty()) throw InvalidArgument("training needs at least one scene");
  for (const auto& s : scenes) {
    if (s.mode != scenes.front().mode) throw InvalidArgument("training scenes mix correspondence modes");
  }
  net.mode = scenes.front().mode;
  net.m = scenes.front().members_per_cluster();
  net.n = scenes.front().clusters.size();
  net.translation_scale = cfg.translation_scale;
  net.validate();
  return net;
}

inline std::uint64_t init_seed(std::uint64_t train_seed) { return mix_seed(train_seed, 0x1417ULL); }

/// Trains from seeded initial parameters. Scenes are re-corrupted every epoch
/// (noise sigma per epoch, outlier rate per scene); offsets are recomputed
/// from each scene's ground truth, so clean or noisy inputs both work.
inline TrainResult train(const std::vector<SceneSample>& scenes, const ObjectModel& model,
                         const NetworkConfig& network, const TrainConfig& cfg,
                         const std::function<void(const EpochLog&, const RegressorParams<float>&)>& on_epoch = {}) {
  cfg.validate();
  const NetworkConfig net = training_network(scenes, network, cfg);
  if (net.n != model.keypoints.size()) {
    throw InvalidArgument("network cluster count does not match the model keypoints");
  }
  TrainResult result{init_params<float>(net, init_seed(cfg.seed)), {}};
  RegressorParams<float>& params = result.params;
  AdamState<float> adam(static_cast<Eigen::Index>(params.size()));
  const AdamConfig adam_cfg = cfg.adam();
  const std::span<const Vec3> keypoints(model.keypoints);

  std::vector<std::size_t> order(scenes.size());
  for (std::size_t e = 1; e <= cfg.epochs; ++e) {
    Rng epoch_rng(mix_seed(cfg.seed, 2 * e));
    const double sigma = epoch_rng.uniform(cfg.noise_sigma_range.first, cfg.noise_sigma_range.second);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[epoch_rng.index(i)]);

    double loss_sum = 0.0;
    RegressorParams<float> grad = params.zeros_like();
    std::size_t in_batch = 0;
    const std::uint64_t scene_base = mix_seed(cfg.seed, 2 * e + 1);
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      SceneSample scene = scenes[order[pos]];
      Rng scene_rng(mix_seed(scene_base, order[pos]));
      const double rate = scene_rng.uniform(cfg.outlier_range.first, cfg.outlier_range.second);
      corrupt_scene(scene, model, net.mode, sigma, rate, scene_rng, net.image);

      const auto non_finite = [&] {
        return NonFinite("non-finite loss at epoch " + std::to_string(e) + ", scene " +
                         std::to_string(scene.scene_id));
      };
      Prediction<float> pred;
      try {
        pred = forward(scene, params, keypoints);
      } catch (const NonFinite&) {
        throw non_finite();
      }
      const float loss = loss_from_trace(pred.trace, scene.truth, keypoints);
      if (!std::isfinite(loss)) throw non_finite();
      loss_sum += loss;
      grad.data() += backward(pred.trace, scene.truth, keypoints, params).data();
      ++in_batch;
      if (in_batch == cfg.batch_size || pos + 1 == order.size()) {
        grad.data() /= static_cast<float>(in_batch);
        adam_step(params.data(), grad.data(), adam, adam_cfg);
        grad.data().setZero();
        in_batch = 0;
      }
    }
    const EpochLog entry{e, sigma, loss_sum / static_cast<double>(scenes.size())};
    result.log.push_back(entry);
    if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 && e % cfg.checkpoint_every == 0 &&
        e != cfg.epochs) {
      save_checkpoint(params, cfg.checkpoint_path, {{"epoch", e}});
    }
    if (on_epoch) on_epoch(entry, params);
  }
  if (!cfg.checkpoint_path.empty()) save_checkpoint(params, cfg.checkpoint_path, {{"epoch", cfg.epochs}});
  return result;
}

/// Mean pose error ratio of a model over scenes (inputs used as given).
template <typename Scalar>
double mean_error_ratio(const RegressorParams<Scalar>& params, const std::vector<SceneSample>& scenes,
                        const ObjectModel& model) {
  if (scenes.empty()) throw InvalidArgument("no scenes to evaluate");
  double sum = 0.0;
  for (const auto& s : scenes) sum += pose_error_ratio(predict(s, params, model.keypoints), s.truth, model);
  return sum / static_cast<double>(scenes.size());
}

}  // namespace poseforge::regressor

#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Core>

#include "poseforge/errors.hpp"

namespace poseforge::regressor {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw InvalidArgument("Adam betas must lie in [0, 1)");
    }
    if (!(eps > 0.0)) throw InvalidArgument("Adam eps must be positive");
  }
};

template <typename Scalar>
struct AdamState {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> m, v;
  std::uint64_t step = 0;

  explicit AdamState(Eigen::Index size = 0)
      : m(Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(size)),
        v(Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(size)) {}
};

/// One bias-corrected Adam update in place. A non-finite gradient leaves
/// params and state untouched and throws NonFinite.
template <typename Scalar>
void adam_step(Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& params,
               const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& grads, AdamState<Scalar>& state,
               const AdamConfig& config) {
  if (params.size() != grads.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw InvalidArgument("Adam shapes do not match");
  }
  for (Eigen::Index i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(static_cast<double>(grads[i]))) {
      throw NonFinite("non-finite gradient at parameter " + std::to_string(i) + "; step aborted");
    }
  }
  ++state.step;
  const auto b1 = Scalar(config.beta1), b2 = Scalar(config.beta2);
  state.m = b1 * state.m + (Scalar(1) - b1) * grads;
  state.v = b2 * state.v + (Scalar(1) - b2) * grads.cwiseProduct(grads);
  const double t = static_cast<double>(state.step);
  const auto c1 = Scalar(1.0 - std::pow(config.beta1, t));
  const auto c2 = Scalar(1.0 - std::pow(config.beta2, t));
  const auto lr = Scalar(config.learning_rate), eps = Scalar(config.eps);
  params.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + eps);
}

}  // namespace poseforge::regressor

#pragma once

#include <span>

#include "pathoscope/neural/tensor.hpp"

namespace pathoscope::nn {

/// Classical momentum: v <- momentum*v - lr*g; p <- p + v.
template <typename T>
void sgd_step(std::span<T> params, std::span<const T> grads, T learning_rate, T momentum, std::span<T> velocity) {
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    throw Error(ErrorCode::ShapeMismatch, "sgd_step: parameter, gradient and velocity sizes differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = momentum * velocity[i] - learning_rate * grads[i];
    params[i] += velocity[i];
  }
}

template <typename T>
void sgd_step(Tensor<T>& params, const Tensor<T>& grads, T learning_rate, T momentum, Tensor<T>& velocity) {
  if (params.shape() != grads.shape() || params.shape() != velocity.shape()) {
    throw Error(ErrorCode::ShapeMismatch, "sgd_step: tensor shapes differ");
  }
  sgd_step(params.data(), std::span<const T>(grads.data()), learning_rate, momentum, velocity.data());
}

}  // namespace pathoscope::nn

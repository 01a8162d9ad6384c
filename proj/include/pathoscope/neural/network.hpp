#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "pathoscope/neural/layers.hpp"
#include "pathoscope/neural/tensor.hpp"

namespace pathoscope::nn {

/// The fixed patch classifier: conv(7,3x3) -> relu -> maxpool(2) -> conv(12,2x2)
/// -> relu -> dense(500) -> relu -> dense(2) -> softmax, on a 3 x p x p input.
struct NetworkConfig {
  static constexpr std::size_t kChannels = 3;
  static constexpr std::size_t kConv1Filters = 7;
  static constexpr std::size_t kConv1Size = 3;
  static constexpr std::size_t kPoolFactor = 2;
  static constexpr std::size_t kConv2Filters = 12;
  static constexpr std::size_t kConv2Size = 2;
  static constexpr std::size_t kHiddenUnits = 500;
  static constexpr std::size_t kClasses = 2;
  static constexpr std::size_t kMinPatchSize = 8;

  std::size_t patch_size = 32;

  /// PatchTooSmall below kMinPatchSize.
  void validate() const;

  std::size_t conv1_out() const { return patch_size - kConv1Size + 1; }
  std::size_t pool_out() const { return conv1_out() / kPoolFactor; }
  std::size_t conv2_out() const { return pool_out() - kConv2Size + 1; }
  std::size_t flatten_size() const { return kConv2Filters * conv2_out() * conv2_out(); }
  std::size_t input_size() const { return kChannels * patch_size * patch_size; }
  std::size_t parameter_count() const;

  std::vector<LayerSpec> layers() const;

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

inline constexpr std::array<std::string_view, 8> kParameterNames = {
    "conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias",
    "dense.weight", "dense.bias", "output.weight", "output.bias"};

template <typename T>
struct Parameters {
  Tensor<T> conv1_w, conv1_b, conv2_w, conv2_b, dense_w, dense_b, out_w, out_b;

  /// Zero-filled parameters shaped for `cfg`.
  static Parameters zeros(const NetworkConfig& cfg);

  std::array<Tensor<T>*, 8> tensors() {
    return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &dense_w, &dense_b, &out_w, &out_b};
  }
  std::array<const Tensor<T>*, 8> tensors() const {
    return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &dense_w, &dense_b, &out_w, &out_b};
  }

  std::size_t total_size() const;
  void fill(T value);

  friend bool operator==(const Parameters&, const Parameters&) = default;
};

/// Intermediate values of one forward pass, reused by backward.
template <typename T>
struct Trace {
  std::vector<T> z1, a1;       // conv1 pre/post activation
  std::vector<T> pooled;       // maxpool output
  std::vector<std::size_t> argmax;
  std::vector<T> z2, a2;       // conv2 pre/post activation
  std::vector<T> z3, a3;       // dense pre/post activation
  std::vector<T> logits;       // output layer
};

template <typename T>
struct Example {
  Tensor<T> input;  // [3, p, p]
  std::size_t label = 0;
};

template <typename T>
class Network {
 public:
  Network(NetworkConfig config, Parameters<T> params);

  /// Glorot-uniform weights, zero biases, deterministic in `seed`.
  static Network initialized(const NetworkConfig& config, std::uint64_t seed);

  const NetworkConfig& config() const { return config_; }
  const Parameters<T>& parameters() const { return params_; }
  Parameters<T>& parameters() { return params_; }

  /// `input` is a flat [3,p,p] buffer.
  void forward(std::span<const T> input, Trace<T>& trace) const;

  /// Everything after conv1+relu+pool, starting from a pooled map. Used by the
  /// detector, which computes the shared early layers once per image.
  void forward_from_pooled(std::span<const T> pooled, Trace<T>& trace) const;

  Tensor<T> logits(const Tensor<T>& input) const;
  /// Softmax over the two logits; element 1 is the positive class.
  std::array<T, 2> class_probabilities(const Tensor<T>& input) const;

  /// Adds d(loss)/d(params) for one example into `grads` and returns the loss.
  /// `trace` is scratch space that avoids reallocating between calls.
  T accumulate_gradient(std::span<const T> input, std::size_t label, Parameters<T>& grads, Trace<T>& trace) const;

  T loss(const Example<T>& example) const;

  template <typename U>
  Network<U> cast() const {
    Parameters<U> p;
    auto dst = p.tensors();
    auto src = params_.tensors();
    for (std::size_t i = 0; i < dst.size(); ++i) *dst[i] = src[i]->template cast<U>();
    return Network<U>(config_, std::move(p));
  }

 private:
  void check_input(std::size_t n) const;

  NetworkConfig config_;
  Parameters<T> params_;
};

}  // namespace pathoscope::nn

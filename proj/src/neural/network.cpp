#include "pathoscope/neural/network.hpp"

#include <cmath>

#include "pathoscope/core/rng.hpp"

namespace pathoscope::nn {

void NetworkConfig::validate() const {
  if (patch_size < kMinPatchSize) {
    throw Error(ErrorCode::PatchTooSmall,
                "patch size " + std::to_string(patch_size) + " < " + std::to_string(kMinPatchSize));
  }
}

std::size_t NetworkConfig::parameter_count() const {
  return Parameters<float>::zeros(*this).total_size();
}

std::vector<LayerSpec> NetworkConfig::layers() const {
  return {LayerSpec::conv(kConv1Filters, kConv1Size), LayerSpec::relu(),
          LayerSpec::maxpool(kPoolFactor),            LayerSpec::conv(kConv2Filters, kConv2Size),
          LayerSpec::relu(),                          LayerSpec::dense(kHiddenUnits),
          LayerSpec::relu(),                          LayerSpec::softmax_output(kClasses)};
}

template <typename T>
Parameters<T> Parameters<T>::zeros(const NetworkConfig& cfg) {
  cfg.validate();
  using C = NetworkConfig;
  return Parameters{Tensor<T>({C::kConv1Filters, C::kChannels, C::kConv1Size, C::kConv1Size}),
                    Tensor<T>({C::kConv1Filters}),
                    Tensor<T>({C::kConv2Filters, C::kConv1Filters, C::kConv2Size, C::kConv2Size}),
                    Tensor<T>({C::kConv2Filters}),
                    Tensor<T>({C::kHiddenUnits, cfg.flatten_size()}),
                    Tensor<T>({C::kHiddenUnits}),
                    Tensor<T>({C::kClasses, C::kHiddenUnits}),
                    Tensor<T>({C::kClasses})};
}

template <typename T>
std::size_t Parameters<T>::total_size() const {
  std::size_t n = 0;
  for (const auto* t : tensors()) n += t->size();
  return n;
}

template <typename T>
void Parameters<T>::fill(T value) {
  for (auto* t : tensors()) t->fill(value);
}

template <typename T>
Network<T>::Network(NetworkConfig config, Parameters<T> params) : config_(config), params_(std::move(params)) {
  config_.validate();
  auto expected = Parameters<T>::zeros(config_);
  auto want = expected.tensors();
  auto got = params_.tensors();
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (want[i]->shape() != got[i]->shape()) {
      throw Error(ErrorCode::ShapeMismatch, std::string(kParameterNames[i]) + " has shape " +
                                                shape_string(got[i]->shape()) + ", expected " +
                                                shape_string(want[i]->shape()));
    }
  }
}

template <typename T>
Network<T> Network<T>::initialized(const NetworkConfig& config, std::uint64_t seed) {
  auto params = Parameters<T>::zeros(config);
  Rng rng(seed);
  auto glorot = [&rng](Tensor<T>& w, std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& v : w.data()) v = static_cast<T>(uniform(rng, -limit, limit));
  };
  using C = NetworkConfig;
  const std::size_t k1 = C::kConv1Size * C::kConv1Size, k2 = C::kConv2Size * C::kConv2Size;
  glorot(params.conv1_w, C::kChannels * k1, C::kConv1Filters * k1);
  glorot(params.conv2_w, C::kConv1Filters * k2, C::kConv2Filters * k2);
  glorot(params.dense_w, config.flatten_size(), C::kHiddenUnits);
  glorot(params.out_w, C::kHiddenUnits, C::kClasses);
  return Network(config, std::move(params));
}

template <typename T>
void Network<T>::check_input(std::size_t n) const {
  if (n != config_.input_size()) {
    throw Error(ErrorCode::ShapeMismatch, "network expects " + std::to_string(config_.input_size()) +
                                              " input values, got " + std::to_string(n));
  }
}

namespace {

template <typename T>
void relu_into(const std::vector<T>& z, std::vector<T>& a) {
  a.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) a[i] = z[i] > T{0} ? z[i] : T{0};
}

}  // namespace

template <typename T>
void Network<T>::forward(std::span<const T> input, Trace<T>& t) const {
  check_input(input.size());
  using C = NetworkConfig;
  const std::size_t p = config_.patch_size, h1 = config_.conv1_out(), hp = config_.pool_out();
  t.z1.resize(C::kConv1Filters * h1 * h1);
  kernels::conv2d_forward(input.data(), C::kChannels, p, p, params_.conv1_w.raw(), C::kConv1Filters, C::kConv1Size,
                          params_.conv1_b.raw(), t.z1.data());
  relu_into(t.z1, t.a1);
  t.pooled.resize(C::kConv1Filters * hp * hp);
  t.argmax.resize(t.pooled.size());
  kernels::maxpool_forward(t.a1.data(), C::kConv1Filters, h1, h1, C::kPoolFactor, t.pooled.data(), t.argmax.data());
  forward_from_pooled(t.pooled, t);
}

template <typename T>
void Network<T>::forward_from_pooled(std::span<const T> pooled, Trace<T>& t) const {
  using C = NetworkConfig;
  const std::size_t hp = config_.pool_out();
  if (pooled.size() != C::kConv1Filters * hp * hp) throw Error(ErrorCode::ShapeMismatch, "pooled map size");
  t.z2.resize(config_.flatten_size());
  kernels::conv2d_forward(pooled.data(), C::kConv1Filters, hp, hp, params_.conv2_w.raw(), C::kConv2Filters,
                          C::kConv2Size, params_.conv2_b.raw(), t.z2.data());
  relu_into(t.z2, t.a2);
  t.z3.resize(C::kHiddenUnits);
  kernels::dense_forward(t.a2.data(), t.a2.size(), params_.dense_w.raw(), C::kHiddenUnits, params_.dense_b.raw(),
                         t.z3.data());
  relu_into(t.z3, t.a3);
  t.logits.resize(C::kClasses);
  kernels::dense_forward(t.a3.data(), t.a3.size(), params_.out_w.raw(), C::kClasses, params_.out_b.raw(),
                         t.logits.data());
}

template <typename T>
Tensor<T> Network<T>::logits(const Tensor<T>& input) const {
  Trace<T> t;
  forward(input.data(), t);
  return Tensor<T>({NetworkConfig::kClasses}, t.logits);
}

template <typename T>
std::array<T, 2> Network<T>::class_probabilities(const Tensor<T>& input) const {
  const auto p = softmax(logits(input));
  return {p[0], p[1]};
}

template <typename T>
T Network<T>::accumulate_gradient(std::span<const T> input, std::size_t label, Parameters<T>& g,
                                  Trace<T>& t) const {
  forward(input, t);
  using C = NetworkConfig;
  const auto loss = softmax_cross_entropy(Tensor<T>({C::kClasses}, t.logits), label);
  const T* d4 = loss.grad_logits.raw();

  std::vector<T> da3(C::kHiddenUnits, T{0});
  kernels::dense_backward_accumulate(t.a3.data(), t.a3.size(), params_.out_w.raw(), C::kClasses, d4, da3.data(),
                                     g.out_w.raw(), g.out_b.raw());
  for (std::size_t i = 0; i < da3.size(); ++i) {
    if (!(t.z3[i] > T{0})) da3[i] = T{0};
  }

  std::vector<T> da2(t.a2.size(), T{0});
  kernels::dense_backward_accumulate(t.a2.data(), t.a2.size(), params_.dense_w.raw(), C::kHiddenUnits, da3.data(),
                                     da2.data(), g.dense_w.raw(), g.dense_b.raw());
  for (std::size_t i = 0; i < da2.size(); ++i) {
    if (!(t.z2[i] > T{0})) da2[i] = T{0};
  }

  const std::size_t hp = config_.pool_out();
  std::vector<T> dpooled(t.pooled.size(), T{0});
  kernels::conv2d_backward_accumulate(t.pooled.data(), C::kConv1Filters, hp, hp, params_.conv2_w.raw(),
                                      C::kConv2Filters, C::kConv2Size, da2.data(), dpooled.data(), g.conv2_w.raw(),
                                      g.conv2_b.raw());

  std::vector<T> dz1(t.z1.size(), T{0});
  for (std::size_t o = 0; o < dpooled.size(); ++o) dz1[t.argmax[o]] += dpooled[o];
  for (std::size_t i = 0; i < dz1.size(); ++i) {
    if (!(t.z1[i] > T{0})) dz1[i] = T{0};
  }
  const std::size_t p = config_.patch_size;
  kernels::conv2d_backward_accumulate(input.data(), C::kChannels, p, p, params_.conv1_w.raw(), C::kConv1Filters,
                                      C::kConv1Size, dz1.data(), static_cast<T*>(nullptr), g.conv1_w.raw(),
                                      g.conv1_b.raw());
  return loss.loss;
}

template <typename T>
T Network<T>::loss(const Example<T>& example) const {
  Trace<T> t;
  forward(example.input.data(), t);
  return softmax_cross_entropy(Tensor<T>({NetworkConfig::kClasses}, t.logits), example.label).loss;
}

template struct Parameters<float>;
template struct Parameters<double>;
template class Network<float>;
template class Network<double>;

}  // namespace pathoscope::nn

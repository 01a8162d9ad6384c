#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pathoscope/neural/tensor.hpp"

namespace pathoscope::nn {

enum class LayerKind { Conv, MaxPool, Dense, Relu, SoftmaxOutput };

std::string to_string(LayerKind kind);

/// One entry of a layer stack. Only the fields relevant to `kind` are meaningful.
struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  std::size_t filters = 0;      // conv
  std::size_t filter_size = 0;  // conv
  std::size_t pool_factor = 0;  // maxpool
  std::size_t units = 0;        // dense, softmax-output

  static LayerSpec conv(std::size_t filters, std::size_t size) { return {LayerKind::Conv, filters, size, 0, 0}; }
  static LayerSpec maxpool(std::size_t factor) { return {LayerKind::MaxPool, 0, 0, factor, 0}; }
  static LayerSpec dense(std::size_t units) { return {LayerKind::Dense, 0, 0, 0, units}; }
  static LayerSpec relu() { return {LayerKind::Relu, 0, 0, 0, 0}; }
  static LayerSpec softmax_output(std::size_t units) { return {LayerKind::SoftmaxOutput, 0, 0, 0, units}; }

  /// Throws InvalidArgument when a kind-specific parameter is out of range.
  void validate() const;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// conv ----------------------------------------------------------------------

/// Valid (unpadded) stride-1 cross-correlation: [C,H,W] * [F,C,k,k] -> [F,H-k+1,W-k+1].
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& filters, const Tensor<T>& bias);

template <typename T>
struct Conv2dGrads {
  Tensor<T> input;
  Tensor<T> filters;
  Tensor<T> bias;
};

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& filters, const Tensor<T>& upstream);

// maxpool -------------------------------------------------------------------

/// Flat input index of the winning element for each output cell.
struct PoolIndices {
  Shape input_shape;
  Shape output_shape;
  std::vector<std::size_t> argmax;
};

template <typename T>
struct MaxPoolResult {
  Tensor<T> output;
  PoolIndices indices;
};

/// Disjoint factor x factor blocks; trailing rows/columns that do not fill a
/// block are dropped. Ties go to the first element in row-major block order.
template <typename T>
MaxPoolResult<T> maxpool_forward(const Tensor<T>& input, std::size_t factor = 2);

template <typename T>
Tensor<T> maxpool_backward(const PoolIndices& indices, const Tensor<T>& upstream);

// dense ---------------------------------------------------------------------

/// out = weights * flatten(input) + bias. Any input shape with n elements is accepted.
template <typename T>
Tensor<T> dense_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias);

template <typename T>
struct DenseGrads {
  Tensor<T> input;  // shaped like the forward input
  Tensor<T> weights;
  Tensor<T> bias;
};

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& upstream);

// relu ----------------------------------------------------------------------

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input);

/// Subgradient at exactly zero is zero.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& upstream);

// loss ----------------------------------------------------------------------

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

template <typename T>
struct LossResult {
  T loss;
  Tensor<T> grad_logits;
};

/// -log softmax(logits)[true_class] with max subtraction; grad = softmax - one_hot.
template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, std::size_t true_class);

// Raw kernels. These accumulate into caller-owned buffers and skip all shape
// checks; the Tensor-level functions above validate and then call them.
namespace kernels {

template <typename T>
void conv2d_forward(const T* input, std::size_t channels, std::size_t height, std::size_t width, const T* filters,
                    std::size_t n_filters, std::size_t k, const T* bias, T* out);

/// grad_input may be null when the input gradient is not needed.
template <typename T>
void conv2d_backward_accumulate(const T* input, std::size_t channels, std::size_t height, std::size_t width,
                                const T* filters, std::size_t n_filters, std::size_t k, const T* upstream,
                                T* grad_input, T* grad_filters, T* grad_bias);

template <typename T>
void maxpool_forward(const T* input, std::size_t channels, std::size_t height, std::size_t width, std::size_t factor,
                     T* out, std::size_t* argmax);

template <typename T>
void dense_forward(const T* input, std::size_t n, const T* weights, std::size_t m, const T* bias, T* out);

template <typename T>
void dense_backward_accumulate(const T* input, std::size_t n, const T* weights, std::size_t m, const T* upstream,
                               T* grad_input, T* grad_weights, T* grad_bias);

}  // namespace kernels

}  // namespace pathoscope::nn

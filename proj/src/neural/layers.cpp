#include "pathoscope/neural/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pathoscope::nn {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::Dense: return "dense";
    case LayerKind::Relu: return "relu";
    case LayerKind::SoftmaxOutput: return "softmax-output";
  }
  return "unknown";
}

void LayerSpec::validate() const {
  switch (kind) {
    case LayerKind::Conv:
      if (filters < 1 || filter_size < 1) throw Error(ErrorCode::InvalidArgument, "conv needs filters >= 1 and size >= 1");
      break;
    case LayerKind::MaxPool:
      if (pool_factor < 2) throw Error(ErrorCode::InvalidArgument, "pool factor must be >= 2");
      break;
    case LayerKind::Dense:
    case LayerKind::SoftmaxOutput:
      if (units < 1) throw Error(ErrorCode::InvalidArgument, "unit count must be >= 1");
      break;
    case LayerKind::Relu:
      break;
  }
}

namespace kernels {

template <typename T>
void conv2d_forward(const T* input, std::size_t channels, std::size_t height, std::size_t width, const T* filters,
                    std::size_t n_filters, std::size_t k, const T* bias, T* out) {
  const std::size_t oh = height - k + 1;
  const std::size_t ow = width - k + 1;
  for (std::size_t f = 0; f < n_filters; ++f) {
    T* dst = out + f * oh * ow;
    std::fill(dst, dst + oh * ow, bias[f]);
    for (std::size_t c = 0; c < channels; ++c) {
      const T* src = input + c * height * width;
      for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = 0; b < k; ++b) {
          const T w = filters[((f * channels + c) * k + a) * k + b];
          for (std::size_t i = 0; i < oh; ++i) {
            const T* row = src + (i + a) * width + b;
            T* orow = dst + i * ow;
            for (std::size_t j = 0; j < ow; ++j) orow[j] += w * row[j];
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_accumulate(const T* input, std::size_t channels, std::size_t height, std::size_t width,
                                const T* filters, std::size_t n_filters, std::size_t k, const T* upstream,
                                T* grad_input, T* grad_filters, T* grad_bias) {
  const std::size_t oh = height - k + 1;
  const std::size_t ow = width - k + 1;
  for (std::size_t f = 0; f < n_filters; ++f) {
    const T* up = upstream + f * oh * ow;
    T bias_sum = 0;
    for (std::size_t i = 0; i < oh * ow; ++i) bias_sum += up[i];
    grad_bias[f] += bias_sum;
    for (std::size_t c = 0; c < channels; ++c) {
      const T* src = input + c * height * width;
      T* gsrc = grad_input ? grad_input + c * height * width : nullptr;
      for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = 0; b < k; ++b) {
          const std::size_t widx = ((f * channels + c) * k + a) * k + b;
          const T w = filters[widx];
          T acc = 0;
          for (std::size_t i = 0; i < oh; ++i) {
            const T* row = src + (i + a) * width + b;
            const T* urow = up + i * ow;
            for (std::size_t j = 0; j < ow; ++j) acc += urow[j] * row[j];
            if (gsrc) {
              T* grow = gsrc + (i + a) * width + b;
              for (std::size_t j = 0; j < ow; ++j) grow[j] += urow[j] * w;
            }
          }
          grad_filters[widx] += acc;
        }
      }
    }
  }
}

template <typename T>
void maxpool_forward(const T* input, std::size_t channels, std::size_t height, std::size_t width, std::size_t factor,
                     T* out, std::size_t* argmax) {
  const std::size_t oh = height / factor;
  const std::size_t ow = width / factor;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = (c * height + i * factor) * width + j * factor;
        T best_value = input[best];
        for (std::size_t a = 0; a < factor; ++a) {
          for (std::size_t b = 0; b < factor; ++b) {
            const std::size_t idx = (c * height + i * factor + a) * width + j * factor + b;
            if (input[idx] > best_value) {
              best_value = input[idx];
              best = idx;
            }
          }
        }
        const std::size_t o = (c * oh + i) * ow + j;
        out[o] = best_value;
        argmax[o] = best;
      }
    }
  }
}

// Eight interleaved partial sums, combined in a fixed order. Deterministic and
// friendly to the vectoriser without relaxing IEEE semantics.
template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  T acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
  }
  for (std::size_t l = 0; i < n; ++i, ++l) acc[l] += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

template <typename T>
void dense_forward(const T* input, std::size_t n, const T* weights, std::size_t m, const T* bias, T* out) {
  for (std::size_t i = 0; i < m; ++i) out[i] = bias[i] + dot(weights + i * n, input, n);
}

template <typename T>
void dense_backward_accumulate(const T* input, std::size_t n, const T* weights, std::size_t m, const T* upstream,
                               T* grad_input, T* grad_weights, T* grad_bias) {
  for (std::size_t i = 0; i < m; ++i) {
    const T u = upstream[i];
    grad_bias[i] += u;
    if (u == T{0}) continue;
    T* gw = grad_weights + i * n;
    for (std::size_t j = 0; j < n; ++j) gw[j] += u * input[j];
    if (grad_input) {
      const T* w = weights + i * n;
      for (std::size_t j = 0; j < n; ++j) grad_input[j] += u * w[j];
    }
  }
}

}  // namespace kernels

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::ShapeMismatch, what);
}

template <typename T>
void check_conv_shapes(const Tensor<T>& input, const Tensor<T>& filters) {
  require(input.rank() == 3, "conv input must be [C,H,W], got " + shape_string(input.shape()));
  require(filters.rank() == 4 && filters.dim(2) == filters.dim(3),
          "conv filters must be [F,C,k,k], got " + shape_string(filters.shape()));
  require(filters.dim(1) == input.dim(0), "conv channel mismatch: input " + shape_string(input.shape()) +
                                              " filters " + shape_string(filters.shape()));
  require(input.dim(1) >= filters.dim(2) && input.dim(2) >= filters.dim(3),
          "conv input " + shape_string(input.shape()) + " smaller than filter");
}

}  // namespace

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& filters, const Tensor<T>& bias) {
  check_conv_shapes(input, filters);
  const std::size_t f = filters.dim(0), k = filters.dim(2);
  require(bias.size() == f, "conv bias must have one entry per filter");
  Tensor<T> out({f, input.dim(1) - k + 1, input.dim(2) - k + 1});
  kernels::conv2d_forward(input.raw(), input.dim(0), input.dim(1), input.dim(2), filters.raw(), f, k, bias.raw(),
                          out.raw());
  out.require_finite("conv2d_forward");
  return out;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& filters, const Tensor<T>& upstream) {
  check_conv_shapes(input, filters);
  const std::size_t f = filters.dim(0), k = filters.dim(2);
  require(upstream.shape() == Shape({f, input.dim(1) - k + 1, input.dim(2) - k + 1}),
          "conv upstream gradient has shape " + shape_string(upstream.shape()));
  Conv2dGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(filters.shape()), Tensor<T>({f})};
  kernels::conv2d_backward_accumulate(input.raw(), input.dim(0), input.dim(1), input.dim(2), filters.raw(), f, k,
                                      upstream.raw(), g.input.raw(), g.filters.raw(), g.bias.raw());
  g.input.require_finite("conv2d_backward");
  g.filters.require_finite("conv2d_backward");
  g.bias.require_finite("conv2d_backward");
  return g;
}

template <typename T>
MaxPoolResult<T> maxpool_forward(const Tensor<T>& input, std::size_t factor) {
  require(input.rank() == 3, "maxpool input must be [C,H,W]");
  if (factor < 2) throw Error(ErrorCode::InvalidArgument, "pool factor must be >= 2");
  require(input.dim(1) >= factor && input.dim(2) >= factor,
          "maxpool input " + shape_string(input.shape()) + " smaller than pool block");
  const Shape out_shape{input.dim(0), input.dim(1) / factor, input.dim(2) / factor};
  MaxPoolResult<T> r{Tensor<T>(out_shape), PoolIndices{input.shape(), out_shape, {}}};
  r.indices.argmax.resize(r.output.size());
  kernels::maxpool_forward(input.raw(), input.dim(0), input.dim(1), input.dim(2), factor, r.output.raw(),
                           r.indices.argmax.data());
  return r;
}

template <typename T>
Tensor<T> maxpool_backward(const PoolIndices& indices, const Tensor<T>& upstream) {
  if (upstream.shape() != indices.output_shape || indices.argmax.size() != upstream.size()) {
    throw Error(ErrorCode::IndexOutOfRange, "upstream gradient does not match pooling indices");
  }
  Tensor<T> grad(indices.input_shape);
  for (std::size_t o = 0; o < indices.argmax.size(); ++o) {
    const std::size_t idx = indices.argmax[o];
    if (idx >= grad.size()) throw Error(ErrorCode::IndexOutOfRange, "pool index " + std::to_string(idx));
    grad[idx] += upstream[o];
  }
  return grad;
}

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias) {
  require(weights.rank() == 2, "dense weights must be [m,n]");
  const std::size_t m = weights.dim(0), n = weights.dim(1);
  require(input.size() == n, "dense input has " + std::to_string(input.size()) + " values, weights expect " +
                                 std::to_string(n));
  require(bias.size() == m, "dense bias size mismatch");
  Tensor<T> out({m});
  kernels::dense_forward(input.raw(), n, weights.raw(), m, bias.raw(), out.raw());
  out.require_finite("dense_forward");
  return out;
}

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& upstream) {
  require(weights.rank() == 2, "dense weights must be [m,n]");
  const std::size_t m = weights.dim(0), n = weights.dim(1);
  require(input.size() == n, "dense input size mismatch");
  require(upstream.size() == m, "dense upstream size mismatch");
  DenseGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(weights.shape()), Tensor<T>({m})};
  kernels::dense_backward_accumulate(input.raw(), n, weights.raw(), m, upstream.raw(), g.input.raw(), g.weights.raw(),
                                     g.bias.raw());
  g.input.require_finite("dense_backward");
  g.weights.require_finite("dense_backward");
  return g;
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input) {
  Tensor<T> out = input;
  for (auto& v : out.data()) v = v > T{0} ? v : T{0};
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& upstream) {
  require(input.shape() == upstream.shape(), "relu upstream shape mismatch");
  Tensor<T> grad(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) grad[i] = input[i] > T{0} ? upstream[i] : T{0};
  return grad;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  logits.require_finite("softmax");
  const T mx = *std::max_element(logits.data().begin(), logits.data().end());
  Tensor<T> p(logits.shape());
  T total = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    total += p[i];
  }
  for (auto& v : p.data()) v /= total;
  return p;
}

template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, std::size_t true_class) {
  if (true_class >= logits.size()) throw Error(ErrorCode::IndexOutOfRange, "class index out of range");
  logits.require_finite("softmax_cross_entropy");
  const T mx = *std::max_element(logits.data().begin(), logits.data().end());
  T total = 0;
  for (const T v : logits.data()) total += std::exp(v - mx);
  const T log_total = std::log(total);
  LossResult<T> r{log_total - (logits[true_class] - mx), Tensor<T>(logits.shape())};
  for (std::size_t i = 0; i < logits.size(); ++i) r.grad_logits[i] = std::exp(logits[i] - mx - log_total);
  r.grad_logits[true_class] -= T{1};
  if (!std::isfinite(r.loss)) throw Error(ErrorCode::NonFinite, "loss is not finite");
  return r;
}

#define PATHOSCOPE_INSTANTIATE_LAYERS(T)                                                                              \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                           \
  template Conv2dGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                     \
  template MaxPoolResult<T> maxpool_forward(const Tensor<T>&, std::size_t);                                          \
  template Tensor<T> maxpool_backward(const PoolIndices&, const Tensor<T>&);                                         \
  template Tensor<T> dense_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                            \
  template DenseGrads<T> dense_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> relu_forward(const Tensor<T>&);                                                                 \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                                              \
  template Tensor<T> softmax(const Tensor<T>&);                                                                      \
  template LossResult<T> softmax_cross_entropy(const Tensor<T>&, std::size_t);                                       \
  template void kernels::conv2d_forward(const T*, std::size_t, std::size_t, std::size_t, const T*, std::size_t,      \
                                        std::size_t, const T*, T*);                                                  \
  template void kernels::conv2d_backward_accumulate(const T*, std::size_t, std::size_t, std::size_t, const T*,       \
                                                    std::size_t, std::size_t, const T*, T*, T*, T*);                 \
  template void kernels::maxpool_forward(const T*, std::size_t, std::size_t, std::size_t, std::size_t, T*,           \
                                         std::size_t*);                                                              \
  template void kernels::dense_forward(const T*, std::size_t, const T*, std::size_t, const T*, T*);                  \
  template void kernels::dense_backward_accumulate(const T*, std::size_t, const T*, std::size_t, const T*, T*, T*,   \
                                                   T*);

PATHOSCOPE_INSTANTIATE_LAYERS(float)
PATHOSCOPE_INSTANTIATE_LAYERS(double)

}  // namespace pathoscope::nn

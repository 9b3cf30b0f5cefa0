#pragma once

#include "aquaseg/tensor.hpp"

namespace aquaseg {

enum class Activation { relu, sigmoid };

/// Lower/upper bound applied to sigmoid outputs so log(p) and log(1-p) stay finite.
inline constexpr double kSigmoidClamp = 1e-7;

/// 2-D cross-correlation with zero padding.
/// weight is (out_c, in_c, kh, kw); bias is (1, out_c, 1, 1) or undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, int stride = 1,
                 int padding = 0);

/// Transposed convolution (adjoint of conv2d without padding).
/// weight is (in_c, out_c, k, k); output side is (in - 1) * stride + k.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& weight, int stride);

/// Non-overlapping k x k max pooling. Ties route the gradient to the first
/// element in row-major window order.
template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& input, int k = 2);

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& input, int factor);

/// Block mean over factor x factor windows.
template <typename T>
Tensor<T> avgpool_downsample(const Tensor<T>& input, int factor);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

/// Channels [begin, begin + count).
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& input, int begin, int count);

template <typename T>
Tensor<T> activation(const Tensor<T>& input, Activation kind);

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  return activation(input, Activation::relu);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input) {
  return activation(input, Activation::sigmoid);
}

// Elementwise arithmetic. Shapes must match exactly.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

/// Sum of all elements as a (1, 1, 1, 1) tensor. Accumulates in double, in index order.
template <typename T>
Tensor<T> sum(const Tensor<T>& a);
template <typename T>
Tensor<T> mean(const Tensor<T>& a);

}  // namespace aquaseg
